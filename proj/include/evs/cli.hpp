#pragma once

// Command implementations behind the `evs` executable.
//
// Each run_* function takes parsed arguments plus output/error streams and
// returns the process exit code: 0 success, 1 I/O failure, 2 validation or
// configuration error. Stdout always receives exactly one JSON document.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evs/core.hpp"
#include "evs/errors.hpp"
#include "evs/evolution.hpp"
#include "evs/formats.hpp"
#include "evs/testkit.hpp"

namespace evs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;

/// Runs `body`, translating exceptions into exit codes and a stderr message.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kExitIo;
    }
}

/// Flag overrides for EvolutionConfig; unset fields fall through.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> population_size;
    std::optional<std::size_t> max_iterations;
    std::optional<std::size_t> n_candidates;
    std::optional<std::size_t> n_label_words;
    std::optional<double> crossover_prob;
    std::optional<double> mutation_prob;
    std::optional<std::string> mutation_strategy;
};

struct SearchArgs {
    std::filesystem::path logits;
    std::filesystem::path vocab;
    std::filesystem::path out;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> report;
    ConfigOverrides overrides;
    std::size_t threads = 1;
};

/// defaults < config file < flags.
inline EvolutionConfig resolve_config(const std::optional<std::filesystem::path>& config_path,
                                      const ConfigOverrides& o) {
    EvolutionConfig c;
    if (config_path) c = read_config_file(*config_path, c);
    if (o.seed) c.seed = *o.seed;
    if (o.population_size) c.population_size = *o.population_size;
    if (o.max_iterations) c.max_iterations = *o.max_iterations;
    if (o.n_candidates) c.n_candidates = *o.n_candidates;
    if (o.n_label_words) c.n_label_words = *o.n_label_words;
    if (o.crossover_prob) c.crossover_prob = *o.crossover_prob;
    if (o.mutation_prob) c.mutation_prob = *o.mutation_prob;
    if (o.mutation_strategy) c.mutation_strategy = parse_mutation_strategy(*o.mutation_strategy);
    c.validate();
    return c;
}

inline void check_vocab_matches(const LogitSet& logits, const Vocabulary& vocab) {
    if (vocab.size() != logits.vocab_size()) {
        throw ShapeError("vocabulary has " + std::to_string(vocab.size()) + " tokens but logits have vocab_size " +
                         std::to_string(logits.vocab_size()));
    }
}

/// N_c <= V is checked here so the message names the vocabulary.
inline CandidateSet candidates_for(const LogitSet& logits, std::size_t n_candidates) {
    if (n_candidates > logits.vocab_size()) {
        throw ConfigError("N_c exceeds vocabulary size (" + std::to_string(n_candidates) + " > " +
                          std::to_string(logits.vocab_size()) + ")");
    }
    return encode(label_means(logits), n_candidates);
}

inline json history_to_json(const std::vector<GenerationStats>& history) {
    json out = json::array();
    for (const auto& g : history) {
        json entry;
        entry["generation"] = g.generation;
        entry["pool_before_selection"] = g.pool_before_selection;
        entry["pool_after_selection"] = g.pool_after_selection;
        entry["offspring"] = g.offspring;
        entry["best_fitness"] = g.best_fitness;
        entry["mean_fitness"] = g.mean_fitness;
        entry["seconds"] = g.seconds;
        out.push_back(std::move(entry));
    }
    return out;
}

/// SearchRunReport as JSON.
inline json search_report(const EvolutionConfig& config, const SearchResult& result,
                          const std::optional<std::filesystem::path>& verbalizer_path) {
    json r;
    r["config"] = config_to_json(config);
    r["initial_best_fitness"] = result.initial_best_fitness;
    r["best_fitness"] = *result.best.cached_fitness;
    r["history"] = history_to_json(result.history);
    r["verbalizer_path"] = verbalizer_path ? json(verbalizer_path->string()) : json(nullptr);
    return r;
}

inline SearchResult search(const LogitSet& logits, const Vocabulary& vocab, const EvolutionConfig& config,
                           std::size_t threads) {
    check_vocab_matches(logits, vocab);
    const CandidateSet candidates = candidates_for(logits, config.n_candidates);
    SearchOptions options;
    options.threads = threads;
    return evolve(logits, candidates, vocab, config, options);
}

inline void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline int run_search(const SearchArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const EvolutionConfig config = resolve_config(args.config, args.overrides);
        const LogitSet logits = read_logits_file(args.logits);
        const Vocabulary vocab = read_vocab_file(args.vocab);
        const SearchResult result = search(logits, vocab, config, args.threads);

        write_verbalizer_file({result.verbalizer, *result.best.cached_fitness, config_to_json(config), config.seed},
                              args.out);
        const json report = search_report(config, result, args.out);
        if (args.report) write_json_file(report, *args.report);

        json summary;
        summary["best_fitness"] = *result.best.cached_fitness;
        summary["initial_best_fitness"] = result.initial_best_fitness;
        summary["generations"] = result.history.size();
        summary["verbalizer_path"] = args.out.string();
        out << summary.dump() << '\n';
        return kExitOk;
    });
}

struct EvalArgs {
    std::filesystem::path verbalizer;
    std::filesystem::path logits;
};

/// Accuracy formatted to four decimals; single-label accuracy equals micro-F1.
inline std::string eval_json(double micro_f1, std::size_t instances) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "{\"micro_f1\": %.4f, \"num_instances\": %zu}", micro_f1, instances);
    return buf;
}

inline int run_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const VerbalizerDocument doc = read_verbalizer_file(args.verbalizer);
        const LogitSet logits = read_logits_file(args.logits);
        if (doc.verbalizer.num_labels() != logits.num_labels) {
            throw ShapeError("verbalizer has " + std::to_string(doc.verbalizer.num_labels()) +
                             " labels but logits have " + std::to_string(logits.num_labels));
        }
        doc.verbalizer.validate(logits.vocab_size());
        out << eval_json(fitness(doc.verbalizer, logits), logits.num_instances()) << '\n';
        return kExitOk;
    });
}

struct OracleArgs {
    std::filesystem::path logits;
    std::filesystem::path vocab;
    std::size_t n_candidates = 0;
    std::size_t n_label_words = 0;
    std::uint64_t cap = testkit::kDefaultEnumerationCap;
};

inline json oracle_json(const testkit::OracleResult& r) {
    json j;
    j["best_fitness"] = r.best_fitness;
    j["evaluated"] = r.evaluated;
    j["labels"] = verbalizer_to_json(r.best_verbalizer);
    return j;
}

inline testkit::OracleResult oracle(const LogitSet& logits, const Vocabulary& vocab, std::size_t n_candidates,
                                    std::size_t n_label_words, std::uint64_t cap) {
    check_vocab_matches(logits, vocab);
    if (n_label_words > n_candidates) throw ConfigError("N_l exceeds N_c");
    const CandidateSet candidates = candidates_for(logits, n_candidates);
    return testkit::exhaustive_best(logits, candidates, vocab, n_label_words, cap);
}

inline int run_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const LogitSet logits = read_logits_file(args.logits);
        const Vocabulary vocab = read_vocab_file(args.vocab);
        out << oracle_json(oracle(logits, vocab, args.n_candidates, args.n_label_words, args.cap)).dump() << '\n';
        return kExitOk;
    });
}

struct SynthArgs {
    testkit::PlantedSpec spec;
    std::filesystem::path out_logits;
    std::filesystem::path out_vocab;
    std::filesystem::path out_answer;
};

inline json planted_spec_to_json(const testkit::PlantedSpec& s) {
    json j;
    j["num_labels"] = s.num_labels;
    j["vocab_size"] = s.vocab_size;
    j["instances_per_label"] = s.instances_per_label;
    j["signal_words_per_label"] = s.signal_words_per_label;
    j["signal_mass"] = s.signal_mass;
    j["noise"] = s.noise;
    return j;
}

inline int run_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const testkit::PlantedInstance inst = testkit::generate_planted(args.spec);
        inst.logits.validate();
        write_logits_file(inst.logits, args.out_logits);
        write_vocab_file(inst.vocab, args.out_vocab);
        const double answer_fitness = fitness(inst.answer, inst.logits);
        write_verbalizer_file({inst.answer, answer_fitness, planted_spec_to_json(args.spec), args.spec.noise_seed},
                              args.out_answer);
        json summary;
        summary["num_instances"] = inst.logits.num_instances();
        summary["vocab_size"] = inst.logits.vocab_size();
        summary["num_labels"] = inst.logits.num_labels;
        summary["answer_fitness"] = answer_fitness;
        out << summary.dump() << '\n';
        return kExitOk;
    });
}

enum class SweepParam { population, iterations };

inline SweepParam parse_sweep_param(const std::string& s) {
    if (s == "population") return SweepParam::population;
    if (s == "iterations") return SweepParam::iterations;
    throw ConfigError("sweep parameter must be 'population' or 'iterations', got '" + s + "'");
}

struct SweepArgs {
    SweepParam param = SweepParam::population;
    std::vector<std::size_t> values;
    SearchArgs search;  // search.out unused; verbalizers are embedded in the report
};

/// One search per value; run i uses seed + i.
inline json sweep(const LogitSet& logits, const Vocabulary& vocab, const EvolutionConfig& base, SweepParam param,
                  const std::vector<std::size_t>& values, std::size_t threads) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    json runs = json::array();
    for (std::size_t i = 0; i < values.size(); ++i) {
        EvolutionConfig c = base;
        if (param == SweepParam::population) c.population_size = values[i];
        else c.max_iterations = values[i];
        c.seed = base.seed + i;
        c.validate();
        const SearchResult result = search(logits, vocab, c, threads);
        json entry = search_report(c, result, std::nullopt);
        entry["value"] = values[i];
        entry["labels"] = verbalizer_to_json(result.verbalizer);
        runs.push_back(std::move(entry));
    }
    json report;
    report["param"] = param == SweepParam::population ? "population" : "iterations";
    report["values"] = values;
    report["runs"] = std::move(runs);
    return report;
}

inline int run_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const EvolutionConfig base = resolve_config(args.search.config, args.search.overrides);
        const LogitSet logits = read_logits_file(args.search.logits);
        const Vocabulary vocab = read_vocab_file(args.search.vocab);
        const json report = sweep(logits, vocab, base, args.param, args.values, args.search.threads);
        if (args.search.report) write_json_file(report, *args.search.report);
        out << report.dump() << '\n';
        return kExitOk;
    });
}

} // namespace evs::cli
