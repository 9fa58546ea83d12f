// evs: evolutionary verbalizer search over cached mask-position distributions.
//
//   evs search --logits dev.evsl --vocab vocab.txt --out verbalizer.json
//   evs eval   --verbalizer verbalizer.json --logits test.evsl
//   evs oracle --logits dev.evsl --vocab vocab.txt --candidates 6 --label-words 2
//   evs synth  --labels 4 --vocab 40 --per-label 16 --signal-words 2 --signal-mass 0.6 --seed 1 ...
//   evs sweep  --param population --values 2,8,30 --logits ... --vocab ...

#include <algorithm>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "evs/cli.hpp"

namespace {

void add_search_flags(CLI::App& cmd, evs::cli::SearchArgs& a, bool out_required) {
    cmd.add_option("--logits", a.logits, "EVSL1 dev-set logits file")->required();
    cmd.add_option("--vocab", a.vocab, "vocabulary file, one token per line")->required();
    auto* out = cmd.add_option("--out", a.out, "verbalizer JSON output path");
    if (out_required) out->required();
    cmd.add_option("--config", a.config, "flat JSON config with EvolutionConfig field names");
    cmd.add_option("--report", a.report, "write the run report JSON here");
    cmd.add_option("--seed", a.overrides.seed, "RNG seed");
    cmd.add_option("--population", a.overrides.population_size, "population size M (default 30)");
    cmd.add_option("--iterations", a.overrides.max_iterations, "generations N_iter (default 5)");
    cmd.add_option("--candidates", a.overrides.n_candidates, "candidates per label N_c (default 1000)");
    cmd.add_option("--label-words", a.overrides.n_label_words, "label words per label N_l (default 100)");
    cmd.add_option("--crossover-prob", a.overrides.crossover_prob, "crossover probability P_c (default 0.8)");
    cmd.add_option("--mutation-prob", a.overrides.mutation_prob, "mutation probability P_m (default 0.1)");
    cmd.add_option("--mutation", a.overrides.mutation_strategy, "hadamard (default) or matrix_product");
    cmd.add_option("--threads", a.threads, "fitness evaluation threads");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolutionary verbalizer search"};
    app.require_subcommand(1);

    evs::cli::SearchArgs search;
    search.threads = std::max(1u, std::thread::hardware_concurrency());
    auto* search_cmd = app.add_subcommand("search", "evolve a verbalizer on a dev set");
    add_search_flags(*search_cmd, search, true);

    evs::cli::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "score a verbalizer (micro-F1)");
    eval_cmd->add_option("--verbalizer", eval.verbalizer, "verbalizer JSON")->required();
    eval_cmd->add_option("--logits", eval.logits, "EVSL1 logits file")->required();

    evs::cli::OracleArgs oracle;
    auto* oracle_cmd = app.add_subcommand("oracle", "exhaustive best verbalizer over the candidate sets");
    oracle_cmd->add_option("--logits", oracle.logits)->required();
    oracle_cmd->add_option("--vocab", oracle.vocab)->required();
    oracle_cmd->add_option("--candidates", oracle.n_candidates)->required();
    oracle_cmd->add_option("--label-words", oracle.n_label_words)->required();
    oracle_cmd->add_option("--cap", oracle.cap, "maximum number of joint assignments");

    evs::cli::SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a planted synthetic instance");
    synth_cmd->add_option("--labels", synth.spec.num_labels)->required();
    synth_cmd->add_option("--vocab", synth.spec.vocab_size)->required();
    synth_cmd->add_option("--per-label", synth.spec.instances_per_label)->required();
    synth_cmd->add_option("--signal-words", synth.spec.signal_words_per_label)->required();
    synth_cmd->add_option("--signal-mass", synth.spec.signal_mass)->required();
    synth_cmd->add_option("--noise", synth.spec.noise, "multiplicative noise amplitude (default 0)");
    synth_cmd->add_option("--seed", synth.spec.noise_seed)->required();
    synth_cmd->add_option("--out-logits", synth.out_logits)->required();
    synth_cmd->add_option("--out-vocab", synth.out_vocab)->required();
    synth_cmd->add_option("--out-answer", synth.out_answer)->required();

    evs::cli::SweepArgs sweep;
    sweep.search.threads = search.threads;
    std::string sweep_param;
    auto* sweep_cmd = app.add_subcommand("sweep", "repeat search over population sizes or iteration counts");
    sweep_cmd->add_option("--param", sweep_param, "population or iterations")->required();
    sweep_cmd->add_option("--values", sweep.values, "comma-separated values")->required()->delimiter(',');
    add_search_flags(*sweep_cmd, sweep.search, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : evs::cli::kExitValidation;
    }

    if (*search_cmd) return evs::cli::run_search(search, std::cout, std::cerr);
    if (*eval_cmd) return evs::cli::run_eval(eval, std::cout, std::cerr);
    if (*oracle_cmd) return evs::cli::run_oracle(oracle, std::cout, std::cerr);
    if (*synth_cmd) return evs::cli::run_synth(synth, std::cout, std::cerr);
    if (*sweep_cmd) {
        return evs::cli::guarded(std::cerr, [&] {
            sweep.param = evs::cli::parse_sweep_param(sweep_param);
            return evs::cli::run_sweep(sweep, std::cout, std::cerr);
        });
    }
    return evs::cli::kExitValidation;
}
