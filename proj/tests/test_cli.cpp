#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "evs/cli.hpp"
#include "support.hpp"

using namespace evs;
using evs::test::slurp;
using evs::test::TempDir;

namespace {

struct Fixture {
    std::filesystem::path logits;
    std::filesystem::path vocab;
    std::filesystem::path answer;
};

Fixture synth(const TempDir& dir, const testkit::PlantedSpec& spec, const std::string& stem = "planted") {
    cli::SynthArgs args{spec, dir / (stem + ".evsl"), dir / (stem + ".vocab"), dir / (stem + ".answer.json")};
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_synth(args, out, err), 0) << err.str();
    return {args.out_logits, args.out_vocab, args.out_answer};
}

testkit::PlantedSpec tiny_spec(std::uint64_t seed = 1) {
    testkit::PlantedSpec s;
    s.num_labels = 2;
    s.vocab_size = 20;
    s.instances_per_label = 8;
    s.signal_words_per_label = 2;
    s.signal_mass = 0.6;
    s.noise = 0.5;
    s.noise_seed = seed;
    return s;
}

cli::SearchArgs search_args(const Fixture& f, const std::filesystem::path& out) {
    cli::SearchArgs a;
    a.logits = f.logits;
    a.vocab = f.vocab;
    a.out = out;
    return a;
}

int run_binary(const std::string& args, const std::filesystem::path& stdout_file) {
    const std::string cmd = std::string(EVS_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST(CliSearch, DefaultsOnPlantedFixtureReachPerfectFitness) {
    TempDir dir;
    testkit::PlantedSpec spec;
    spec.num_labels = 2;
    spec.vocab_size = 1000;
    spec.instances_per_label = 8;
    spec.signal_words_per_label = 100;
    spec.signal_mass = 0.6;
    spec.noise = 0.5;
    auto f = synth(dir, spec);
    auto args = search_args(f, dir / "v.json");
    args.overrides.seed = 7;
    args.report = dir / "report.json";
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_search(args, out, err), 0) << err.str();

    auto report = json::parse(slurp(*args.report));
    EXPECT_EQ(report["best_fitness"], 1.0);
    EXPECT_EQ(report["config"]["population_size"], 30);
    EXPECT_EQ(report["config"]["max_iterations"], 5);
    EXPECT_EQ(report["config"]["n_candidates"], 1000);
    EXPECT_EQ(report["config"]["n_label_words"], 100);
    EXPECT_EQ(report["config"]["crossover_prob"], 0.8);
    EXPECT_EQ(report["config"]["mutation_prob"], 0.1);
    EXPECT_EQ(report["history"].size(), 5u);

    auto doc = read_verbalizer_file(dir / "v.json");
    EXPECT_EQ(doc.verbalizer.num_labels(), 2u);
    EXPECT_EQ(doc.verbalizer.words_per_label(), 100u);
    EXPECT_EQ(json::parse(out.str())["best_fitness"], 1.0);
}

TEST(CliSearch, CandidatesBeyondVocabularyIsExit2) {
    TempDir dir;
    auto spec = tiny_spec();
    spec.vocab_size = 5;
    spec.signal_words_per_label = 1;
    auto f = synth(dir, spec);
    auto args = search_args(f, dir / "v.json");
    args.overrides.n_candidates = 10;
    args.overrides.n_label_words = 2;
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_search(args, out, err), 2);
    EXPECT_NE(err.str().find("N_c exceeds vocabulary size"), std::string::npos);
}

TEST(CliSearch, SameSeedByteIdenticalAcrossThreadCounts) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    auto a = search_args(f, dir / "a.json");
    a.overrides.n_candidates = 6;
    a.overrides.n_label_words = 2;
    a.overrides.seed = 3;
    auto b = a;
    b.out = dir / "b.json";
    b.threads = 4;
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_search(a, out, err), 0) << err.str();
    ASSERT_EQ(cli::run_search(b, out, err), 0) << err.str();
    EXPECT_EQ(slurp(a.out), slurp(b.out));
}

TEST(CliSearch, ConfigFileLayering) {
    TempDir dir;
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"population_size": 8, "max_iterations": 3, "n_candidates": 6, "n_label_words": 2, "seed": 5})";
    }
    cli::ConfigOverrides o;
    auto c = cli::resolve_config(dir / "cfg.json", o);
    EXPECT_EQ(c.population_size, 8u);
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.crossover_prob, 0.8);
    o.population_size = 4;
    o.mutation_prob = 0.3;
    c = cli::resolve_config(dir / "cfg.json", o);
    EXPECT_EQ(c.population_size, 4u);
    EXPECT_EQ(c.mutation_prob, 0.3);
    EXPECT_EQ(c.max_iterations, 3u);
    EXPECT_THROW(cli::resolve_config(dir / "missing.json", o), IoError);
}

TEST(CliSearch, MissingInputIsExit1) {
    TempDir dir;
    cli::SearchArgs a;
    a.logits = dir / "nope.evsl";
    a.vocab = dir / "nope.vocab";
    a.out = dir / "v.json";
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_search(a, out, err), 1);
}

TEST(CliSearch, VocabularyLengthMismatchIsExit2) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    {
        std::ofstream v(dir / "short.vocab");
        v << "a\nb\n";
    }
    auto a = search_args(f, dir / "v.json");
    a.vocab = dir / "short.vocab";
    a.overrides.n_candidates = 2;
    a.overrides.n_label_words = 1;
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_search(a, out, err), 2);
}

TEST(CliEval, PlantedAndAntiPlanted) {
    TempDir dir;
    auto spec = tiny_spec();
    spec.signal_mass = 0.9;
    spec.noise = 0.0;
    auto f = synth(dir, spec);
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_eval({f.answer, f.logits}, out, err), 0) << err.str();
    EXPECT_EQ(out.str(), "{\"micro_f1\": 1.0000, \"num_instances\": 16}\n");

    auto doc = read_verbalizer_file(f.answer);
    std::swap(doc.verbalizer.labels[0], doc.verbalizer.labels[1]);
    write_verbalizer_file(doc, dir / "anti.json");
    std::ostringstream out2;
    ASSERT_EQ(cli::run_eval({dir / "anti.json", f.logits}, out2, err), 0);
    EXPECT_EQ(json::parse(out2.str())["micro_f1"], 0.0);
    EXPECT_NE(out2.str().find("0.0000"), std::string::npos);
}

TEST(CliEval, RandomVerbalizerNearChance) {
    TempDir dir;
    testkit::PlantedSpec spec;
    spec.num_labels = 2;
    spec.vocab_size = 50;
    spec.instances_per_label = 100;
    spec.signal_words_per_label = 2;
    spec.signal_mass = 0.6;
    spec.noise = 1.0;
    spec.noise_seed = 12;
    auto f = synth(dir, spec);
    // words outside both signal blocks carry no label information
    VerbalizerDocument doc;
    doc.verbalizer.labels = {{{10, "tok10"}, {17, "tok17"}}, {{23, "tok23"}, {31, "tok31"}}};
    write_verbalizer_file(doc, dir / "random.json");
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_eval({dir / "random.json", f.logits}, out, err), 0);
    EXPECT_NEAR(json::parse(out.str())["micro_f1"].get<double>(), 0.5, 0.15);
}

TEST(CliEval, DimensionMismatchIsExit2) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    VerbalizerDocument doc;
    doc.verbalizer.labels = {{{0, "a"}}, {{99, "b"}}};
    write_verbalizer_file(doc, dir / "bad_id.json");
    doc.verbalizer.labels = {{{0, "a"}}, {{1, "b"}}, {{2, "c"}}};
    write_verbalizer_file(doc, dir / "bad_labels.json");
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_eval({dir / "bad_id.json", f.logits}, out, err), 2);
    EXPECT_EQ(cli::run_eval({dir / "bad_labels.json", f.logits}, out, err), 2);
}

TEST(CliOracle, TinyPlantedIsPerfectAndCapRefusalNamesCount) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_oracle({f.logits, f.vocab, 6, 2}, out, err), 0) << err.str();
    auto j = json::parse(out.str());
    EXPECT_EQ(j["best_fitness"], 1.0);
    EXPECT_EQ(j["evaluated"], 225);

    std::ostringstream out2, err2;
    EXPECT_EQ(cli::run_oracle({f.logits, f.vocab, 6, 2, 100}, out2, err2), 2);
    EXPECT_NE(err2.str().find("225"), std::string::npos);
}

TEST(CliOracle, AgreesWithSearchOnTinyInstances) {
    TempDir dir;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto spec = tiny_spec(seed);
        spec.signal_mass = 0.3;
        spec.noise = 3.0;
        auto f = synth(dir, spec, "s" + std::to_string(seed));
        std::ostringstream o1, o2, err;
        ASSERT_EQ(cli::run_oracle({f.logits, f.vocab, 5, 2}, o1, err), 0);
        auto a = search_args(f, dir / "v.json");
        a.overrides.n_candidates = 5;
        a.overrides.n_label_words = 2;
        a.overrides.max_iterations = 20;
        a.overrides.seed = seed;
        ASSERT_EQ(cli::run_search(a, o2, err), 0);
        const double oracle = json::parse(o1.str())["best_fitness"];
        const double found = json::parse(o2.str())["best_fitness"];
        EXPECT_LE(found, oracle);
        EXPECT_EQ(found, oracle) << "seed " << seed;
    }
}

TEST(CliSynth, DeterministicAndValidated) {
    TempDir dir;
    auto a = synth(dir, tiny_spec(9), "a");
    auto b = synth(dir, tiny_spec(9), "b");
    EXPECT_EQ(slurp(a.logits), slurp(b.logits));
    EXPECT_EQ(slurp(a.vocab), slurp(b.vocab));
    EXPECT_NO_THROW(read_logits_file(a.logits));

    auto bad = tiny_spec();
    bad.signal_words_per_label = 15;
    cli::SynthArgs args{bad, dir / "x.evsl", dir / "x.vocab", dir / "x.json"};
    std::ostringstream out, err;
    EXPECT_EQ(cli::run_synth(args, out, err), 2);
}

TEST(CliSweep, OneEntryPerValueWithMonotoneHistories) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    cli::SweepArgs s;
    s.param = cli::SweepParam::population;
    s.values = {2, 8, 30};
    s.search = search_args(f, {});
    s.search.overrides.n_candidates = 6;
    s.search.overrides.n_label_words = 2;
    s.search.overrides.seed = 10;
    s.search.report = dir / "sweep.json";
    std::ostringstream out, err;
    ASSERT_EQ(cli::run_sweep(s, out, err), 0) << err.str();
    auto j = json::parse(out.str());
    ASSERT_EQ(j["runs"].size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& run = j["runs"][i];
        EXPECT_EQ(run["value"], s.values[i]);
        EXPECT_EQ(run["config"]["population_size"], s.values[i]);
        EXPECT_EQ(run["config"]["seed"], 10 + i);
        double prev = run["initial_best_fitness"];
        for (const auto& g : run["history"]) {
            EXPECT_GE(g["best_fitness"].get<double>(), prev);
            prev = g["best_fitness"];
        }
    }
    EXPECT_EQ(json::parse(slurp(dir / "sweep.json")), j);

    s.param = cli::SweepParam::iterations;
    s.values = {1, 3};
    std::ostringstream out2;
    ASSERT_EQ(cli::run_sweep(s, out2, err), 0);
    auto k = json::parse(out2.str());
    EXPECT_EQ(k["runs"][1]["history"].size(), 3u);
    EXPECT_THROW(cli::parse_sweep_param("mutation"), ConfigError);
}

TEST(CliBinary, ExitCodesAndSingleJsonStdout) {
    TempDir dir;
    auto f = synth(dir, tiny_spec());
    const auto log = dir / "stdout.txt";
    const std::string common = " --logits " + f.logits.string() + " --vocab " + f.vocab.string();
    EXPECT_EQ(run_binary("search" + common + " --out " + (dir / "v.json").string() +
                             " --candidates 6 --label-words 2 --seed 1",
                         log),
              0);
    EXPECT_NO_THROW(json::parse(slurp(log)));
    EXPECT_EQ(run_binary("search" + common + " --out " + (dir / "v.json").string() + " --candidates 100", log), 2);
    EXPECT_EQ(run_binary("search --logits " + (dir / "missing").string() + " --vocab x --out " +
                             (dir / "v.json").string(),
                         log),
              1);
    EXPECT_EQ(run_binary("frobnicate", log), 2);
    EXPECT_EQ(run_binary("eval --verbalizer " + f.answer.string() + " --logits " + f.logits.string(), log), 0);
    EXPECT_EQ(json::parse(slurp(log))["num_instances"], 16);
    EXPECT_EQ(run_binary("sweep --param population --values 2,4" + common + " --candidates 6 --label-words 2", log), 0);
    EXPECT_EQ(json::parse(slurp(log))["runs"].size(), 2u);
    EXPECT_EQ(run_binary("sweep --param colour --values 2" + common, log), 2);
}
