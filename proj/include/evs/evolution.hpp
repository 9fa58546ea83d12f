#pragma once

/// @file evolution.hpp
/// @brief Generational search over square decoding matrices.
///
/// One search run keeps a pool of M survivors. Each generation the pool is
/// ranked by dev-set accuracy, truncated to the best M (stable, so earlier
/// members win ties), and refilled with exactly M offspring produced by
/// roulette selection, row crossover and multiplicative mutation.
///
/// All random decisions come from a single Rng consumed in a fixed serial
/// order. Fitness evaluation is pure and may run on several threads without
/// changing the result.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "evs/core.hpp"
#include "evs/errors.hpp"
#include "evs/matrix.hpp"
#include "evs/types.hpp"

namespace evs {

/// Seeded 64-bit generator with a portable [0,1) mapping.
///
/// std::uniform_real_distribution is implementation-defined, so uniforms are
/// built directly from the top 53 bits of mt19937_64 output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

enum class MutationStrategy {
    hadamard,        // elementwise product with factors in [0.5, 1.5)
    matrix_product,  // genome x factor matrix with entries in [0.5, 1.5)
};

inline std::string to_string(MutationStrategy s) {
    return s == MutationStrategy::hadamard ? "hadamard" : "matrix_product";
}

inline MutationStrategy parse_mutation_strategy(const std::string& s) {
    if (s == "hadamard") return MutationStrategy::hadamard;
    if (s == "matrix_product") return MutationStrategy::matrix_product;
    throw ConfigError("unknown mutation strategy '" + s + "' (expected hadamard or matrix_product)");
}

struct EvolutionConfig {
    std::size_t population_size = 30;
    std::size_t max_iterations = 5;
    double crossover_prob = 0.8;
    double mutation_prob = 0.1;
    std::size_t n_candidates = 1000;
    std::size_t n_label_words = 100;
    std::uint64_t seed = 0;
    MutationStrategy mutation_strategy = MutationStrategy::hadamard;

    void validate() const {
        if (population_size < 2) {
            throw ConfigError("population size must be at least 2, got " + std::to_string(population_size));
        }
        if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) {
            throw ConfigError("crossover probability must be in [0, 1]");
        }
        if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) {
            throw ConfigError("mutation probability must be in [0, 1]");
        }
        if (n_candidates == 0) throw ConfigError("N_c must be positive");
        if (n_label_words == 0) throw ConfigError("N_l must be positive");
        if (n_label_words > n_candidates) {
            throw ConfigError("N_l exceeds N_c (" + std::to_string(n_label_words) + " > " +
                              std::to_string(n_candidates) + ")");
        }
    }
};

struct Population {
    std::vector<Individual> members;
    std::size_t generation = 0;
};

/// Member 0 is the identity; the rest have i.i.d. U[0,1) entries.
inline Population init_population(const EvolutionConfig& config, Rng& rng) {
    config.validate();
    const std::size_t side = config.n_candidates;
    Population pop;
    pop.members.reserve(config.population_size);
    pop.members.push_back({MatrixD::identity(side), std::nullopt});
    for (std::size_t m = 1; m < config.population_size; ++m) {
        MatrixD g(side, side);
        for (double& x : g.data()) x = rng.uniform();
        pop.members.push_back({std::move(g), std::nullopt});
    }
    return pop;
}

inline Population init_population(const EvolutionConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    return init_population(config, rng);
}

/// Fitness-proportional draw of one member index; uniform when all fitness is 0.
inline std::size_t roulette_index(std::span<const Individual> members, Rng& rng) {
    if (members.empty()) throw ValidationError("roulette selection on an empty population");
    double total = 0.0;
    for (const auto& m : members) {
        if (!m.cached_fitness) throw ValidationError("roulette selection requires evaluated fitness");
        total += *m.cached_fitness;
    }
    const double u = rng.uniform();
    if (total <= 0.0) {
        auto i = static_cast<std::size_t>(u * static_cast<double>(members.size()));
        return std::min(i, members.size() - 1);
    }
    const double target = u * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const double f = *members[i].cached_fitness;
        if (f <= 0.0) continue;
        last_positive = i;
        acc += f;
        if (target < acc) return i;
    }
    // rounding left target == total
    return last_positive;
}

/// Two independent roulette draws (the same member may be returned twice).
inline std::pair<std::size_t, std::size_t> roulette_select_indices(const Population& population, Rng& rng) {
    const std::size_t a = roulette_index(population.members, rng);
    const std::size_t b = roulette_index(population.members, rng);
    return {a, b};
}

inline std::pair<Individual, Individual> roulette_select(const Population& population, Rng& rng) {
    auto [a, b] = roulette_select_indices(population, rng);
    return {population.members[a], population.members[b]};
}

/// Offspring takes row r from b where from_b[r] is true, else from a.
inline Individual crossover_with_mask(const Individual& a, const Individual& b, const std::vector<bool>& from_b) {
    if (a.genome.rows() != b.genome.rows() || a.genome.cols() != b.genome.cols()) {
        throw ShapeError("crossover parents have different genome shapes");
    }
    if (from_b.size() != a.genome.rows()) throw ShapeError("crossover mask length does not match genome side");
    Individual child{a.genome, std::nullopt};
    for (std::size_t r = 0; r < from_b.size(); ++r) {
        if (from_b[r]) std::ranges::copy(b.genome.row(r), child.genome.row(r).begin());
    }
    return child;
}

/// Uniform row crossover; for side >= 2 each parent contributes at least one row.
inline Individual crossover(const Individual& a, const Individual& b, Rng& rng) {
    if (a.genome.rows() != b.genome.rows() || a.genome.cols() != b.genome.cols()) {
        throw ShapeError("crossover parents have different genome shapes");
    }
    const std::size_t side = a.genome.rows();
    std::vector<bool> mask(side);
    for (;;) {
        std::size_t taken = 0;
        for (std::size_t r = 0; r < side; ++r) {
            mask[r] = rng.bernoulli(0.5);
            taken += mask[r] ? 1 : 0;
        }
        if (side < 2 || (taken != 0 && taken != side)) break;
    }
    return crossover_with_mask(a, b, mask);
}

inline Individual mutate(const Individual& x, Rng& rng, MutationStrategy strategy = MutationStrategy::hadamard) {
    const std::size_t rows = x.genome.rows();
    const std::size_t cols = x.genome.cols();
    if (strategy == MutationStrategy::hadamard) {
        Individual child{x.genome, std::nullopt};
        for (double& v : child.genome.data()) v *= rng.uniform(0.5, 1.5);
        return child;
    }
    if (rows != cols) throw ShapeError("matrix-product mutation needs a square genome");
    MatrixD factor(cols, cols);
    for (double& v : factor.data()) v = rng.uniform(0.5, 1.5);
    MatrixD out(rows, cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < cols; ++k) {
            const double a = x.genome(i, k);
            auto f = factor.row(k);
            for (std::size_t j = 0; j < cols; ++j) dst[j] += a * f[j];
        }
    }
    return {std::move(out), std::nullopt};
}

/// Everything a fitness evaluation reads. All members are borrowed.
struct SearchProblem {
    const LogitSet& dev;
    const CandidateSet& candidates;
    const Vocabulary& vocab;
    std::size_t n_label_words;

    Verbalizer verbalizer_of(const MatrixD& genome) const {
        return extract_verbalizer(decode(candidates, genome), candidates, vocab, n_label_words);
    }

    double score(const MatrixD& genome) const { return fitness(verbalizer_of(genome), dev); }
};

/// Fills cached_fitness for every member that lacks it.
inline void evaluate_population(std::vector<Individual>& members, const SearchProblem& problem,
                                std::size_t threads = 1) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (!members[i].cached_fitness) todo.push_back(i);
    }
    if (todo.empty()) return;
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, todo.size());
    if (workers == 1) {
        for (std::size_t i : todo) members[i].cached_fitness = problem.score(members[i].genome);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < todo.size(); t = next++) {
                    try {
                        members[todo[t]].cached_fitness = problem.score(members[todo[t]].genome);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

struct GenerationStats {
    std::size_t generation = 0;
    std::size_t pool_before_selection = 0;  // M at generation 0, 2M afterwards
    std::size_t pool_after_selection = 0;
    std::size_t offspring = 0;
    double best_fitness = 0.0;  // over survivors + offspring
    double mean_fitness = 0.0;
    double seconds = 0.0;
};

struct SearchResult {
    Individual best;
    Verbalizer verbalizer;
    double initial_best_fitness = 0.0;
    std::vector<GenerationStats> history;
};

struct SearchOptions {
    std::size_t threads = 1;
    std::function<void(const GenerationStats&)> on_generation;
};

namespace detail {

inline std::size_t first_best(const std::vector<Individual>& members) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < members.size(); ++i) {
        if (*members[i].cached_fitness > *members[best].cached_fitness) best = i;
    }
    return best;
}

} // namespace detail

inline SearchResult evolve(const LogitSet& dev, const CandidateSet& candidates, const Vocabulary& vocab,
                           const EvolutionConfig& config, const SearchOptions& options = {}) {
    config.validate();
    if (candidates.num_candidates() != config.n_candidates) {
        throw ShapeError("candidate set has N_c=" + std::to_string(candidates.num_candidates()) +
                         " but config asks for " + std::to_string(config.n_candidates));
    }
    if (candidates.num_labels() != dev.num_labels) {
        throw ShapeError("candidate set has " + std::to_string(candidates.num_labels()) +
                         " labels, dev set has " + std::to_string(dev.num_labels));
    }
    const SearchProblem problem{dev, candidates, vocab, config.n_label_words};
    const std::size_t m = config.population_size;

    Rng rng(config.seed);
    Population pop = init_population(config, rng);
    evaluate_population(pop.members, problem, options.threads);

    SearchResult result;
    result.initial_best_fitness = *pop.members[detail::first_best(pop.members)].cached_fitness;

    for (std::size_t gen = 0; gen < config.max_iterations; ++gen) {
        const auto started = std::chrono::steady_clock::now();
        GenerationStats stats;
        stats.generation = gen;

        evaluate_population(pop.members, problem, options.threads);
        stats.pool_before_selection = pop.members.size();
        std::stable_sort(pop.members.begin(), pop.members.end(), [](const Individual& a, const Individual& b) {
            return *a.cached_fitness > *b.cached_fitness;
        });
        if (pop.members.size() > m) pop.members.resize(m);
        stats.pool_after_selection = pop.members.size();

        std::vector<Individual> offspring;
        offspring.reserve(m);
        while (offspring.size() < m) {
            auto [i, j] = roulette_select_indices(pop, rng);
            Individual child = rng.bernoulli(config.crossover_prob)
                                   ? crossover(pop.members[i], pop.members[j], rng)
                                   : Individual{pop.members[i].genome, std::nullopt};
            if (rng.bernoulli(config.mutation_prob)) child = mutate(child, rng, config.mutation_strategy);
            offspring.push_back(std::move(child));
        }
        stats.offspring = offspring.size();
        for (auto& child : offspring) pop.members.push_back(std::move(child));
        pop.generation = gen + 1;

        evaluate_population(pop.members, problem, options.threads);
        double sum = 0.0;
        for (const auto& member : pop.members) sum += *member.cached_fitness;
        stats.best_fitness = *pop.members[detail::first_best(pop.members)].cached_fitness;
        stats.mean_fitness = sum / static_cast<double>(pop.members.size());
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.history.push_back(stats);
        if (options.on_generation) options.on_generation(stats);
    }

    result.best = pop.members[detail::first_best(pop.members)];
    result.verbalizer = problem.verbalizer_of(result.best.genome);
    return result;
}

} // namespace evs
