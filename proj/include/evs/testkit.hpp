#pragma once

// Synthetic planted instances and an exhaustive best-verbalizer oracle.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "evs/core.hpp"
#include "evs/errors.hpp"
#include "evs/evolution.hpp"
#include "evs/types.hpp"

namespace evs::testkit {

/// Label l owns signal words [l*S, (l+1)*S). In a row of label l those words
/// share signal_mass evenly and the remaining 1 - signal_mass is spread
/// uniformly over the other V - S words. Each entry is then scaled by an
/// independent factor in [1, 1 + noise) and the row renormalized.
///
/// signal_mass = S / V therefore yields rows with no signal at all.
struct PlantedSpec {
    std::size_t num_labels = 2;
    std::size_t vocab_size = 40;
    std::size_t instances_per_label = 16;
    std::size_t signal_words_per_label = 2;
    double signal_mass = 0.6;
    double noise = 0.0;
    std::uint64_t noise_seed = 0;

    void validate() const {
        if (num_labels < 2) throw ConfigError("planted instance needs at least 2 labels");
        if (instances_per_label == 0) throw ConfigError("instances per label must be positive");
        if (signal_words_per_label == 0) throw ConfigError("signal words per label must be positive");
        if (num_labels * signal_words_per_label > vocab_size) {
            throw ConfigError("signal blocks do not fit: " + std::to_string(num_labels) + " x " +
                              std::to_string(signal_words_per_label) + " > vocab size " + std::to_string(vocab_size));
        }
        if (!(signal_mass > 0.0 && signal_mass <= 1.0)) throw ConfigError("signal mass must be in (0, 1]");
        if (signal_mass < 1.0 && vocab_size == signal_words_per_label) {
            throw ConfigError("no words left to carry the residual mass");
        }
        if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
    }
};

struct PlantedInstance {
    LogitSet logits;
    Vocabulary vocab;
    Verbalizer answer;
};

inline Vocabulary synthetic_vocab(std::size_t size) {
    Vocabulary v;
    v.tokens.reserve(size);
    for (std::size_t i = 0; i < size; ++i) v.tokens.push_back("tok" + std::to_string(i));
    return v;
}

inline PlantedInstance generate_planted(const PlantedSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_labels;
    const std::size_t v = spec.vocab_size;
    const std::size_t s = spec.signal_words_per_label;
    const std::size_t rows = n * spec.instances_per_label;

    Rng rng(spec.noise_seed);
    PlantedInstance out;
    out.vocab = synthetic_vocab(v);
    out.logits.num_labels = n;
    out.logits.probs = Matrix<float>(rows, v);
    out.logits.labels.reserve(rows);

    std::vector<double> row(v);
    for (std::size_t label = 0; label < n; ++label) {
        const std::size_t block_begin = label * s;
        const std::size_t block_end = block_begin + s;
        const double signal = spec.signal_mass / static_cast<double>(s);
        const double residual = v > s ? (1.0 - spec.signal_mass) / static_cast<double>(v - s) : 0.0;
        for (std::size_t k = 0; k < spec.instances_per_label; ++k) {
            const std::size_t r = out.logits.labels.size();
            double total = 0.0;
            for (std::size_t j = 0; j < v; ++j) {
                const double base = (j >= block_begin && j < block_end) ? signal : residual;
                row[j] = base * (1.0 + spec.noise * rng.uniform());
                total += row[j];
            }
            auto dst = out.logits.probs.row(r);
            for (std::size_t j = 0; j < v; ++j) dst[j] = static_cast<float>(row[j] / total);
            out.logits.labels.push_back(label);
        }
    }

    out.answer.labels.resize(n);
    for (std::size_t label = 0; label < n; ++label) {
        for (std::size_t j = label * s; j < (label + 1) * s; ++j) out.answer.labels[label].push_back({j, out.vocab.tokens[j]});
    }
    return out;
}

// ---- exhaustive oracle ---------------------------------------------------

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Binomial coefficient; returns false on 64-bit overflow.
inline bool checked_binomial(std::uint64_t n, std::uint64_t k, std::uint64_t& out) {
    if (k > n) {
        out = 0;
        return true;
    }
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        // r * (n - k + i) / i is always integral
        const std::uint64_t num = n - k + i;
        const std::uint64_t g = std::gcd(r, i);
        const std::uint64_t reduced_r = r / g;
        const std::uint64_t reduced_i = i / g;
        const std::uint64_t num_div = num / reduced_i;
        if (num_div != 0 && reduced_r > std::numeric_limits<std::uint64_t>::max() / num_div) return false;
        r = reduced_r * num_div;
    }
    out = r;
    return true;
}

/// Number of joint assignments: product over labels of C(N_c, N_l).
inline std::uint64_t count_assignments(std::size_t num_labels, std::size_t n_candidates, std::size_t n_label_words,
                                       bool& overflowed) {
    overflowed = false;
    std::uint64_t per_label = 0;
    if (!checked_binomial(n_candidates, n_label_words, per_label)) {
        overflowed = true;
        return 0;
    }
    std::uint64_t total = 1;
    for (std::size_t l = 0; l < num_labels; ++l) {
        if (per_label != 0 && total > std::numeric_limits<std::uint64_t>::max() / per_label) {
            overflowed = true;
            return 0;
        }
        total *= per_label;
    }
    return total;
}

/// All k-subsets of {0..n-1}, lexicographic.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    if (k > n) return out;
    std::vector<std::size_t> c(k);
    std::iota(c.begin(), c.end(), std::size_t{0});
    for (;;) {
        out.push_back(c);
        std::size_t i = k;
        while (i > 0 && c[i - 1] == n - k + (i - 1)) --i;
        if (i == 0) break;
        ++c[i - 1];
        for (std::size_t j = i; j < k; ++j) c[j] = c[j - 1] + 1;
    }
    return out;
}

namespace detail {

/// Odometer step with the last label turning fastest; false after the last state.
inline bool advance(std::vector<std::size_t>& choice, std::size_t radix) {
    for (std::size_t l = choice.size(); l-- > 0;) {
        if (++choice[l] < radix) return true;
        choice[l] = 0;
    }
    return false;
}

} // namespace detail

struct OracleResult {
    double best_fitness = 0.0;
    Verbalizer best_verbalizer;
    std::uint64_t evaluated = 0;
};

/// Scores every choice of n_label_words candidates per label and returns the
/// most accurate joint assignment. Label 0's choice varies slowest; the first
/// assignment reaching the maximum wins.
inline OracleResult exhaustive_best(const LogitSet& dev, const CandidateSet& candidates, const Vocabulary& vocab,
                                    std::size_t n_label_words, std::uint64_t cap = kDefaultEnumerationCap) {
    const std::size_t n = candidates.num_labels();
    const std::size_t nc = candidates.num_candidates();
    if (n != dev.num_labels) throw ShapeError("candidate set and dev set disagree on the label count");
    if (dev.num_instances() == 0) throw ValidationError("fitness is undefined on an empty dev set");
    if (n_label_words == 0) throw ConfigError("N_l must be positive");
    if (n_label_words > nc) throw ConfigError("N_l exceeds N_c");

    bool overflowed = false;
    const std::uint64_t total = count_assignments(n, nc, n_label_words, overflowed);
    if (overflowed || total > cap) throw EnumerationCapError(total, cap, overflowed);

    const auto combos = combinations(nc, n_label_words);
    const std::size_t per_label = combos.size();
    const std::size_t instances = dev.num_instances();

    // score[l][c * instances + r]: mean probability of label l's combo c on row r
    std::vector<std::vector<double>> score(n, std::vector<double>(per_label * instances));
    std::vector<std::size_t> ids(n_label_words);
    for (std::size_t l = 0; l < n; ++l) {
        for (std::size_t c = 0; c < per_label; ++c) {
            for (std::size_t k = 0; k < n_label_words; ++k) ids[k] = candidates.vocab_ids(l, combos[c][k]);
            for (std::size_t r = 0; r < instances; ++r) {
                score[l][c * instances + r] = label_score(dev.probs.row(r), ids);
            }
        }
    }

    OracleResult result;
    std::vector<std::size_t> choice(n, 0);
    std::vector<std::size_t> best_choice(n, 0);
    std::size_t best_correct = 0;
    bool first = true;
    for (;;) {
        std::size_t correct = 0;
        for (std::size_t r = 0; r < instances; ++r) {
            std::size_t predicted = 0;
            double best_score = score[0][choice[0] * instances + r];
            for (std::size_t l = 1; l < n; ++l) {
                const double s = score[l][choice[l] * instances + r];
                if (s > best_score) {
                    best_score = s;
                    predicted = l;
                }
            }
            if (predicted == dev.labels[r]) ++correct;
        }
        ++result.evaluated;
        if (first || correct > best_correct) {
            best_correct = correct;
            best_choice = choice;
            first = false;
        }
        if (!detail::advance(choice, per_label)) break;
    }

    result.best_fitness = static_cast<double>(best_correct) / static_cast<double>(instances);
    result.best_verbalizer.labels.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
        for (std::size_t pos : combos[best_choice[l]]) {
            const std::size_t id = candidates.vocab_ids(l, pos);
            result.best_verbalizer.labels[l].push_back({id, id < vocab.size() ? vocab.tokens[id] : std::string{}});
        }
    }
    return result;
}

} // namespace evs::testkit
