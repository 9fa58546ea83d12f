#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "evs/errors.hpp"
#include "evs/matrix.hpp"

namespace evs {

inline constexpr double kRowSumTolerance = 1e-4;

/// Mask-position probability distributions for a labeled dev set.
///
/// probs is [num_instances x vocab_size]; each row is one instance's
/// distribution over the vocabulary. labels[i] is the gold label of row i.
struct LogitSet {
    std::size_t num_labels = 0;
    Matrix<float> probs;
    std::vector<std::size_t> labels;

    std::size_t num_instances() const noexcept { return probs.rows(); }
    std::size_t vocab_size() const noexcept { return probs.cols(); }

    /// Throws the specific FormatError subclass for the first violated invariant.
    void validate(double row_sum_tolerance = kRowSumTolerance) const {
        if (labels.size() != probs.rows()) throw LabelCountError(labels.size(), probs.rows());
        if (num_labels < 2) {
            throw ConfigError("at least 2 labels are required, got " + std::to_string(num_labels));
        }
        if (probs.cols() == 0) throw HeaderError("vocab_size must be positive");
        std::vector<std::size_t> seen(num_labels, 0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= num_labels) {
                throw LabelRangeError(i, static_cast<std::int64_t>(labels[i]), num_labels);
            }
            ++seen[labels[i]];
        }
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            double sum = 0.0;
            auto row = probs.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (!(row[c] >= 0.0f) || !std::isfinite(row[c])) throw NegativeProbabilityError(r, c);
                sum += row[c];
            }
            if (std::abs(sum - 1.0) > row_sum_tolerance) throw RowSumError(r, sum);
        }
        for (std::size_t l = 0; l < num_labels; ++l) {
            if (seen[l] == 0) throw UndefinedMeanError(l);
        }
    }
};

/// Token strings indexed by vocabulary id.
struct Vocabulary {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    const std::string& operator[](std::size_t id) const { return tokens.at(id); }
};

/// Per label, the top-N_c mean probabilities and their vocabulary ids.
struct CandidateSet {
    MatrixD values;                   // [N x N_c], each row non-increasing
    Matrix<std::size_t> vocab_ids;    // [N x N_c], distinct within a row

    std::size_t num_labels() const noexcept { return values.rows(); }
    std::size_t num_candidates() const noexcept { return values.cols(); }
};

/// One member of the search population: a square N_c x N_c genome.
struct Individual {
    MatrixD genome;
    std::optional<double> cached_fitness;

    std::size_t side() const noexcept { return genome.rows(); }
};

struct LabelWord {
    std::size_t vocab_id = 0;
    std::string token;

    bool operator==(const LabelWord&) const = default;
};

/// Ordered label words for each label, highest decoded score first.
struct Verbalizer {
    std::vector<std::vector<LabelWord>> labels;

    std::size_t num_labels() const noexcept { return labels.size(); }
    std::size_t words_per_label() const noexcept { return labels.empty() ? 0 : labels.front().size(); }

    bool operator==(const Verbalizer&) const = default;

    void validate(std::size_t vocab_size) const {
        if (labels.empty()) throw ShapeError("verbalizer has no labels");
        const std::size_t n = labels.front().size();
        if (n == 0) throw ShapeError("verbalizer labels have no words");
        for (std::size_t l = 0; l < labels.size(); ++l) {
            if (labels[l].size() != n) {
                throw ShapeError("label " + std::to_string(l) + " has " + std::to_string(labels[l].size()) +
                                 " words, expected " + std::to_string(n));
            }
            std::unordered_set<std::size_t> ids;
            for (const auto& w : labels[l]) {
                if (w.vocab_id >= vocab_size) {
                    throw ShapeError("label " + std::to_string(l) + " word id " + std::to_string(w.vocab_id) +
                                     " is outside vocabulary of size " + std::to_string(vocab_size));
                }
                if (!ids.insert(w.vocab_id).second) {
                    throw ShapeError("label " + std::to_string(l) + " repeats word id " +
                                     std::to_string(w.vocab_id));
                }
            }
        }
    }
};

} // namespace evs
