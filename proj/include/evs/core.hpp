#pragma once

// Verbalizer mathematics: label means, top-N_c candidate encoding, matrix
// decoding, top-N_l label-word extraction, classification and accuracy.
//
// Every function here is pure. Top-k selection and argmax break ties toward
// the smaller index.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "evs/errors.hpp"
#include "evs/matrix.hpp"
#include "evs/types.hpp"

namespace evs {

namespace detail {

/// Indices of the k largest entries of `row`, largest first, ties by smaller index.
template <typename T>
std::vector<std::size_t> top_k_indices(std::span<const T> row, std::size_t k) {
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    return idx;
}

} // namespace detail

/// Row l is the average distribution of all instances labeled l.
inline MatrixD label_means(const LogitSet& logits) {
    const std::size_t n = logits.num_labels;
    const std::size_t v = logits.vocab_size();
    MatrixD sums(n, v, 0.0);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t r = 0; r < logits.num_instances(); ++r) {
        const std::size_t label = logits.labels[r];
        if (label >= n) throw LabelRangeError(r, static_cast<std::int64_t>(label), n);
        ++counts[label];
        auto src = logits.probs.row(r);
        auto dst = sums.row(label);
        for (std::size_t c = 0; c < v; ++c) dst[c] += src[c];
    }
    for (std::size_t l = 0; l < n; ++l) {
        if (counts[l] == 0) throw UndefinedMeanError(l);
        const double inv = 1.0 / static_cast<double>(counts[l]);
        for (double& x : sums.row(l)) x *= inv;
    }
    return sums;
}

/// Keeps the n_candidates largest mean values per label, sorted non-increasing.
inline CandidateSet encode(const MatrixD& means, std::size_t n_candidates) {
    if (n_candidates == 0) throw ConfigError("N_c must be positive");
    if (n_candidates > means.cols()) {
        throw ConfigError("N_c exceeds vocabulary size (" + std::to_string(n_candidates) + " > " +
                          std::to_string(means.cols()) + ")");
    }
    CandidateSet out{MatrixD(means.rows(), n_candidates), Matrix<std::size_t>(means.rows(), n_candidates)};
    for (std::size_t l = 0; l < means.rows(); ++l) {
        auto top = detail::top_k_indices(means.row(l), n_candidates);
        for (std::size_t j = 0; j < n_candidates; ++j) {
            out.values(l, j) = means(l, top[j]);
            out.vocab_ids(l, j) = top[j];
        }
    }
    return out;
}

/// candidates.values x genome. No reordering of the result.
inline MatrixD decode(const CandidateSet& candidates, const MatrixD& genome) {
    const std::size_t nc = candidates.num_candidates();
    if (genome.rows() != nc || genome.cols() != nc) {
        throw ShapeError("genome is " + std::to_string(genome.rows()) + "x" + std::to_string(genome.cols()) +
                         " but N_c is " + std::to_string(nc));
    }
    MatrixD out(candidates.num_labels(), nc, 0.0);
    for (std::size_t i = 0; i < candidates.num_labels(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < nc; ++k) {
            const double a = candidates.values(i, k);
            auto g = genome.row(k);
            for (std::size_t j = 0; j < nc; ++j) dst[j] += a * g[j];
        }
    }
    return out;
}

inline MatrixD decode(const CandidateSet& candidates, const Individual& individual) {
    return decode(candidates, individual.genome);
}

/// Top n_label_words decoded positions per label, mapped to vocabulary words.
inline Verbalizer extract_verbalizer(const MatrixD& decoded, const CandidateSet& candidates, const Vocabulary& vocab,
                                     std::size_t n_label_words) {
    const std::size_t nc = candidates.num_candidates();
    if (decoded.rows() != candidates.num_labels() || decoded.cols() != nc) {
        throw ShapeError("decoded matrix shape does not match the candidate set");
    }
    if (n_label_words == 0) throw ConfigError("N_l must be positive");
    if (n_label_words > nc) {
        throw ConfigError("N_l exceeds N_c (" + std::to_string(n_label_words) + " > " + std::to_string(nc) + ")");
    }
    Verbalizer v;
    v.labels.resize(decoded.rows());
    for (std::size_t l = 0; l < decoded.rows(); ++l) {
        auto& words = v.labels[l];
        words.reserve(n_label_words);
        for (std::size_t pos : detail::top_k_indices(decoded.row(l), n_label_words)) {
            const std::size_t id = candidates.vocab_ids(l, pos);
            if (id >= vocab.size()) {
                throw ShapeError("candidate vocab id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(vocab.size()));
            }
            words.push_back({id, vocab.tokens[id]});
        }
    }
    return v;
}

/// Mean probability of `ids` in `prob_row`.
///
/// Terms are summed in ascending order, so the score depends only on the
/// word set and not on the order the words are listed in.
inline double label_score(std::span<const float> prob_row, std::span<const std::size_t> ids) {
    if (ids.empty()) throw ShapeError("label has no words");
    std::vector<float> terms;
    terms.reserve(ids.size());
    for (std::size_t id : ids) {
        if (id >= prob_row.size()) {
            throw ShapeError("word id " + std::to_string(id) + " outside distribution of size " +
                             std::to_string(prob_row.size()));
        }
        terms.push_back(prob_row[id]);
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (float t : terms) sum += t;
    return sum / static_cast<double>(ids.size());
}

/// Label whose words have the highest mean probability in `prob_row`.
inline std::size_t classify(const Verbalizer& verbalizer, std::span<const float> prob_row) {
    if (verbalizer.labels.empty()) throw ShapeError("verbalizer has no labels");
    std::size_t best = 0;
    double best_score = 0.0;
    std::vector<std::size_t> ids;
    for (std::size_t l = 0; l < verbalizer.labels.size(); ++l) {
        ids.clear();
        for (const auto& w : verbalizer.labels[l]) ids.push_back(w.vocab_id);
        const double score = label_score(prob_row, ids);
        if (l == 0 || score > best_score) {
            best = l;
            best_score = score;
        }
    }
    return best;
}

/// Accuracy of `verbalizer` on `dev`.
inline double fitness(const Verbalizer& verbalizer, const LogitSet& dev) {
    if (dev.num_instances() == 0) throw ValidationError("fitness is undefined on an empty dev set");
    if (verbalizer.num_labels() != dev.num_labels) {
        throw ShapeError("verbalizer has " + std::to_string(verbalizer.num_labels()) + " labels, dev set has " +
                         std::to_string(dev.num_labels));
    }
    std::size_t correct = 0;
    for (std::size_t r = 0; r < dev.num_instances(); ++r) {
        if (classify(verbalizer, dev.probs.row(r)) == dev.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dev.num_instances());
}

} // namespace evs
