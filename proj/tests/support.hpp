#pragma once

// Generators and fixtures shared by the test binaries.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "evs/core.hpp"
#include "evs/types.hpp"

namespace evs::test {

/// Random LogitSet with every label present; rows are normalized in double then cast.
inline LogitSet random_logits(std::size_t instances, std::size_t vocab, std::size_t labels, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LogitSet ls;
    ls.num_labels = labels;
    ls.probs = Matrix<float>(instances, vocab);
    for (std::size_t r = 0; r < instances; ++r) {
        std::vector<double> row(vocab);
        double total = 0.0;
        for (double& x : row) {
            x = u(gen) * u(gen);
            total += x;
        }
        for (std::size_t c = 0; c < vocab; ++c) ls.probs(r, c) = static_cast<float>(row[c] / total);
        ls.labels.push_back(r < labels ? r : static_cast<std::size_t>(gen() % labels));
    }
    return ls;
}

/// Random CandidateSet: each row has distinct ids drawn from [0, vocab) and non-increasing values.
inline CandidateSet random_candidates(std::size_t labels, std::size_t nc, std::size_t vocab, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CandidateSet cs{MatrixD(labels, nc), Matrix<std::size_t>(labels, nc)};
    std::vector<std::size_t> ids(vocab);
    for (std::size_t l = 0; l < labels; ++l) {
        for (std::size_t i = 0; i < vocab; ++i) ids[i] = i;
        std::shuffle(ids.begin(), ids.end(), gen);
        std::vector<double> vals(nc);
        for (double& v : vals) v = u(gen);
        // occasional exact ties
        if (nc > 2 && gen() % 3 == 0) vals[1] = vals[2];
        std::sort(vals.begin(), vals.end(), std::greater<>());
        for (std::size_t j = 0; j < nc; ++j) {
            cs.values(l, j) = vals[j];
            cs.vocab_ids(l, j) = ids[j];
        }
    }
    return cs;
}

inline Vocabulary numbered_vocab(std::size_t n) {
    Vocabulary v;
    for (std::size_t i = 0; i < n; ++i) v.tokens.push_back("w" + std::to_string(i));
    return v;
}

inline MatrixD random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    MatrixD m(rows, cols);
    for (double& x : m.data()) x = u(gen);
    return m;
}

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("evs_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace evs::test
