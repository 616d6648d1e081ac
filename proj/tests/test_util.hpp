#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "groundbank/rng.hpp"
#include "groundbank/tensor.hpp"

namespace groundbank::testing {

inline TokenMatrix random_token_matrix(int rows, int dim, uint64_t seed,
                                       int masked_tail = 0) {
    TokenMatrix m(rows, dim);
    SplitMix64 rng(seed);
    for (double& v : m.data) v = rng.next_signed();
    for (int r = rows - masked_tail; r < rows; ++r) {
        m.mask[size_t(r)] = 0;
        for (int c = 0; c < dim; ++c) m.row(r)[c] = 0.0;
    }
    return m;
}

inline bool approx_rows(const TokenMatrix& a, const TokenMatrix& b, double tol) {
    if (a.rows != b.rows || a.dim != b.dim) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (std::abs(a.data[i] - b.data[i]) > tol) return false;
    return true;
}

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("groundbank_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace groundbank::testing
