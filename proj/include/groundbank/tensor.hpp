#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace groundbank {

// A sequence of embedded tokens with a per-row validity mask. Rows with
// mask=false are padding: they never win a selection and never receive
// attention as keys.
struct TokenMatrix {
    int rows = 0;
    int dim = 0;
    std::vector<double> data;  // row-major, rows * dim
    std::vector<uint8_t> mask; // 1 = real token, 0 = padding

    TokenMatrix() = default;
    TokenMatrix(int rows_, int dim_)
        : rows(rows_), dim(dim_), data(size_t(rows_) * size_t(dim_), 0.0),
          mask(size_t(rows_), 1) {}

    std::span<double> row(int r) { return {data.data() + size_t(r) * dim, size_t(dim)}; }
    std::span<const double> row(int r) const {
        return {data.data() + size_t(r) * dim, size_t(dim)};
    }

    bool masked(int r) const { return mask[size_t(r)] == 0; }
    int unmasked_count() const;

    bool operator==(const TokenMatrix& other) const = default;
};

// Throws config_error on inconsistent shape, numeric_error on non-finite data.
// `what` names the offending matrix in error messages.
void validate(const TokenMatrix& m, const std::string& what);

// Plain row-major matrix for parameters and intermediates.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int rows_, int cols_)
        : rows(rows_), cols(cols_), data(size_t(rows_) * size_t(cols_), 0.0) {}

    double& at(int r, int c) { return data[size_t(r) * cols + c]; }
    double at(int r, int c) const { return data[size_t(r) * cols + c]; }

    static Mat identity(int n);
    static Mat seeded(int rows, int cols, uint64_t seed, double scale);

    bool operator==(const Mat& other) const = default;
};

// out = a * b, shapes (m x k) * (k x n)
Mat matmul(const Mat& a, const Mat& b);

// y[r] = x[r] * w for every row of a TokenMatrix (mask carried through)
TokenMatrix apply_rows(const TokenMatrix& x, const Mat& w);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

bool all_finite(std::span<const double> v);

} // namespace groundbank
