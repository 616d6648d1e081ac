#include "groundbank/tensor.hpp"

#include <cmath>

#include "groundbank/errors.hpp"
#include "groundbank/rng.hpp"

namespace groundbank {

int TokenMatrix::unmasked_count() const {
    int n = 0;
    for (uint8_t m : mask) n += (m != 0);
    return n;
}

void validate(const TokenMatrix& m, const std::string& what) {
    if (m.rows <= 0 || m.dim <= 0)
        throw config_error(what + ": rows and dim must be positive (rows=" +
                           std::to_string(m.rows) + ", dim=" + std::to_string(m.dim) + ")");
    if (m.data.size() != size_t(m.rows) * size_t(m.dim))
        throw config_error(what + ": data size does not match rows*dim");
    if (m.mask.size() != size_t(m.rows))
        throw config_error(what + ": mask length does not match rows");
    for (double v : m.data)
        if (!std::isfinite(v)) throw numeric_error(what + ": non-finite entry");
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Mat Mat::seeded(int rows, int cols, uint64_t seed, double scale) {
    Mat m(rows, cols);
    SplitMix64 rng(seed);
    for (double& v : m.data) v = scale * rng.next_signed();
    return m;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw config_error("matmul: inner dimensions differ");
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + size_t(k) * b.cols;
            double* orow = out.data.data() + size_t(i) * out.cols;
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

TokenMatrix apply_rows(const TokenMatrix& x, const Mat& w) {
    if (x.dim != w.rows) throw config_error("apply_rows: dim does not match weight rows");
    TokenMatrix out(x.rows, w.cols);
    out.mask = x.mask;
    for (int r = 0; r < x.rows; ++r) {
        auto src = x.row(r);
        auto dst = out.row(r);
        for (int k = 0; k < w.rows; ++k) {
            const double v = src[k];
            if (v == 0.0) continue;
            const double* wrow = w.data.data() + size_t(k) * w.cols;
            for (int j = 0; j < w.cols; ++j) dst[j] += v * wrow[j];
        }
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace groundbank
