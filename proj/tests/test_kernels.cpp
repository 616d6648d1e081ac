#include <doctest.h>

#include <cmath>
#include <limits>

#include "groundbank/binio.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/kernels.hpp"
#include "groundbank/weights.hpp"
#include "groundbank/rng.hpp"
#include "test_util.hpp"

using namespace groundbank;
using groundbank::testing::approx_rows;
using groundbank::testing::random_token_matrix;

namespace {

AttentionParams identity_attention(int dim, int heads = 1) {
    AttentionParams p;
    p.heads = heads;
    p.head_dim = dim / heads;
    p.scale = 1.0 / std::sqrt(double(p.head_dim));
    p.w_q = Mat::identity(dim);
    p.w_k = Mat::identity(dim);
    p.w_v = Mat::identity(dim);
    p.w_o = Mat::identity(dim);
    return p;
}

EncoderLayerParams simple_layer(int dim) {
    EncoderLayerParams p;
    p.self_attn = identity_attention(dim);
    p.ffn_w1 = Mat(dim, 4 * dim);
    p.ffn_w2 = Mat(4 * dim, dim);
    p.ln1_gain.assign(size_t(dim), 1.0);
    p.ln1_bias.assign(size_t(dim), 0.0);
    p.ln2_gain.assign(size_t(dim), 1.0);
    p.ln2_bias.assign(size_t(dim), 0.0);
    p.eps = 1e-9;
    return p;
}

// independent layer-norm trace used as the oracle for encoder_layer tests
std::vector<double> ln_by_hand(const std::vector<double>& row, double eps) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= double(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= double(row.size());
    std::vector<double> out;
    for (double v : row) out.push_back((v - mean) / std::sqrt(var + eps));
    return out;
}

} // namespace

TEST_CASE("softmax: symmetry, saturation, shift invariance") {
    Mat m(1, 2);
    m.at(0, 0) = 0.0;
    m.at(0, 1) = 0.0;
    Mat s = softmax_rows(m);
    CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    m.at(0, 0) = 1000.0;
    m.at(0, 1) = 0.0;
    s = softmax_rows(m);
    CHECK(std::abs(s.at(0, 0) - 1.0) < 1e-9);
    CHECK(std::abs(s.at(0, 1) - 0.0) < 1e-9);

    SplitMix64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = rng.next_in(-5, 5), b = rng.next_in(-5, 5), c = rng.next_in(-50, 50);
        Mat base(1, 2), shifted(1, 2);
        base.at(0, 0) = a;
        base.at(0, 1) = b;
        shifted.at(0, 0) = a + c;
        shifted.at(0, 1) = b + c;
        const Mat s1 = softmax_rows(base);
        const Mat s2 = softmax_rows(shifted);
        CHECK(std::abs(s1.at(0, 0) - s2.at(0, 0)) < 1e-12);
    }
}

TEST_CASE("softmax: rows sum to 1 over 1000 random matrices") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const int rows = 1 + int(rng.next_below(6));
        const int cols = 1 + int(rng.next_below(8));
        Mat m(rows, cols);
        for (double& v : m.data) v = rng.next_in(-30, 30);
        const Mat s = softmax_rows(m);
        for (int r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < cols; ++c) {
                sum += s.at(r, c);
                CHECK(s.at(r, c) >= 0.0);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("softmax: -inf allowed for masked logits, NaN and +inf rejected") {
    Mat m(1, 3);
    m.at(0, 0) = 1.0;
    m.at(0, 1) = -std::numeric_limits<double>::infinity();
    m.at(0, 2) = 0.0;
    const Mat s = softmax_rows(m);
    CHECK(s.at(0, 1) == 0.0);
    CHECK(std::abs(s.at(0, 0) + s.at(0, 2) - 1.0) < 1e-12);

    m.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax_rows(m), numeric_error);
    m.at(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_rows(m), numeric_error);

    Mat all_masked(1, 2);
    all_masked.at(0, 0) = all_masked.at(0, 1) = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_rows(all_masked), numeric_error);
}

TEST_CASE("layer_norm: fixed examples") {
    const std::vector<double> g1{1.0, 1.0}, b0{0.0, 0.0};
    TokenMatrix m(1, 2);

    m.row(0)[0] = 1.0;
    m.row(0)[1] = -1.0;
    TokenMatrix out = layer_norm(m, g1, b0, 1e-12);
    CHECK(std::abs(out.row(0)[0] - 1.0) < 1e-9);
    CHECK(std::abs(out.row(0)[1] + 1.0) < 1e-9);

    m.row(0)[0] = 5.0;
    m.row(0)[1] = 5.0;
    out = layer_norm(m, g1, b0, 1e-12);
    CHECK(out.row(0)[0] == 0.0);
    CHECK(out.row(0)[1] == 0.0);

    // (x - mu)/sigma * g + b by hand: [0,2], gain 2, bias 1 -> [-1, 3]
    m.row(0)[0] = 0.0;
    m.row(0)[1] = 2.0;
    out = layer_norm(m, {2.0, 2.0}, {1.0, 1.0}, 1e-12);
    CHECK(std::abs(out.row(0)[0] + 1.0) < 1e-9);
    CHECK(std::abs(out.row(0)[1] - 3.0) < 1e-9);
}

TEST_CASE("layer_norm: normalizes random non-constant rows; eps must be positive") {
    SplitMix64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 4 + int(rng.next_below(12));
        TokenMatrix m(3, dim);
        for (double& v : m.data) v = rng.next_in(-4, 4);
        const std::vector<double> gain(size_t(dim), 1.0), bias(size_t(dim), 0.0);
        const TokenMatrix out = layer_norm(m, gain, bias, 1e-9);
        for (int r = 0; r < out.rows; ++r) {
            double mean = 0.0, var = 0.0;
            for (double v : out.row(r)) mean += v;
            mean /= dim;
            for (double v : out.row(r)) var += (v - mean) * (v - mean);
            var /= dim;
            CHECK(std::abs(mean) < 1e-7);
            CHECK(std::abs(var - 1.0) < 1e-6);
        }
    }
    TokenMatrix m(1, 2);
    CHECK_THROWS_AS(layer_norm(m, {1.0, 1.0}, {0.0, 0.0}, 0.0), config_error);
}

TEST_CASE("mha: single key passes the value through") {
    TokenMatrix q(1, 2), kv(1, 2);
    q.row(0)[0] = 1.0;
    kv.row(0)[0] = 3.0;
    kv.row(0)[1] = 4.0;
    const TokenMatrix out = multi_head_attention(q, kv, identity_attention(2));
    CHECK(out.row(0)[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out.row(0)[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("mha: indistinguishable keys average the values") {
    // zero key projection makes every key identical, so attention is uniform
    TokenMatrix q(1, 2), kv(2, 2);
    q.row(0)[0] = 1.0;
    kv.row(0)[0] = 1.0;
    kv.row(0)[1] = 8.0;
    kv.row(1)[0] = 3.0;
    kv.row(1)[1] = 2.0;
    AttentionParams p = identity_attention(2);
    p.w_k = Mat(2, 2);
    const TokenMatrix out = multi_head_attention(q, kv, p);
    CHECK(out.row(0)[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.row(0)[1] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("mha: outputs stay inside the projected-value envelope") {
    // with w_o = identity each output coordinate is a convex combination of
    // the corresponding projected-value column
    SplitMix64 rng(31);
    AttentionParams p = identity_attention(8, 2);
    p.w_q = Mat::seeded(8, 8, rng.next_u64(), 0.7);
    p.w_k = Mat::seeded(8, 8, rng.next_u64(), 0.7);
    p.w_v = Mat::seeded(8, 8, rng.next_u64(), 0.7);

    const TokenMatrix q = random_token_matrix(4, 8, rng.next_u64());
    const TokenMatrix kv = random_token_matrix(6, 8, rng.next_u64());
    const TokenMatrix v = apply_rows(kv, p.w_v);
    const TokenMatrix out = multi_head_attention(q, kv, p);

    for (int c = 0; c < 8; ++c) {
        double lo = 1e300, hi = -1e300;
        for (int j = 0; j < v.rows; ++j) {
            lo = std::min(lo, v.row(j)[c]);
            hi = std::max(hi, v.row(j)[c]);
        }
        for (int r = 0; r < out.rows; ++r) {
            CHECK(out.row(r)[c] >= lo - 1e-9);
            CHECK(out.row(r)[c] <= hi + 1e-9);
        }
    }
}

TEST_CASE("mha: masked keys get zero weight; fully masked kv rejected") {
    SplitMix64 rng(37);
    AttentionParams p = identity_attention(4);

    TokenMatrix q = random_token_matrix(2, 4, rng.next_u64());
    TokenMatrix kv_small = random_token_matrix(2, 4, rng.next_u64());

    TokenMatrix kv_padded(3, 4);
    kv_padded.mask = {1, 1, 0};
    for (int c = 0; c < 4; ++c) {
        kv_padded.row(0)[c] = kv_small.row(0)[c];
        kv_padded.row(1)[c] = kv_small.row(1)[c];
        kv_padded.row(2)[c] = 1e6; // must be invisible
    }
    const TokenMatrix a = multi_head_attention(q, kv_small, p);
    const TokenMatrix b = multi_head_attention(q, kv_padded, p);
    CHECK(approx_rows(a, b, 1e-9));

    TokenMatrix all_masked = kv_padded;
    all_masked.mask = {0, 0, 0};
    CHECK_THROWS_AS(multi_head_attention(q, all_masked, p), numeric_error);
}

TEST_CASE("mha: invariant to permutation of key-value rows") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        AttentionParams p = identity_attention(8, 2);
        p.w_q = Mat::seeded(8, 8, rng.next_u64(), 0.5);
        p.w_k = Mat::seeded(8, 8, rng.next_u64(), 0.5);
        p.w_v = Mat::seeded(8, 8, rng.next_u64(), 0.5);
        p.w_o = Mat::seeded(8, 8, rng.next_u64(), 0.5);
        const TokenMatrix q = random_token_matrix(3, 8, rng.next_u64());
        const TokenMatrix kv = random_token_matrix(5, 8, rng.next_u64());

        TokenMatrix reversed(5, 8);
        for (int r = 0; r < 5; ++r) {
            reversed.mask[size_t(r)] = kv.mask[size_t(4 - r)];
            for (int c = 0; c < 8; ++c) reversed.row(r)[c] = kv.row(4 - r)[c];
        }
        const TokenMatrix a = multi_head_attention(q, kv, p);
        const TokenMatrix b = multi_head_attention(q, reversed, p);
        CHECK(approx_rows(a, b, 1e-9));
    }
}

TEST_CASE("mha: attention weights sum to one per query row") {
    AttentionParams p = identity_attention(4, 2);
    const TokenMatrix q = random_token_matrix(3, 4, 99);
    const TokenMatrix kv = random_token_matrix(7, 4, 100, 2);
    AttentionStats stats;
    multi_head_attention(q, kv, p, &stats);
    // mean over unmasked keys of a row-stochastic matrix is exactly 1/k
    CHECK(stats.mean_weight == doctest::Approx(1.0 / 5.0).epsilon(1e-9));
}

TEST_CASE("encoder_layer: deterministic, mask-preserving, finite-input checked") {
    const ModelWeights w = seeded_weights(8, 2, 1, 2024);
    const TokenMatrix m = random_token_matrix(5, 8, 314, 2);

    const TokenMatrix a = encoder_layer(m, w.language_layers[0]);
    const TokenMatrix b = encoder_layer(m, w.language_layers[0]);
    CHECK(a == b); // bit-identical
    CHECK(a.mask == m.mask);

    TokenMatrix bad = m;
    bad.data[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(encoder_layer(bad, w.language_layers[0]), numeric_error);
}

TEST_CASE("weights file: round trip, content authority, corruption taxonomy") {
    groundbank::testing::TempDir tmp("weights");
    ModelWeights w = seeded_weights(16, 4, 2, 2025);
    // perturb one tensor so the file, not the seed, is the source of truth
    w.vision_layers[1].ffn_w1.at(3, 7) = 0.123456789;

    save_weights(w, tmp.file("w.gbw"));
    const ModelWeights back = load_weights(tmp.file("w.gbw"));
    CHECK(back.dim == 16);
    CHECK(back.layers == 2);
    CHECK(back.vision_layers[1].ffn_w1.at(3, 7) == 0.123456789);
    CHECK(back.digest() == w.digest());
    CHECK(back.cross_t2v[0].w_q == w.cross_t2v[0].w_q);
    CHECK(back.language_layers[0].ln1_gain == w.language_layers[0].ln1_gain);

    const std::string bytes = read_file_bytes(tmp.file("w.gbw"));
    write_file_bytes(tmp.file("trunc.gbw"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_weights(tmp.file("trunc.gbw")), integrity_error);

    std::string flipped = bytes;
    flipped[flipped.size() - 3] = char(flipped[flipped.size() - 3] ^ 0x4);
    write_file_bytes(tmp.file("flip.gbw"), flipped);
    CHECK_THROWS_AS(load_weights(tmp.file("flip.gbw")), integrity_error);

    std::string magic = bytes;
    magic[1] = 'Z';
    write_file_bytes(tmp.file("magic.gbw"), magic);
    CHECK_THROWS_AS(load_weights(tmp.file("magic.gbw")), format_error);

    CHECK_THROWS_AS(load_weights(tmp.file("absent.gbw")), io_error);
    CHECK_THROWS_AS(ensure_compatible(w, 16, 4, 3), config_error);
    CHECK_NOTHROW(ensure_compatible(w, 16, 4, 2));
}

TEST_CASE("encoder_layer: nulled attention and FFN reduce to the normed residual path") {
    EncoderLayerParams p = simple_layer(4);
    p.self_attn.w_o = Mat(4, 4); // attention contributes nothing

    TokenMatrix m(2, 4);
    SplitMix64 rng(55);
    for (double& v : m.data) v = rng.next_in(-2, 2);

    const TokenMatrix out = encoder_layer(m, p);
    for (int r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        const std::vector<double> expected =
            ln_by_hand(ln_by_hand({row.begin(), row.end()}, p.eps), p.eps);
        for (int c = 0; c < 4; ++c)
            CHECK(out.row(r)[c] == doctest::Approx(expected[size_t(c)]).epsilon(1e-9));
    }
}
