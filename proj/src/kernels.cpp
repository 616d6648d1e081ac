#include "groundbank/kernels.hpp"

#include <cmath>
#include <limits>

#include "groundbank/errors.hpp"

namespace groundbank {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void validate(const AttentionParams& p, int dim, const std::string& what) {
    if (p.heads <= 0 || p.head_dim <= 0 || p.heads * p.head_dim != dim)
        throw config_error(what + ": heads * head_dim must equal dim");
    for (const Mat* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
        if (w->rows != dim || w->cols != dim)
            throw config_error(what + ": projection must be dim x dim");
        if (!all_finite(w->data)) throw numeric_error(what + ": non-finite projection entry");
    }
    if (!(p.scale > 0.0)) throw config_error(what + ": scale must be positive");
}

void validate(const EncoderLayerParams& p, int dim, const std::string& what) {
    validate(p.self_attn, dim, what + ".self_attn");
    if (p.ffn_w1.rows != dim || p.ffn_w2.cols != dim || p.ffn_w1.cols != p.ffn_w2.rows)
        throw config_error(what + ": feed-forward shapes inconsistent with dim");
    if (!all_finite(p.ffn_w1.data) || !all_finite(p.ffn_w2.data))
        throw numeric_error(what + ": non-finite feed-forward entry");
    if (p.ln1_gain.size() != size_t(dim) || p.ln1_bias.size() != size_t(dim) ||
        p.ln2_gain.size() != size_t(dim) || p.ln2_bias.size() != size_t(dim))
        throw config_error(what + ": layer-norm vectors must have length dim");
    if (!(p.eps > 0.0)) throw config_error(what + ": layer-norm eps must be > 0");
}

Mat softmax_rows(const Mat& m) {
    for (double v : m.data)
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw numeric_error("softmax_rows: NaN or +inf entry");

    Mat out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const double* src = m.data.data() + size_t(r) * m.cols;
        double* dst = out.data.data() + size_t(r) * m.cols;
        double max_v = kNegInf;
        for (int c = 0; c < m.cols; ++c) max_v = std::max(max_v, src[c]);
        if (max_v == kNegInf)
            throw numeric_error("softmax_rows: row has no finite entry");
        double sum = 0.0;
        for (int c = 0; c < m.cols; ++c) {
            dst[c] = std::exp(src[c] - max_v);
            sum += dst[c];
        }
        for (int c = 0; c < m.cols; ++c) dst[c] /= sum;
    }
    return out;
}

TokenMatrix layer_norm(const TokenMatrix& m, const std::vector<double>& gain,
                       const std::vector<double>& bias, double eps) {
    validate(m, "layer_norm input");
    if (gain.size() != size_t(m.dim) || bias.size() != size_t(m.dim))
        throw config_error("layer_norm: gain/bias length must equal dim");
    if (!(eps > 0.0)) throw config_error("layer_norm: eps must be > 0");

    TokenMatrix out(m.rows, m.dim);
    out.mask = m.mask;
    for (int r = 0; r < m.rows; ++r) {
        auto src = m.row(r);
        auto dst = out.row(r);
        double mean = 0.0;
        for (double v : src) mean += v;
        mean /= m.dim;
        double var = 0.0;
        for (double v : src) var += (v - mean) * (v - mean);
        var /= m.dim;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < m.dim; ++c) dst[c] = (src[c] - mean) * inv * gain[c] + bias[c];
    }
    return out;
}

TokenMatrix multi_head_attention(const TokenMatrix& query, const TokenMatrix& key_value,
                                 const AttentionParams& params, AttentionStats* stats) {
    validate(query, "mha query");
    validate(key_value, "mha key_value");
    if (query.dim != key_value.dim) throw config_error("mha: query/key dim mismatch");
    validate(params, query.dim, "mha params");
    const int kv_unmasked = key_value.unmasked_count();
    if (kv_unmasked == 0) throw numeric_error("mha: all key rows masked, nothing to attend to");

    const TokenMatrix q = apply_rows(query, params.w_q);
    const TokenMatrix k = apply_rows(key_value, params.w_k);
    const TokenMatrix v = apply_rows(key_value, params.w_v);

    const int hd = params.head_dim;
    TokenMatrix concat(query.rows, query.dim);
    concat.mask = query.mask;

    double weight_sum = 0.0;
    for (int h = 0; h < params.heads; ++h) {
        const int off = h * hd;
        Mat logits(query.rows, key_value.rows);
        for (int i = 0; i < query.rows; ++i) {
            auto qi = q.row(i);
            for (int j = 0; j < key_value.rows; ++j) {
                if (key_value.masked(j)) {
                    logits.at(i, j) = kNegInf;
                    continue;
                }
                auto kj = k.row(j);
                double s = 0.0;
                for (int c = 0; c < hd; ++c) s += qi[off + c] * kj[off + c];
                logits.at(i, j) = s * params.scale;
            }
        }
        Mat attn = softmax_rows(logits);
        for (int i = 0; i < query.rows; ++i) {
            auto dst = concat.row(i);
            for (int j = 0; j < key_value.rows; ++j) {
                const double w = attn.at(i, j);
                if (w == 0.0) continue;
                weight_sum += w;
                auto vj = v.row(j);
                for (int c = 0; c < hd; ++c) dst[off + c] += w * vj[off + c];
            }
        }
    }

    if (stats) {
        stats->mean_weight =
            weight_sum / (double(params.heads) * double(query.rows) * double(kv_unmasked));
    }
    return apply_rows(concat, params.w_o);
}

TokenMatrix encoder_layer(const TokenMatrix& m, const EncoderLayerParams& params) {
    validate(m, "encoder_layer input");
    validate(params, m.dim, "encoder_layer params");

    TokenMatrix attended = multi_head_attention(m, m, params.self_attn);
    TokenMatrix h(m.rows, m.dim);
    h.mask = m.mask;
    for (size_t i = 0; i < m.data.size(); ++i) h.data[i] = m.data[i] + attended.data[i];
    h = layer_norm(h, params.ln1_gain, params.ln1_bias, params.eps);

    // position-wise feed-forward with ReLU
    TokenMatrix hidden = apply_rows(h, params.ffn_w1);
    for (double& x : hidden.data) x = x > 0.0 ? x : 0.0;
    TokenMatrix ff = apply_rows(hidden, params.ffn_w2);

    TokenMatrix out(m.rows, m.dim);
    out.mask = m.mask;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = h.data[i] + ff.data[i];
    return layer_norm(out, params.ln2_gain, params.ln2_bias, params.eps);
}

} // namespace groundbank
