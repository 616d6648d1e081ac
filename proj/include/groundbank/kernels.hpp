#pragma once

#include <vector>

#include "groundbank/tensor.hpp"

namespace groundbank {

// Multi-head attention parameters. heads * head_dim must equal the embedding
// width D; all four projections are D x D.
struct AttentionParams {
    int heads = 1;
    int head_dim = 0;
    Mat w_q, w_k, w_v, w_o;
    double scale = 0.0; // 1/sqrt(head_dim)

    int dim() const { return heads * head_dim; }
};

// One transformer encoder block (post-norm): self-attention -> add&norm ->
// feed-forward -> add&norm.
struct EncoderLayerParams {
    AttentionParams self_attn;
    Mat ffn_w1; // D x hidden
    Mat ffn_w2; // hidden x D
    std::vector<double> ln1_gain, ln1_bias;
    std::vector<double> ln2_gain, ln2_bias;
    double eps = 1e-5;
};

void validate(const AttentionParams& p, int dim, const std::string& what);
void validate(const EncoderLayerParams& p, int dim, const std::string& what);

// Row-wise softmax. Entries of -infinity are allowed (masked logits) and map
// to weight zero; NaN or +infinity is rejected. A row with no finite entry is
// a domain error.
Mat softmax_rows(const Mat& m);

// Per-row layer normalization: (x - mean) / sqrt(var + eps) * gain + bias.
TokenMatrix layer_norm(const TokenMatrix& m, const std::vector<double>& gain,
                       const std::vector<double>& bias, double eps);

struct AttentionStats {
    // Mean attention weight over heads, query rows, and unmasked key columns.
    double mean_weight = 0.0;
};

// MHA(Q=query, KV=key_value). Masked key rows receive zero attention weight;
// the output carries the query's mask. key_value must have at least one
// unmasked row.
TokenMatrix multi_head_attention(const TokenMatrix& query, const TokenMatrix& key_value,
                                 const AttentionParams& params,
                                 AttentionStats* stats = nullptr);

// Full encoder block. Masked rows never act as attention keys but are carried
// through the residual/norm path so shapes stay static.
TokenMatrix encoder_layer(const TokenMatrix& m, const EncoderLayerParams& params);

} // namespace groundbank
