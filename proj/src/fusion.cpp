#include "groundbank/fusion.hpp"

#include <algorithm>

#include "groundbank/errors.hpp"

namespace groundbank {

std::pair<TokenMatrix, TokenMatrix> glip_layer(const TokenMatrix& o, const TokenMatrix& t,
                                               const ModelWeights& weights, int layer_index) {
    if (layer_index < 1 || layer_index > weights.layers)
        throw config_error("glip_layer: layer index out of range");
    const size_t li = size_t(layer_index - 1);

    const TokenMatrix o_t2v = multi_head_attention(o, t, weights.cross_t2v[li]);
    const TokenMatrix t_v2t = multi_head_attention(t, o, weights.cross_v2t[li]);

    TokenMatrix o_sum = o;
    for (size_t i = 0; i < o_sum.data.size(); ++i) o_sum.data[i] += o_t2v.data[i];
    TokenMatrix t_sum = t;
    for (size_t i = 0; i < t_sum.data.size(); ++i) t_sum.data[i] += t_v2t.data[i];

    return {encoder_layer(o_sum, weights.vision_layers[li]),
            encoder_layer(t_sum, weights.language_layers[li])};
}

TokenMatrix scatter_residual(const TokenMatrix& o, const TokenMatrix& fused,
                             const std::vector<int>& indices) {
    if (fused.rows != int(indices.size()))
        throw config_error("scatter_residual: fused rows do not match index count");
    if (fused.rows > 0 && fused.dim != o.dim)
        throw config_error("scatter_residual: dim mismatch");

    TokenMatrix out = o;
    for (size_t j = 0; j < indices.size(); ++j) {
        const int idx = indices[j];
        if (idx < 0 || idx >= o.rows)
            throw config_error("scatter_residual: index " + std::to_string(idx) +
                               " out of range");
        auto dst = out.row(idx);
        auto src = fused.row(int(j));
        for (int c = 0; c < o.dim; ++c) dst[c] += src[c];
    }
    return out;
}

TokenMatrix pool_broadcast_residual(const TokenMatrix& t, const TokenMatrix& fused) {
    if (fused.rows < 1) throw config_error("pool_broadcast_residual: no fused rows to pool");
    if (fused.dim != t.dim) throw config_error("pool_broadcast_residual: dim mismatch");

    std::vector<double> pooled(size_t(t.dim), 0.0);
    for (int r = 0; r < fused.rows; ++r) {
        auto row = fused.row(r);
        for (int c = 0; c < t.dim; ++c) pooled[size_t(c)] += row[c];
    }
    for (double& v : pooled) v /= double(fused.rows);

    TokenMatrix out = t;
    for (int r = 0; r < t.rows; ++r) {
        if (t.masked(r)) continue;
        auto dst = out.row(r);
        for (int c = 0; c < t.dim; ++c) dst[c] += pooled[size_t(c)];
    }
    return out;
}

StructuralLayerResult structural_layer(const TokenMatrix& o, const TokenMatrix& t,
                                       const TokenMatrix& bank_layer,
                                       const std::vector<AttributeKind>& bank_tags,
                                       const ModelWeights& weights, int layer_index,
                                       const DetectionConfig& config) {
    if (layer_index < 1 || layer_index > weights.layers)
        throw config_error("structural_layer: layer index out of range");
    if (bank_tags.size() != size_t(bank_layer.rows))
        throw config_error("structural_layer: tag list does not match bank rows");
    const size_t li = size_t(layer_index - 1);

    const SelectedTokens k_v =
        select_visual_top_p(o, bank_layer, config.top_p, config.selection_reduction);
    const SelectedTokens k_l =
        select_prompt_top_q(bank_layer, k_v, config.top_q, config.selection_reduction);

    AttentionStats stats_t2v, stats_v2t;
    const TokenMatrix fused_o =
        multi_head_attention(k_v.vectors, t, weights.cross_t2v[li], &stats_t2v);
    const TokenMatrix fused_t =
        multi_head_attention(k_l.vectors, o, weights.cross_v2t[li], &stats_v2t);

    StructuralLayerResult res;
    res.o = encoder_layer(scatter_residual(o, fused_o, k_v.indices), weights.vision_layers[li]);
    res.t = encoder_layer(pool_broadcast_residual(t, fused_t), weights.language_layers[li]);

    res.trace.layer = layer_index;
    res.trace.visual_indices = k_v.indices;
    res.trace.prompt_indices = k_l.indices;
    res.trace.visual_scores = k_v.scores;
    res.trace.prompt_scores = k_l.scores;
    for (int idx : k_l.indices) res.trace.prompt_tags.push_back(bank_tags[size_t(idx)]);
    res.trace.mean_attention_t2v = stats_t2v.mean_weight;
    res.trace.mean_attention_v2t = stats_v2t.mean_weight;
    return res;
}

ForwardOutput forward(const ToyImage& image, const std::string& target_text,
                      const KnowledgeBank& bank, const ModelWeights& weights,
                      const DetectionConfig& config) {
    config.validate();
    ensure_compatible(weights, config.dim, config.heads, config.layers);
    ensure_fresh(bank, weights, config.bank_config());

    const TextTokens target_tokens = tokenize(target_text);
    if (target_tokens.tokens.empty()) throw config_error("forward: empty target text");

    TokenMatrix o = embed_image(image, config.patch, config.dim, config.seed);
    TokenMatrix t = embed_text(target_tokens, config.dim, config.n_l, config.seed);

    const std::vector<int> fusion = config.effective_fusion_layers();
    auto fused_here = [&](int layer) {
        return std::find(fusion.begin(), fusion.end(), layer) != fusion.end();
    };

    ForwardOutput out;
    for (int i = 1; i <= config.layers; ++i) {
        if (fused_here(i)) {
            if (config.mode == Mode::structural) {
                StructuralLayerResult res = structural_layer(o, t, bank.layer(i),
                                                             bank.token_tags, weights, i, config);
                o = std::move(res.o);
                t = std::move(res.t);
                out.traces.push_back(std::move(res.trace));
            } else {
                std::tie(o, t) = glip_layer(o, t, weights, i);
            }
        } else {
            o = encoder_layer(o, weights.vision_layers[size_t(i - 1)]);
            t = encoder_layer(t, weights.language_layers[size_t(i - 1)]);
        }
    }
    out.o_final = std::move(o);
    out.t_final = std::move(t);
    return out;
}

} // namespace groundbank
