#pragma once

#include <string>
#include <vector>

#include "groundbank/config.hpp"
#include "groundbank/encoding.hpp"
#include "groundbank/knowledge_bank.hpp"
#include "groundbank/selection.hpp"
#include "groundbank/weights.hpp"

namespace groundbank {

// Per fused layer: which tokens were picked, their scores and attribute
// tags, and the mean attention weight of each fused MHA.
struct SelectionTrace {
    int layer = 0;
    std::vector<int> visual_indices;
    std::vector<int> prompt_indices;
    std::vector<double> visual_scores;
    std::vector<double> prompt_scores;
    std::vector<AttributeKind> prompt_tags;
    double mean_attention_t2v = 0.0;
    double mean_attention_v2t = 0.0;
};

struct ForwardOutput {
    TokenMatrix o_final; // O^N, N_v x D
    TokenMatrix t_final; // T^N, N_l x D
    std::vector<SelectionTrace> traces;
};

// Baseline deep-fusion layer: bidirectional cross-attention, then the two
// encoder blocks on the residual sums.
std::pair<TokenMatrix, TokenMatrix> glip_layer(const TokenMatrix& o, const TokenMatrix& t,
                                               const ModelWeights& weights, int layer_index);

// Add fused rows back at their source indices; all other rows pass through
// bit-exactly.
TokenMatrix scatter_residual(const TokenMatrix& o, const TokenMatrix& fused,
                             const std::vector<int>& indices);

// Mean-pool the fused rows and add the pooled vector to every unmasked row;
// masked rows pass through bit-exactly.
TokenMatrix pool_broadcast_residual(const TokenMatrix& t, const TokenMatrix& fused);

// One structural-fusion layer: mutual Top-P/Top-Q selection, selected-token
// cross-attention in both directions, residual re-integration, encoders.
struct StructuralLayerResult {
    TokenMatrix o;
    TokenMatrix t;
    SelectionTrace trace;
};
StructuralLayerResult structural_layer(const TokenMatrix& o, const TokenMatrix& t,
                                       const TokenMatrix& bank_layer,
                                       const std::vector<AttributeKind>& bank_tags,
                                       const ModelWeights& weights, int layer_index,
                                       const DetectionConfig& config);

// Full forward pass from pixels and target text to O^N / T^N. Layers in the
// fusion set run glip_layer (baseline) or structural_layer (structural);
// all other layers run the two encoder stacks independently.
ForwardOutput forward(const ToyImage& image, const std::string& target_text,
                      const KnowledgeBank& bank, const ModelWeights& weights,
                      const DetectionConfig& config);

} // namespace groundbank
