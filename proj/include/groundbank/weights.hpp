#pragma once

#include <string>
#include <vector>

#include "groundbank/kernels.hpp"

namespace groundbank {

// All learned-parameter stand-ins for one model: N vision encoder layers,
// N language encoder layers (shared between the main and auxiliary text
// branches), and per-layer cross-attention projections for each direction.
// Weights are deterministic functions of a seed; the artifact never trains.
struct ModelWeights {
    int dim = 0;
    int heads = 0;
    int layers = 0;
    uint64_t seed = 0;

    std::vector<EncoderLayerParams> vision_layers;   // f_I^1..f_I^N
    std::vector<EncoderLayerParams> language_layers; // f_L^1..f_L^N, also f_L2
    std::vector<AttentionParams> cross_t2v;          // query = image side
    std::vector<AttentionParams> cross_v2t;          // query = text side

    // Content digest over the serialized tensors; cached after first call.
    const std::string& digest() const;

  private:
    mutable std::string digest_;
};

// Deterministic pseudo-random weights. Attention projections are identity
// plus small noise and the feed-forward matrices are small, so token content
// survives the stack and similarity structure stays meaningful at desk scale.
ModelWeights seeded_weights(int dim, int heads, int layers, uint64_t seed);

// Manifest (tensor name -> shape) followed by a flat little-endian float64
// blob. The loader checks shape consistency and blob integrity.
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

// Throws config_error when the weights do not match the requested geometry.
void ensure_compatible(const ModelWeights& w, int dim, int heads, int layers);

} // namespace groundbank
