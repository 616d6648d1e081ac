#pragma once

#include <string>
#include <vector>

#include "groundbank/attributes.hpp"
#include "groundbank/tensor.hpp"
#include "groundbank/weights.hpp"

namespace groundbank {

// The auxiliary branch output: per-layer prompt representations B^0..B^N,
// encoded once and reused read-only across every image of a category.
struct KnowledgeBank {
    std::vector<TokenMatrix> layers;       // N+1 snapshots, all n_l x dim
    std::vector<AttributeKind> token_tags; // length n_l, pad rows tagged pad
    std::string prompt_text;
    std::string weights_digest;
    std::string source_digest; // content hash of (prompt, tags, weights digest, config)

    int dim = 0;
    int n_l = 0;
    int n_layers = 0; // N
    uint64_t seed = 0;

    const TokenMatrix& layer(int i) const { return layers[size_t(i)]; }
};

struct BankBuildConfig {
    int dim = 0;
    int n_l = 0;
    int layers = 0;
    uint64_t seed = 0;
};

// Encode prompt_text through the shared language encoder stack. tags must
// carry one attribute kind per prompt token.
KnowledgeBank build_bank(const std::string& prompt_text, const std::vector<AttributeKind>& tags,
                         const ModelWeights& weights, const BankBuildConfig& config);

// Cache file: manifest (digest, N, N_l, D, tags, ...) + one binary tensor
// blob per layer. load(save(bank)) is bit-identical.
void save_bank(const KnowledgeBank& bank, const std::string& path);
KnowledgeBank load_bank(const std::string& path);

// Checksum of the layer tensors; used to assert the bank is never mutated.
std::string bank_content_checksum(const KnowledgeBank& bank);

// Throws stale_bank_error when the bank was built against different weights
// or a different geometry.
void ensure_fresh(const KnowledgeBank& bank, const ModelWeights& weights,
                  const BankBuildConfig& config);

} // namespace groundbank
