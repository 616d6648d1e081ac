#pragma once

#include <utility>
#include <vector>

#include "groundbank/tensor.hpp"

namespace groundbank {

// How the per-candidate similarity vector (one dot product per reference
// token) collapses to a scalar. Top-k selection itself is invariant to any
// monotone rescaling of these scores.
enum class Reduction { max, mean };

Reduction reduction_from_string(const std::string& s); // throws format_error
const char* to_string(Reduction r);

// Result of a Top-P / Top-Q pick: ascending source-row indices, the rows
// themselves (copied bit-exactly), and the reduced score per row.
struct SelectedTokens {
    std::vector<int> indices;
    TokenMatrix vectors; // |indices| x D, mask all true
    std::vector<double> scores;

    int count() const { return int(indices.size()); }
};

// score[j] = reduce over unmasked reference rows r of dot(candidate_j, ref_r).
// Masked candidate rows score -infinity. reference needs >= 1 unmasked row.
std::vector<double> score_against(const TokenMatrix& candidates, const TokenMatrix& reference,
                                  Reduction reduction = Reduction::max);

// The k unmasked indices with maximal score, ties broken toward the lowest
// index, returned ascending. k past the unmasked count saturates.
std::vector<int> select_top(const std::vector<double>& scores, int k,
                            const std::vector<uint8_t>& mask);

// Top-P image tokens most similar to the bank layer.
SelectedTokens select_visual_top_p(const TokenMatrix& o, const TokenMatrix& bank_layer, int p,
                                   Reduction reduction = Reduction::max);

// Top-Q bank tokens most similar to the already-selected visual tokens.
SelectedTokens select_prompt_top_q(const TokenMatrix& bank_layer, const SelectedTokens& kv,
                                   int q, Reduction reduction = Reduction::max);

// Brute-force reference: builds the full dot-product table and sorts
// exhaustively. Independent of the fast path; intended for small instances.
std::pair<std::vector<int>, std::vector<int>> selection_oracle(const TokenMatrix& o,
                                                               const TokenMatrix& bank_layer,
                                                               int p, int q,
                                                               Reduction reduction = Reduction::max);

} // namespace groundbank
