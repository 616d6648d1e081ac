#include "groundbank/selection.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "groundbank/errors.hpp"

namespace groundbank {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Reduction reduction_from_string(const std::string& s) {
    if (s == "max") return Reduction::max;
    if (s == "mean") return Reduction::mean;
    throw format_error("unknown selection reduction: '" + s + "'");
}

const char* to_string(Reduction r) { return r == Reduction::max ? "max" : "mean"; }

std::vector<double> score_against(const TokenMatrix& candidates, const TokenMatrix& reference,
                                  Reduction reduction) {
    validate(candidates, "score_against candidates");
    validate(reference, "score_against reference");
    if (candidates.dim != reference.dim)
        throw config_error("score_against: dim mismatch");
    const int ref_count = reference.unmasked_count();
    if (ref_count == 0) throw numeric_error("score_against: reference fully masked");

    std::vector<double> scores(size_t(candidates.rows), kNegInf);
    for (int j = 0; j < candidates.rows; ++j) {
        if (candidates.masked(j)) continue;
        auto cand = candidates.row(j);
        double best = kNegInf;
        double sum = 0.0;
        for (int r = 0; r < reference.rows; ++r) {
            if (reference.masked(r)) continue;
            const double d = dot(cand, reference.row(r));
            best = std::max(best, d);
            sum += d;
        }
        scores[size_t(j)] = reduction == Reduction::max ? best : sum / double(ref_count);
    }
    return scores;
}

std::vector<int> select_top(const std::vector<double>& scores, int k,
                            const std::vector<uint8_t>& mask) {
    if (k < 1) throw config_error("select_top: k must be >= 1");
    if (scores.size() != mask.size())
        throw config_error("select_top: scores/mask length mismatch");

    std::vector<int> order;
    order.reserve(scores.size());
    for (int i = 0; i < int(scores.size()); ++i)
        if (mask[size_t(i)]) order.push_back(i);

    // ties broken toward the lowest index
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] > scores[size_t(b)];
        return a < b;
    });

    if (int(order.size()) > k) order.resize(size_t(k));
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

SelectedTokens gather(const TokenMatrix& source, const std::vector<int>& indices,
                      const std::vector<double>& scores) {
    SelectedTokens out;
    out.indices = indices;
    out.vectors.rows = int(indices.size());
    out.vectors.dim = source.dim;
    out.vectors.data.resize(indices.size() * size_t(source.dim));
    out.vectors.mask.assign(indices.size(), 1);
    for (size_t j = 0; j < indices.size(); ++j) {
        auto src = source.row(indices[j]);
        std::copy(src.begin(), src.end(),
                  out.vectors.data.begin() + ptrdiff_t(j * size_t(source.dim)));
        out.scores.push_back(scores[size_t(indices[j])]);
    }
    return out;
}

} // namespace

SelectedTokens select_visual_top_p(const TokenMatrix& o, const TokenMatrix& bank_layer, int p,
                                   Reduction reduction) {
    const std::vector<double> scores = score_against(o, bank_layer, reduction);
    return gather(o, select_top(scores, p, o.mask), scores);
}

SelectedTokens select_prompt_top_q(const TokenMatrix& bank_layer, const SelectedTokens& kv,
                                   int q, Reduction reduction) {
    if (kv.count() == 0) throw config_error("select_prompt_top_q: no selected visual tokens");
    const std::vector<double> scores = score_against(bank_layer, kv.vectors, reduction);
    return gather(bank_layer, select_top(scores, q, bank_layer.mask), scores);
}

std::pair<std::vector<int>, std::vector<int>> selection_oracle(const TokenMatrix& o,
                                                               const TokenMatrix& bank_layer,
                                                               int p, int q,
                                                               Reduction reduction) {
    // Full N_v x N_l dot table, reduced and sorted exhaustively. Kept naive on
    // purpose: this is the reference the fast path is tested against.
    const int nv = o.rows;
    const int nl = bank_layer.rows;
    std::vector<std::vector<double>> table(size_t(nv), std::vector<double>(size_t(nl), 0.0));
    for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nl; ++j) table[size_t(i)][size_t(j)] = dot(o.row(i), bank_layer.row(j));

    auto reduce_row = [&](const std::vector<double>& dots, const std::vector<uint8_t>& use) {
        double best = kNegInf;
        double sum = 0.0;
        int n = 0;
        for (size_t j = 0; j < dots.size(); ++j) {
            if (!use[j]) continue;
            best = std::max(best, dots[j]);
            sum += dots[j];
            ++n;
        }
        if (n == 0) throw numeric_error("selection_oracle: nothing to reduce over");
        return reduction == Reduction::max ? best : sum / double(n);
    };

    auto top_of = [&](const std::vector<double>& scores, const std::vector<uint8_t>& mask,
                      int k) {
        std::vector<int> all;
        for (int i = 0; i < int(scores.size()); ++i)
            if (mask[size_t(i)]) all.push_back(i);
        std::vector<int> picked;
        std::vector<uint8_t> used(scores.size(), 0);
        while (int(picked.size()) < k && picked.size() < all.size()) {
            int best = -1;
            for (int i : all) {
                if (used[size_t(i)]) continue;
                if (best == -1 || scores[size_t(i)] > scores[size_t(best)]) best = i;
            }
            used[size_t(best)] = 1;
            picked.push_back(best);
        }
        std::sort(picked.begin(), picked.end());
        return picked;
    };

    std::vector<double> visual_scores(size_t(nv), kNegInf);
    for (int i = 0; i < nv; ++i)
        if (!o.masked(i)) visual_scores[size_t(i)] = reduce_row(table[size_t(i)], bank_layer.mask);
    const std::vector<int> visual = top_of(visual_scores, o.mask, p);

    std::vector<uint8_t> visual_selected(size_t(nv), 0);
    for (int i : visual) visual_selected[size_t(i)] = 1;
    std::vector<double> prompt_scores(size_t(nl), kNegInf);
    for (int j = 0; j < nl; ++j) {
        if (bank_layer.masked(j)) continue;
        std::vector<double> dots(size_t(nv), 0.0);
        for (int i = 0; i < nv; ++i) dots[size_t(i)] = table[size_t(i)][size_t(j)];
        prompt_scores[size_t(j)] = reduce_row(dots, visual_selected);
    }
    const std::vector<int> prompt = top_of(prompt_scores, bank_layer.mask, q);

    return {visual, prompt};
}

} // namespace groundbank
