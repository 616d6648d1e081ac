#include "groundbank/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "groundbank/errors.hpp"

namespace groundbank {

std::vector<Box> anchor_grid(int image_width, int image_height, int patch,
                             const std::vector<double>& scales) {
    if (patch <= 0 || image_width % patch != 0 || image_height % patch != 0)
        throw config_error("anchor_grid: image dimensions not divisible by patch");
    const int gw = image_width / patch;
    const int gh = image_height / patch;

    std::vector<Box> anchors;
    anchors.reserve(size_t(gw) * gh * scales.size());
    for (double scale : scales) {
        for (int cell = 0; cell < gw * gh; ++cell) {
            // grown around the same cell geometry the patch embedder uses
            const CellBox cb = cell_box(cell, gw, patch);
            const double cx = (cb.x1 + cb.x2) / 2.0;
            const double cy = (cb.y1 + cb.y2) / 2.0;
            const double half = scale * patch / 2.0;
            Box b{cx - half, cy - half, cx + half, cy + half};
            b.x1 = std::max(0.0, b.x1);
            b.y1 = std::max(0.0, b.y1);
            b.x2 = std::min(double(image_width), b.x2);
            b.y2 = std::min(double(image_height), b.y2);
            anchors.push_back(b);
        }
    }
    return anchors;
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> grounding_scores(const TokenMatrix& o_final, const TokenMatrix& t_final,
                                     const std::vector<Box>& anchors) {
    validate(o_final, "grounding o_final");
    validate(t_final, "grounding t_final");
    if (o_final.dim != t_final.dim) throw config_error("grounding_scores: dim mismatch");
    if (t_final.unmasked_count() == 0)
        throw numeric_error("grounding_scores: target representation fully masked");
    if (anchors.size() % size_t(o_final.rows) != 0)
        throw config_error("grounding_scores: anchor count not a multiple of token rows");

    const double inv_sqrt_d = 1.0 / std::sqrt(double(o_final.dim));
    std::vector<double> scores;
    scores.reserve(anchors.size());
    for (size_t a = 0; a < anchors.size(); ++a) {
        const int cell = int(a % size_t(o_final.rows));
        auto orow = o_final.row(cell);
        double best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < t_final.rows; ++k) {
            if (t_final.masked(k)) continue;
            best = std::max(best, dot(orow, t_final.row(k)));
        }
        scores.push_back(1.0 / (1.0 + std::exp(-best * inv_sqrt_d)));
    }
    return scores;
}

std::vector<Proposal> nms(const std::vector<Proposal>& proposals, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
        throw config_error("nms: threshold must be in (0,1]");

    std::vector<size_t> order(proposals.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return proposals[a].score > proposals[b].score;
    });

    std::vector<Proposal> kept;
    for (size_t idx : order) {
        const Proposal& cand = proposals[idx];
        bool suppressed = false;
        for (const Proposal& k : kept) {
            if (k.category != cand.category) continue;
            if (iou(k.box, cand.box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

DetectResult detect(const ToyImage& image, const std::string& target_text,
                    const KnowledgeBank& bank, const ModelWeights& weights,
                    const DetectionConfig& config, int category_id) {
    ForwardOutput fwd = forward(image, target_text, bank, weights, config);
    const std::vector<Box> anchors =
        anchor_grid(image.width, image.height, config.patch, config.anchor_scales);
    const std::vector<double> scores = grounding_scores(fwd.o_final, fwd.t_final, anchors);

    std::vector<Proposal> candidates;
    for (size_t a = 0; a < anchors.size(); ++a) {
        if (scores[a] < config.score_threshold) continue;
        candidates.push_back({anchors[a], scores[a], category_id});
    }

    DetectResult res;
    res.proposals = nms(candidates, config.nms_iou);
    res.traces = std::move(fwd.traces);
    return res;
}

std::vector<double> default_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

namespace {

// AP for one category at one IoU threshold: greedy match in rank order, then
// area under the interpolated precision envelope.
double ap_single(const std::vector<const PredictionRecord*>& ranked,
                 const std::map<int, std::vector<const GroundTruthBox*>>& gt_by_image,
                 int total_gt, double threshold) {
    if (total_gt == 0) return 0.0;

    std::map<const GroundTruthBox*, bool> matched;
    std::vector<bool> is_tp(ranked.size(), false);
    for (size_t i = 0; i < ranked.size(); ++i) {
        const PredictionRecord* pred = ranked[i];
        auto it = gt_by_image.find(pred->image_id);
        if (it == gt_by_image.end()) continue;
        const GroundTruthBox* best = nullptr;
        double best_iou = 0.0;
        for (const GroundTruthBox* gt : it->second) {
            if (matched[gt]) continue;
            const double v = iou(pred->box, gt->box);
            if (v > best_iou) {
                best_iou = v;
                best = gt;
            }
        }
        if (best != nullptr && best_iou >= threshold) {
            matched[best] = true;
            is_tp[i] = true;
        }
    }

    std::vector<double> precision, recall;
    int tp = 0;
    for (size_t i = 0; i < ranked.size(); ++i) {
        tp += is_tp[i] ? 1 : 0;
        precision.push_back(double(tp) / double(i + 1));
        recall.push_back(double(tp) / double(total_gt));
    }

    // precision envelope from the right
    for (int i = int(precision.size()) - 2; i >= 0; --i)
        precision[size_t(i)] = std::max(precision[size_t(i)], precision[size_t(i) + 1]);

    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

} // namespace

EvalResult evaluate_ap(const std::vector<PredictionRecord>& predictions,
                       const std::vector<GroundTruthBox>& ground_truth,
                       const std::vector<double>& thresholds) {
    if (ground_truth.empty())
        throw metric_error("evaluate_ap: no ground-truth boxes, metric undefined");
    if (thresholds.empty()) throw config_error("evaluate_ap: no thresholds");
    for (const PredictionRecord& p : predictions)
        if (!(p.score >= 0.0 && p.score <= 1.0))
            throw config_error("evaluate_ap: prediction score outside [0,1]");

    std::set<int> categories;
    for (const GroundTruthBox& gt : ground_truth) categories.insert(gt.category_id);

    EvalResult result;
    for (double threshold : thresholds) {
        double sum = 0.0;
        for (int cat : categories) {
            std::vector<const PredictionRecord*> ranked;
            for (const PredictionRecord& p : predictions)
                if (p.category_id == cat) ranked.push_back(&p);
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const PredictionRecord* a, const PredictionRecord* b) {
                                 return a->score > b->score;
                             });

            std::map<int, std::vector<const GroundTruthBox*>> gt_by_image;
            int total_gt = 0;
            for (const GroundTruthBox& gt : ground_truth) {
                if (gt.category_id != cat) continue;
                gt_by_image[gt.image_id].push_back(&gt);
                ++total_gt;
            }
            sum += ap_single(ranked, gt_by_image, total_gt, threshold);
        }
        result.per_threshold.push_back({threshold, sum / double(categories.size())});
    }

    result.ap50 = result.per_threshold.front().second;
    for (const auto& [t, ap] : result.per_threshold)
        if (std::abs(t - 0.5) < 1e-12) result.ap50 = ap;
    double mean = 0.0;
    for (const auto& [t, ap] : result.per_threshold) mean += ap;
    result.ap = mean / double(result.per_threshold.size());
    return result;
}

} // namespace groundbank
