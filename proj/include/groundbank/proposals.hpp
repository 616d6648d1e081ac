#pragma once

#include <string>
#include <vector>

#include "groundbank/fusion.hpp"

namespace groundbank {

struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double area() const { return (x2 - x1) * (y2 - y1); }
    bool operator==(const Box& other) const = default;
};

struct Proposal {
    Box box;
    double score = 0.0; // in [0,1]
    int category = 0;
};

// One anchor set per patch cell, centered on the cell, side = scale * patch,
// clipped to the image. Anchors are scale-major: the first grid-cell block
// uses scales[0], so with scales starting at 1 anchor j maps to image-token
// row j.
std::vector<Box> anchor_grid(int image_width, int image_height, int patch,
                             const std::vector<double>& scales);

double iou(const Box& a, const Box& b);

// Word-region alignment score per anchor:
// logistic(max over unmasked target tokens of dot(o_final[cell], t_final[k]) / sqrt(D)).
std::vector<double> grounding_scores(const TokenMatrix& o_final, const TokenMatrix& t_final,
                                     const std::vector<Box>& anchors);

// Greedy NMS by descending score (ties toward the earlier anchor), applied
// within each category. Survivors keep their original scores.
std::vector<Proposal> nms(const std::vector<Proposal>& proposals, double iou_threshold);

struct DetectResult {
    std::vector<Proposal> proposals;
    std::vector<SelectionTrace> traces;
};

// forward -> grounding -> score threshold -> NMS.
DetectResult detect(const ToyImage& image, const std::string& target_text,
                    const KnowledgeBank& bank, const ModelWeights& weights,
                    const DetectionConfig& config, int category_id = 0);

struct GroundTruthBox {
    int image_id = 0;
    int category_id = 0;
    Box box;
};

struct PredictionRecord {
    int image_id = 0;
    int category_id = 0;
    Box box;
    double score = 0.0;
};

struct EvalResult {
    double ap = 0.0;   // mean over IoU thresholds 0.50:0.05:0.95
    double ap50 = 0.0; // at IoU 0.50
    std::vector<std::pair<double, double>> per_threshold; // (threshold, AP)
};

std::vector<double> default_iou_thresholds(); // 0.50, 0.55, ..., 0.95

// Greedy score-ranked matching per category and threshold; AP is the area
// under the all-point interpolated precision-recall envelope, averaged over
// categories that have ground truth. Throws metric_error with no GT at all.
EvalResult evaluate_ap(const std::vector<PredictionRecord>& predictions,
                       const std::vector<GroundTruthBox>& ground_truth,
                       const std::vector<double>& thresholds = default_iou_thresholds());

} // namespace groundbank
