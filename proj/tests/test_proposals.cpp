#include <doctest.h>

#include <algorithm>
#include <map>

#include "groundbank/errors.hpp"
#include "groundbank/proposals.hpp"
#include "test_util.hpp"

using namespace groundbank;

namespace {

Box box(double x1, double y1, double x2, double y2) { return {x1, y1, x2, y2}; }

// Independent AP reference: same greedy-matching definition, written directly
// from the metric's statement with no shared code.
double reference_ap(std::vector<PredictionRecord> preds, std::vector<GroundTruthBox> gts,
                    double threshold) {
    std::stable_sort(preds.begin(), preds.end(),
                     [](const PredictionRecord& a, const PredictionRecord& b) {
                         return a.score > b.score;
                     });
    std::vector<bool> gt_used(gts.size(), false);
    std::vector<int> tp_flags;
    for (const PredictionRecord& p : preds) {
        int best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || gts[g].image_id != p.image_id) continue;
            const double ix = std::max(0.0, std::min(p.box.x2, gts[g].box.x2) -
                                                std::max(p.box.x1, gts[g].box.x1));
            const double iy = std::max(0.0, std::min(p.box.y2, gts[g].box.y2) -
                                                std::max(p.box.y1, gts[g].box.y1));
            const double inter = ix * iy;
            const double uni = p.box.area() + gts[g].box.area() - inter;
            const double v = uni > 0 ? inter / uni : 0.0;
            if (v > best_iou) {
                best_iou = v;
                best = int(g);
            }
        }
        if (best >= 0 && best_iou >= threshold) {
            gt_used[size_t(best)] = true;
            tp_flags.push_back(1);
        } else {
            tp_flags.push_back(0);
        }
    }

    // walk recall levels, taking the best precision at or beyond each level
    double ap = 0.0;
    int tp = 0;
    const int total = int(gts.size());
    for (size_t i = 0; i < tp_flags.size(); ++i) {
        if (!tp_flags[i]) continue;
        tp += 1;
        // precision envelope at this recall level
        double best_precision = 0.0;
        int tp2 = 0;
        for (size_t j = 0; j < tp_flags.size(); ++j) {
            tp2 += tp_flags[j];
            if (j >= i) best_precision = std::max(best_precision, double(tp2) / double(j + 1));
        }
        ap += best_precision / double(total);
    }
    return ap;
}

} // namespace

TEST_CASE("anchor_grid: counts, geometry, clipping") {
    const std::vector<Box> a1 = anchor_grid(8, 8, 4, {1.0});
    CHECK(a1.size() == 4);
    CHECK(a1[0] == box(0, 0, 4, 4));
    CHECK(a1[3] == box(4, 4, 8, 8));

    const std::vector<Box> a2 = anchor_grid(8, 8, 4, {1.0, 2.0});
    CHECK(a2.size() == 8);
    // scale-2 anchor at cell 0 is clipped to the image
    CHECK(a2[4] == box(0, 0, 6, 6));
}

TEST_CASE("iou: fixed values plus symmetry/range over random pairs") {
    CHECK(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0);
    CHECK(iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0);
    CHECK(iou(box(0, 0, 2, 2), box(1, 1, 3, 3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

    SplitMix64 rng(3);
    for (int trial = 0; trial < 10000; ++trial) {
        const Box a = box(rng.next_in(0, 10), rng.next_in(0, 10), rng.next_in(10, 20),
                          rng.next_in(10, 20));
        const Box b = box(rng.next_in(0, 10), rng.next_in(0, 10), rng.next_in(10, 20),
                          rng.next_in(10, 20));
        const double ab = iou(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(ab == doctest::Approx(iou(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("grounding_scores: logistic(0) on zero targets, ranking by dominant token") {
    TokenMatrix o(4, 8);
    SplitMix64 rng(5);
    for (double& v : o.data) v = rng.next_signed();
    TokenMatrix t(3, 8);
    t.mask = {1, 1, 0};

    const std::vector<Box> anchors = anchor_grid(8, 8, 4, {1.0});
    const std::vector<double> neutral = grounding_scores(o, t, anchors);
    for (double s : neutral) CHECK(s == doctest::Approx(0.5).epsilon(1e-12));

    // one huge target token dominates the max: scores rank by dot against it
    for (int c = 0; c < 8; ++c) t.row(0)[c] = 100.0 * o.row(2)[c];
    const std::vector<double> ranked = grounding_scores(o, t, anchors);
    CHECK(*std::max_element(ranked.begin(), ranked.end()) == ranked[2]);

    CHECK(grounding_scores(o, t, anchors) == ranked); // deterministic

    TokenMatrix masked = t;
    masked.mask = {0, 0, 0};
    CHECK_THROWS_AS(grounding_scores(o, masked, anchors), numeric_error);
}

TEST_CASE("nms: greedy trace, disjoint survivors, empty input") {
    std::vector<Proposal> pair{{box(0, 0, 10, 10), 0.9, 1}, {box(0, 1, 10, 11), 0.8, 1}};
    CHECK(iou(pair[0].box, pair[1].box) > 0.5);
    const std::vector<Proposal> kept = nms(pair, 0.5);
    CHECK(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    std::vector<Proposal> disjoint{{box(0, 0, 2, 2), 0.9, 1}, {box(5, 5, 7, 7), 0.8, 1}};
    CHECK(nms(disjoint, 0.5).size() == 2);

    CHECK(nms({}, 0.5).empty());
    CHECK_THROWS_AS(nms({}, 0.0), config_error);

    // different categories never suppress each other
    std::vector<Proposal> cross{{box(0, 0, 10, 10), 0.9, 1}, {box(0, 0, 10, 10), 0.8, 2}};
    CHECK(nms(cross, 0.5).size() == 2);
}

TEST_CASE("nms: survivors pairwise below threshold, scores come from the input") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Proposal> props;
        for (int i = 0; i < 12; ++i) {
            const double x = rng.next_in(0, 20), y = rng.next_in(0, 20);
            props.push_back({box(x, y, x + rng.next_in(2, 8), y + rng.next_in(2, 8)),
                             rng.next_double(), 1});
        }
        const double threshold = 0.4;
        const std::vector<Proposal> kept = nms(props, threshold);
        for (size_t i = 0; i < kept.size(); ++i)
            for (size_t j = i + 1; j < kept.size(); ++j)
                CHECK(iou(kept[i].box, kept[j].box) < threshold);
        for (const Proposal& k : kept) {
            const bool found = std::any_of(props.begin(), props.end(), [&](const Proposal& p) {
                return p.score == k.score && p.box == k.box;
            });
            CHECK(found);
        }
    }
}

TEST_CASE("evaluate_ap: frozen oracle fixtures") {
    // 1 GT; ranked predictions FP (IoU .3) then TP (IoU .8) -> AP50 = 0.5
    const std::vector<GroundTruthBox> gt{{1, 1, box(0, 0, 10, 10)}};
    const Box iou3 = box(0, 0, 10, 3); // IoU 0.3
    const Box iou8 = box(0, 0, 10, 8); // IoU 0.8
    CHECK(iou(iou3, gt[0].box) == doctest::Approx(0.3));
    CHECK(iou(iou8, gt[0].box) == doctest::Approx(0.8));
    const std::vector<PredictionRecord> preds{{1, 1, iou3, 0.95}, {1, 1, iou8, 0.90}};
    const EvalResult r = evaluate_ap(preds, gt);
    CHECK(r.ap50 == doctest::Approx(0.5).epsilon(1e-9));

    // perfect detector
    const std::vector<PredictionRecord> exact{{1, 1, gt[0].box, 1.0}};
    const EvalResult perfect = evaluate_ap(exact, gt);
    CHECK(perfect.ap == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(perfect.ap50 == doctest::Approx(1.0).epsilon(1e-9));

    // no predictions at all
    const EvalResult none = evaluate_ap({}, gt);
    CHECK(none.ap == 0.0);
    CHECK(none.ap50 == 0.0);

    CHECK_THROWS_AS(evaluate_ap(preds, {}), metric_error);
}

TEST_CASE("evaluate_ap: top-ranked true positive never lowers AP50") {
    SplitMix64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<GroundTruthBox> gts;
        std::vector<PredictionRecord> preds;
        for (int i = 0; i < 3; ++i) {
            const double x = rng.next_in(0, 50), y = rng.next_in(0, 50);
            gts.push_back({i, 1, box(x, y, x + 10, y + 10)});
            if (rng.next_double() < 0.7)
                preds.push_back({i, 1,
                                 box(x + rng.next_in(-4, 4), y + rng.next_in(-4, 4), x + 10,
                                     y + 10),
                                 rng.next_in(0.1, 0.8)});
        }
        // a fresh GT matched by a rank-1 prediction
        gts.push_back({99, 1, box(0, 0, 10, 10)});
        std::vector<PredictionRecord> boosted = preds;
        boosted.push_back({99, 1, box(0, 0, 10, 10), 0.99});

        double before = 0.0;
        try {
            before = evaluate_ap(preds, gts).ap50;
        } catch (const metric_error&) {
            continue;
        }
        CHECK(evaluate_ap(boosted, gts).ap50 >= before - 1e-12);
    }
}

TEST_CASE("evaluate_ap: agrees with the brute-force reference on micro fixtures") {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruthBox> gts;
        std::vector<PredictionRecord> preds;
        const int images = 1 + int(rng.next_below(3));
        for (int img = 0; img < images; ++img) {
            const int n_gt = 1 + int(rng.next_below(3));
            for (int g = 0; g < n_gt; ++g) {
                const double x = rng.next_in(0, 30), y = rng.next_in(0, 30);
                gts.push_back({img, 1, box(x, y, x + rng.next_in(4, 10), y + rng.next_in(4, 10))});
            }
            const int n_pred = int(rng.next_below(5));
            for (int p = 0; p < n_pred; ++p) {
                const GroundTruthBox& base = gts[rng.next_below(gts.size())];
                preds.push_back({img, 1,
                                 box(base.box.x1 + rng.next_in(-3, 3),
                                     base.box.y1 + rng.next_in(-3, 3),
                                     base.box.x2 + rng.next_in(-3, 3),
                                     base.box.y2 + rng.next_in(-3, 3)),
                                 rng.next_double()});
            }
        }
        for (PredictionRecord& p : preds) {
            if (p.box.x2 <= p.box.x1) p.box.x2 = p.box.x1 + 1;
            if (p.box.y2 <= p.box.y1) p.box.y2 = p.box.y1 + 1;
        }

        const EvalResult fast = evaluate_ap(preds, gts);
        for (const auto& [threshold, ap] : fast.per_threshold)
            CHECK(ap == doctest::Approx(reference_ap(preds, gts, threshold)).epsilon(1e-9));
    }
}
