#pragma once

#include <map>
#include <string>
#include <vector>

#include "groundbank/dataset.hpp"
#include "groundbank/proposals.hpp"

namespace groundbank {

// Everything a detection run emits. The serialized artifacts are kept as
// strings so byte-identity across runs is directly testable.
struct RunArtifacts {
    EvalResult metrics;
    std::string predictions_jsonl;
    std::string traces_jsonl;
    std::string metrics_json; // metrics + resolved config + digests
};

std::vector<ToyImage> load_all_images(const Dataset& dataset);

// Detect the given category on every image (in parallel), evaluate against
// the category's ground truth, and serialize predictions/traces/metrics.
RunArtifacts run_detect(const DetectionConfig& config, const Dataset& dataset,
                        const std::vector<ToyImage>& images, const std::string& category_name,
                        const KnowledgeBank& bank, const ModelWeights& weights);

// ---- ablation harnesses -----------------------------------------------------

struct PqGrid {
    std::vector<int> p_values; // columns
    std::vector<int> q_values; // rows
    std::vector<std::vector<EvalResult>> results; // [q][p]
};

// Full cartesian Top-P x Top-Q grid; the emitted table has Q rows and P
// columns with the (P=10, Q=10) cell highlighted when present.
PqGrid run_pq_grid(const DetectionConfig& config, const Dataset& dataset,
                   const std::vector<ToyImage>& images, const std::string& category_name,
                   const KnowledgeBank& bank, const ModelWeights& weights,
                   const std::vector<int>& p_values, const std::vector<int>& q_values);

std::string render_pq_table(const PqGrid& grid, bool ap50 = false);
std::string pq_grid_to_json(const PqGrid& grid);

enum class LayerAblationStrategy { single_layer, suffix_range };
LayerAblationStrategy layer_strategy_from_string(const std::string& s);

struct LayerAblationRow {
    int k = 0;
    std::vector<int> fusion_layers;
    EvalResult metrics;
};

// single_layer: fusion_layers={k}; suffix_range: fusion_layers={k..N}; one
// row per k in 1..N.
std::vector<LayerAblationRow> run_layer_ablation(const DetectionConfig& config,
                                                 const Dataset& dataset,
                                                 const std::vector<ToyImage>& images,
                                                 const std::string& category_name,
                                                 const KnowledgeBank& bank,
                                                 const ModelWeights& weights,
                                                 LayerAblationStrategy strategy);

std::string layer_ablation_to_json(const std::vector<LayerAblationRow>& rows,
                                   LayerAblationStrategy strategy);

struct NoisyKnowledgeReport {
    EvalResult clean;
    EvalResult noisy;
    double delta_ap50 = 0.0; // clean - noisy
    std::string clean_bank_digest;
    std::string noisy_bank_digest;
};

NoisyKnowledgeReport run_noisy_knowledge(const DetectionConfig& config, const Dataset& dataset,
                                         const std::vector<ToyImage>& images,
                                         const std::string& category_name,
                                         const KnowledgeBank& clean_bank,
                                         const KnowledgeBank& noisy_bank,
                                         const ModelWeights& weights);

std::string noisy_report_to_json(const NoisyKnowledgeReport& report);

// ---- trace analyses -----------------------------------------------------------

struct FrequencyReport {
    // layer -> attribute kind name -> selected count
    std::map<int, std::map<std::string, long>> per_layer;
    long total = 0;
    int images = 0; // distinct image ids seen in the trace
};

// Counts selected prompt tags per layer per kind from a trace file's text.
// Malformed records raise format_error with the line number.
FrequencyReport aggregate_selection_frequency(const std::string& trace_text);
std::string frequency_report_to_json(const FrequencyReport& report);

struct AttentionStrengthReport {
    std::vector<std::pair<int, double>> per_image; // (image_id, mean strength)
    std::vector<long> histogram;                   // fixed bins over [0,1]
    double overall_mean = 0.0;
    int bins = 20;
};

AttentionStrengthReport attention_strength_stats(const std::string& trace_text);
std::string attention_report_to_json(const AttentionStrengthReport& report);

} // namespace groundbank
