#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundbank/knowledge_bank.hpp"
#include "groundbank/selection.hpp"

namespace groundbank {

enum class Mode { baseline, structural };

Mode mode_from_string(const std::string& s); // throws format_error
const char* to_string(Mode m);

// Every knob of a detection run. A config resolves from defaults, then an
// optional JSON file, then command-line overrides; the resolved value is
// stamped into all output artifacts.
struct DetectionConfig {
    int dim = 32;
    int heads = 4;
    int layers = 6;
    int n_l = 64;
    int patch = 8;
    int top_p = 10;
    int top_q = 10;
    std::vector<int> fusion_layers; // empty vector means "all layers 1..N"
    bool fusion_layers_explicit = false;
    Reduction selection_reduction = Reduction::max;
    Mode mode = Mode::structural;
    uint64_t seed = 0;
    double nms_iou = 0.5;
    double score_threshold = 0.05;
    std::vector<double> anchor_scales = {1.0};

    // Fusion layer set with the "all layers" default applied.
    std::vector<int> effective_fusion_layers() const;

    BankBuildConfig bank_config() const { return {dim, n_l, layers, seed}; }

    void validate() const; // throws config_error
};

// "1,3,5" or "2-4" or "none"; values must lie in 1..layers (checked later).
std::vector<int> parse_fusion_layers(const std::string& text);

DetectionConfig config_from_json_text(const std::string& text);
DetectionConfig load_config(const std::string& path);
std::string config_to_json_text(const DetectionConfig& c);

// Digest of the resolved configuration, for output stamps.
std::string config_digest(const DetectionConfig& c);

} // namespace groundbank
