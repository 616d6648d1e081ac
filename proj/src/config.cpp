#include "groundbank/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/sha256.hpp"

namespace groundbank {

Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return Mode::baseline;
    if (s == "structural") return Mode::structural;
    throw format_error("unknown mode: '" + s + "' (expected baseline or structural)");
}

const char* to_string(Mode m) { return m == Mode::baseline ? "baseline" : "structural"; }

std::vector<int> DetectionConfig::effective_fusion_layers() const {
    if (fusion_layers_explicit) return fusion_layers;
    std::vector<int> all;
    for (int i = 1; i <= layers; ++i) all.push_back(i);
    return all;
}

void DetectionConfig::validate() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
        throw config_error("config: heads must divide dim");
    if (layers < 0) throw config_error("config: layers must be >= 0");
    if (n_l <= 0) throw config_error("config: n_l must be positive");
    if (patch <= 0) throw config_error("config: patch must be positive");
    if (top_p < 1 || top_q < 1) throw config_error("config: top_p and top_q must be >= 1");
    for (int l : fusion_layers)
        if (l < 1 || l > layers)
            throw config_error("config: fusion layer " + std::to_string(l) +
                               " outside 1.." + std::to_string(layers));
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw config_error("config: nms_iou must be in (0,1]");
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
        throw config_error("config: score_threshold must be in [0,1]");
    if (anchor_scales.empty()) throw config_error("config: anchor_scales must be nonempty");
    for (double s : anchor_scales)
        if (!(s > 0.0)) throw config_error("config: anchor scales must be positive");
}

std::vector<int> parse_fusion_layers(const std::string& text) {
    std::vector<int> out;
    if (text == "none" || text.empty()) return out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        std::string part = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
        size_t dash = part.find('-');
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stoi(part));
            } else {
                const int lo = std::stoi(part.substr(0, dash));
                const int hi = std::stoi(part.substr(dash + 1));
                if (hi < lo) throw format_error("descending fusion-layer range: " + part);
                for (int i = lo; i <= hi; ++i) out.push_back(i);
            }
        } catch (const std::invalid_argument&) {
            throw format_error("cannot parse fusion layers: '" + text + "'");
        } catch (const std::out_of_range&) {
            throw format_error("fusion layer out of range: '" + text + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

DetectionConfig config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("config unparseable: ") + e.what());
    }
    DetectionConfig c;
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.n_l = j.value("n_l", c.n_l);
    c.patch = j.value("patch", c.patch);
    c.top_p = j.value("top_p", c.top_p);
    c.top_q = j.value("top_q", c.top_q);
    if (j.contains("fusion_layers")) {
        c.fusion_layers = j.at("fusion_layers").get<std::vector<int>>();
        c.fusion_layers_explicit = true;
    }
    if (j.contains("selection_reduction"))
        c.selection_reduction = reduction_from_string(j.at("selection_reduction"));
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode"));
    c.seed = j.value("seed", c.seed);
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.score_threshold = j.value("score_threshold", c.score_threshold);
    if (j.contains("anchor_scales"))
        c.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
    c.validate();
    return c;
}

DetectionConfig load_config(const std::string& path) {
    return config_from_json_text(read_file_bytes(path));
}

std::string config_to_json_text(const DetectionConfig& c) {
    nlohmann::json j;
    j["dim"] = c.dim;
    j["heads"] = c.heads;
    j["layers"] = c.layers;
    j["n_l"] = c.n_l;
    j["patch"] = c.patch;
    j["top_p"] = c.top_p;
    j["top_q"] = c.top_q;
    j["fusion_layers"] = c.effective_fusion_layers();
    j["selection_reduction"] = to_string(c.selection_reduction);
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    j["nms_iou"] = c.nms_iou;
    j["score_threshold"] = c.score_threshold;
    j["anchor_scales"] = c.anchor_scales;
    return j.dump(2) + "\n";
}

std::string config_digest(const DetectionConfig& c) {
    return sha256_hex(config_to_json_text(c));
}

} // namespace groundbank
