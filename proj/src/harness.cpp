#include "groundbank/harness.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "groundbank/errors.hpp"

namespace groundbank {

namespace {

// Results land in per-index slots, so scheduling cannot change any output.
void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const size_t workers = std::min<size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

nlohmann::json trace_record(int image_id, const SelectionTrace& trace) {
    nlohmann::json tags = nlohmann::json::array();
    for (AttributeKind k : trace.prompt_tags) tags.push_back(to_string(k));
    return {{"image_id", image_id},
            {"layer", trace.layer},
            {"visual_indices", trace.visual_indices},
            {"prompt_indices", trace.prompt_indices},
            {"prompt_tags", tags},
            {"visual_scores", trace.visual_scores},
            {"prompt_scores", trace.prompt_scores},
            {"mean_attention_t2v", trace.mean_attention_t2v},
            {"mean_attention_v2t", trace.mean_attention_v2t}};
}

} // namespace

std::vector<ToyImage> load_all_images(const Dataset& dataset) {
    std::vector<ToyImage> images(dataset.images.size());
    parallel_for(dataset.images.size(),
                 [&](size_t i) { images[i] = load_dataset_image(dataset, dataset.images[i]); });
    return images;
}

RunArtifacts run_detect(const DetectionConfig& config, const Dataset& dataset,
                        const std::vector<ToyImage>& images, const std::string& category_name,
                        const KnowledgeBank& bank, const ModelWeights& weights) {
    config.validate();
    if (dataset.images.empty()) throw metric_error("dataset has zero images, metric undefined");
    if (images.size() != dataset.images.size())
        throw config_error("run_detect: image list does not match dataset entries");
    const DatasetCategory& category = dataset.category_by_name(category_name);

    std::vector<DetectResult> results(images.size());
    parallel_for(images.size(), [&](size_t i) {
        results[i] = detect(images[i], category.name, bank, weights, config, category.id);
    });

    // Serialize in image order regardless of completion order.
    RunArtifacts artifacts;
    std::vector<PredictionRecord> predictions;
    for (size_t i = 0; i < images.size(); ++i) {
        const int image_id = dataset.images[i].id;
        for (const Proposal& p : results[i].proposals) {
            predictions.push_back({image_id, p.category, p.box, p.score});
            const nlohmann::json line = {{"image_id", image_id},  {"category_id", p.category},
                                         {"x1", p.box.x1},        {"y1", p.box.y1},
                                         {"x2", p.box.x2},        {"y2", p.box.y2},
                                         {"score", p.score}};
            artifacts.predictions_jsonl += line.dump() + "\n";
        }
        for (const SelectionTrace& t : results[i].traces)
            artifacts.traces_jsonl += trace_record(image_id, t).dump() + "\n";
    }

    artifacts.metrics = evaluate_ap(predictions, dataset.annotations_of(category.id));

    nlohmann::json metrics;
    metrics["ap"] = artifacts.metrics.ap;
    metrics["ap50"] = artifacts.metrics.ap50;
    nlohmann::json per_threshold = nlohmann::json::array();
    for (const auto& [t, ap] : artifacts.metrics.per_threshold)
        per_threshold.push_back({{"iou", t}, {"ap", ap}});
    metrics["per_threshold"] = per_threshold;
    metrics["category"] = category.name;
    metrics["image_count"] = dataset.images.size();
    metrics["resolved_config"] = nlohmann::json::parse(config_to_json_text(config));
    metrics["digests"] = {{"weights", weights.digest()},
                          {"bank_source", bank.source_digest},
                          {"config", config_digest(config)}};
    artifacts.metrics_json = metrics.dump(2) + "\n";
    return artifacts;
}

PqGrid run_pq_grid(const DetectionConfig& config, const Dataset& dataset,
                   const std::vector<ToyImage>& images, const std::string& category_name,
                   const KnowledgeBank& bank, const ModelWeights& weights,
                   const std::vector<int>& p_values, const std::vector<int>& q_values) {
    if (p_values.empty() || q_values.empty())
        throw config_error("run_pq_grid: value lists must be nonempty");

    PqGrid grid;
    grid.p_values = p_values;
    grid.q_values = q_values;
    for (int q : q_values) {
        std::vector<EvalResult> row;
        for (int p : p_values) {
            DetectionConfig cell = config;
            cell.top_p = p;
            cell.top_q = q;
            row.push_back(run_detect(cell, dataset, images, category_name, bank, weights).metrics);
        }
        grid.results.push_back(std::move(row));
    }
    return grid;
}

std::string render_pq_table(const PqGrid& grid, bool ap50) {
    std::ostringstream out;
    out << "Top-Q \\ Top-P";
    for (int p : grid.p_values) out << "\t" << p;
    out << "\n";
    for (size_t qi = 0; qi < grid.q_values.size(); ++qi) {
        out << grid.q_values[qi];
        for (size_t pi = 0; pi < grid.p_values.size(); ++pi) {
            const EvalResult& r = grid.results[qi][pi];
            const double v = (ap50 ? r.ap50 : r.ap) * 100.0;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.1f", v);
            const bool highlight = grid.p_values[pi] == 10 && grid.q_values[qi] == 10;
            out << "\t" << (highlight ? "*" : "") << buf;
        }
        out << "\n";
    }
    return out.str();
}

std::string pq_grid_to_json(const PqGrid& grid) {
    nlohmann::json j;
    j["p_values"] = grid.p_values;
    j["q_values"] = grid.q_values;
    nlohmann::json rows = nlohmann::json::array();
    for (size_t qi = 0; qi < grid.q_values.size(); ++qi) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t pi = 0; pi < grid.p_values.size(); ++pi) {
            const EvalResult& r = grid.results[qi][pi];
            row.push_back({{"p", grid.p_values[pi]},
                           {"q", grid.q_values[qi]},
                           {"ap", r.ap},
                           {"ap50", r.ap50}});
        }
        rows.push_back(row);
    }
    j["rows"] = rows;
    j["highlight"] = {{"p", 10}, {"q", 10}};
    return j.dump(2) + "\n";
}

LayerAblationStrategy layer_strategy_from_string(const std::string& s) {
    if (s == "single_layer") return LayerAblationStrategy::single_layer;
    if (s == "suffix_range") return LayerAblationStrategy::suffix_range;
    throw format_error("unknown layer-ablation strategy: '" + s + "'");
}

std::vector<LayerAblationRow> run_layer_ablation(const DetectionConfig& config,
                                                 const Dataset& dataset,
                                                 const std::vector<ToyImage>& images,
                                                 const std::string& category_name,
                                                 const KnowledgeBank& bank,
                                                 const ModelWeights& weights,
                                                 LayerAblationStrategy strategy) {
    if (config.layers < 1) throw config_error("run_layer_ablation: needs at least one layer");

    std::vector<LayerAblationRow> rows;
    for (int k = 1; k <= config.layers; ++k) {
        LayerAblationRow row;
        row.k = k;
        if (strategy == LayerAblationStrategy::single_layer) {
            row.fusion_layers = {k};
        } else {
            for (int l = k; l <= config.layers; ++l) row.fusion_layers.push_back(l);
        }
        DetectionConfig cell = config;
        cell.fusion_layers = row.fusion_layers;
        cell.fusion_layers_explicit = true;
        row.metrics = run_detect(cell, dataset, images, category_name, bank, weights).metrics;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string layer_ablation_to_json(const std::vector<LayerAblationRow>& rows,
                                   LayerAblationStrategy strategy) {
    nlohmann::json j;
    j["strategy"] = strategy == LayerAblationStrategy::single_layer ? "single_layer"
                                                                    : "suffix_range";
    nlohmann::json out = nlohmann::json::array();
    for (const LayerAblationRow& row : rows)
        out.push_back({{"k", row.k},
                       {"fusion_layers", row.fusion_layers},
                       {"ap", row.metrics.ap},
                       {"ap50", row.metrics.ap50}});
    j["rows"] = out;
    return j.dump(2) + "\n";
}

NoisyKnowledgeReport run_noisy_knowledge(const DetectionConfig& config, const Dataset& dataset,
                                         const std::vector<ToyImage>& images,
                                         const std::string& category_name,
                                         const KnowledgeBank& clean_bank,
                                         const KnowledgeBank& noisy_bank,
                                         const ModelWeights& weights) {
    NoisyKnowledgeReport report;
    report.clean =
        run_detect(config, dataset, images, category_name, clean_bank, weights).metrics;
    report.noisy =
        run_detect(config, dataset, images, category_name, noisy_bank, weights).metrics;
    report.delta_ap50 = report.clean.ap50 - report.noisy.ap50;
    report.clean_bank_digest = clean_bank.source_digest;
    report.noisy_bank_digest = noisy_bank.source_digest;
    return report;
}

std::string noisy_report_to_json(const NoisyKnowledgeReport& report) {
    nlohmann::json j;
    j["clean"] = {{"ap", report.clean.ap}, {"ap50", report.clean.ap50}};
    j["noisy"] = {{"ap", report.noisy.ap}, {"ap50", report.noisy.ap50}};
    j["delta_ap50"] = report.delta_ap50;
    j["clean_bank_digest"] = report.clean_bank_digest;
    j["noisy_bank_digest"] = report.noisy_bank_digest;
    return j.dump(2) + "\n";
}

namespace {

// Parse one JSONL trace file; fn sees (line number, parsed record).
void for_each_trace_record(const std::string& trace_text,
                           const std::function<void(int, const nlohmann::json&)>& fn) {
    std::istringstream in(trace_text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw format_error("trace line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.contains("image_id") || !record.contains("layer"))
            throw format_error("trace line " + std::to_string(line_no) +
                               ": missing image_id/layer");
        fn(line_no, record);
    }
}

} // namespace

FrequencyReport aggregate_selection_frequency(const std::string& trace_text) {
    FrequencyReport report;
    std::set<int> image_ids;
    for_each_trace_record(trace_text, [&](int line_no, const nlohmann::json& record) {
        if (!record.contains("prompt_tags"))
            throw format_error("trace line " + std::to_string(line_no) + ": missing prompt_tags");
        image_ids.insert(record.at("image_id").get<int>());
        const int layer = record.at("layer").get<int>();
        for (const auto& tag : record.at("prompt_tags")) {
            attribute_kind_from_string(tag.get<std::string>()); // reject unknown kinds
            report.per_layer[layer][tag.get<std::string>()] += 1;
            report.total += 1;
        }
    });
    report.images = int(image_ids.size());
    return report;
}

std::string frequency_report_to_json(const FrequencyReport& report) {
    nlohmann::json j;
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [layer, kinds] : report.per_layer) {
        nlohmann::json k = nlohmann::json::object();
        for (const auto& [kind, count] : kinds) k[kind] = count;
        layers[std::to_string(layer)] = k;
    }
    j["per_layer"] = layers;
    j["total"] = report.total;
    j["images"] = report.images;
    return j.dump(2) + "\n";
}

AttentionStrengthReport attention_strength_stats(const std::string& trace_text) {
    AttentionStrengthReport report;
    std::map<int, std::pair<double, int>> sums; // image -> (sum, records)
    for_each_trace_record(trace_text, [&](int line_no, const nlohmann::json& record) {
        if (!record.contains("mean_attention_t2v") || !record.contains("mean_attention_v2t"))
            throw format_error("trace line " + std::to_string(line_no) +
                               ": missing attention fields");
        const double strength = (record.at("mean_attention_t2v").get<double>() +
                                 record.at("mean_attention_v2t").get<double>()) /
                                2.0;
        auto& [sum, count] = sums[record.at("image_id").get<int>()];
        sum += strength;
        count += 1;
    });

    report.histogram.assign(size_t(report.bins), 0);
    double total = 0.0;
    for (const auto& [image_id, entry] : sums) {
        const double mean = entry.first / double(entry.second);
        report.per_image.push_back({image_id, mean});
        total += mean;
        int bin = int(mean * report.bins);
        bin = std::max(0, std::min(report.bins - 1, bin));
        report.histogram[size_t(bin)] += 1;
    }
    report.overall_mean = report.per_image.empty() ? 0.0 : total / double(report.per_image.size());
    return report;
}

std::string attention_report_to_json(const AttentionStrengthReport& report) {
    nlohmann::json j;
    nlohmann::json per_image = nlohmann::json::array();
    for (const auto& [image_id, mean] : report.per_image)
        per_image.push_back({{"image_id", image_id}, {"mean_strength", mean}});
    j["per_image"] = per_image;
    j["histogram"] = {{"bins", report.bins}, {"range", {0.0, 1.0}}, {"counts", report.histogram}};
    j["overall_mean"] = report.overall_mean;
    return j.dump(2) + "\n";
}

} // namespace groundbank
