// groundbank CLI: build prompt/knowledge banks, run grounded detection over a
// dataset, reproduce the Top-P/Top-Q and fusion-layer ablation grids, generate
// planted-signal synthetic datasets, and aggregate trace analyses.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/config.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/harness.hpp"
#include "groundbank/prompt_forge.hpp"

using namespace groundbank;

namespace {

// Exit codes, one per error family.
enum ExitCode {
    kOk = 0,
    kUsage = 1,
    kIoError = 2,
    kFormatError = 3,
    kIntegrityError = 4,
    kStaleBank = 5,
    kCapacityError = 6,
    kConfigError = 7,
    kNumericError = 8,
    kMetricError = 9,
    kClientError = 10,
};

struct CommonArgs {
    std::string config_path;
    std::string dataset_path;
    std::string bank_path;
    std::string weights_path;
    std::string mode;
    std::string fusion_layers;
    std::optional<int> top_p;
    std::optional<int> top_q;
    std::optional<uint64_t> seed;
    std::string out_dir = "out";
    std::string category;
    std::string fixtures = default_fixture_dir();
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config JSON file");
    cmd->add_option("--dataset", args.dataset_path, "annotations JSON file");
    cmd->add_option("--bank", args.bank_path, "knowledge-bank cache file");
    cmd->add_option("--weights", args.weights_path,
                    "weights file; generated from the config seed and saved here if missing");
    cmd->add_option("--mode", args.mode, "baseline or structural");
    cmd->add_option("--top-p", args.top_p, "visual tokens selected per layer");
    cmd->add_option("--top-q", args.top_q, "prompt tokens selected per layer");
    cmd->add_option("--fusion-layers", args.fusion_layers, "e.g. '4-6', '1,3,5', or 'none'");
    cmd->add_option("--seed", args.seed, "global seed override");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--category", args.category, "category to detect / build a bank for");
    cmd->add_option("--fixtures", args.fixtures, "fixture data directory");
}

// config file -> CLI overrides -> environment; the resolved value is stamped
// into every output.
DetectionConfig resolve_config(const CommonArgs& args) {
    DetectionConfig config;
    if (!args.config_path.empty()) config = load_config(args.config_path);
    if (!args.mode.empty()) config.mode = mode_from_string(args.mode);
    if (args.top_p) config.top_p = *args.top_p;
    if (args.top_q) config.top_q = *args.top_q;
    if (!args.fusion_layers.empty()) {
        config.fusion_layers = parse_fusion_layers(args.fusion_layers);
        config.fusion_layers_explicit = true;
    }
    if (args.seed) config.seed = *args.seed;
    if (const char* env_seed = std::getenv("GROUNDBANK_SEED"))
        config.seed = std::strtoull(env_seed, nullptr, 10);
    config.validate();
    return config;
}

ModelWeights resolve_weights(const CommonArgs& args, const DetectionConfig& config) {
    if (!args.weights_path.empty() && std::filesystem::exists(args.weights_path)) {
        ModelWeights w = load_weights(args.weights_path);
        ensure_compatible(w, config.dim, config.heads, config.layers);
        return w;
    }
    ModelWeights w = seeded_weights(config.dim, config.heads, config.layers, config.seed);
    if (!args.weights_path.empty()) save_weights(w, args.weights_path);
    return w;
}

std::unique_ptr<VqaClient> resolve_vqa_client(const CommonArgs& args) {
    if (const char* endpoint = std::getenv("GROUNDBANK_VQA_ENDPOINT"))
        return std::make_unique<HttpVqaClient>(ClientOptions{endpoint});
    return std::make_unique<MockVqaClient>(vqa_fixture_path(args.fixtures));
}

std::unique_ptr<LlmClient> resolve_llm_client(const CommonArgs& args) {
    if (const char* endpoint = std::getenv("GROUNDBANK_LLM_ENDPOINT"))
        return std::make_unique<HttpLlmClient>(ClientOptions{endpoint});
    return std::make_unique<MockLlmClient>(attribute_fixture_path(args.fixtures));
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());
}

void stamp_config(const DetectionConfig& config, const std::string& out_dir) {
    write_file_bytes(out_dir + "/resolved_config.json", config_to_json_text(config));
}

struct LoadedRun {
    DetectionConfig config;
    Dataset dataset;
    std::vector<ToyImage> images;
    KnowledgeBank bank;
    ModelWeights weights;
    std::string category;
};

LoadedRun load_run(const CommonArgs& args) {
    LoadedRun run;
    run.config = resolve_config(args);
    if (args.dataset_path.empty()) throw config_error("--dataset is required");
    if (args.bank_path.empty()) throw config_error("--bank is required");
    run.dataset = load_dataset(args.dataset_path);
    run.images = load_all_images(run.dataset);
    run.weights = resolve_weights(args, run.config);
    run.bank = load_bank(args.bank_path);
    ensure_fresh(run.bank, run.weights, run.config.bank_config());
    run.category = args.category.empty()
                       ? (run.dataset.categories.empty() ? "" : run.dataset.categories[0].name)
                       : args.category;
    return run;
}

void write_run_artifacts(const RunArtifacts& artifacts, const std::string& out_dir) {
    write_file_bytes(out_dir + "/predictions.jsonl", artifacts.predictions_jsonl);
    write_file_bytes(out_dir + "/traces.jsonl", artifacts.traces_jsonl);
    write_file_bytes(out_dir + "/metrics.json", artifacts.metrics_json);
}

// ---- subcommands -------------------------------------------------------------

int cmd_bank_build(const CommonArgs& args, const std::string& mix_from,
                   const std::string& prompt_bank_path) {
    const DetectionConfig config = resolve_config(args);
    if (args.category.empty()) throw config_error("--category is required for bank-build");
    ensure_out_dir(args.out_dir);

    PromptBank prompt_bank;
    if (!prompt_bank_path.empty() && std::filesystem::exists(prompt_bank_path)) {
        prompt_bank = load_prompt_bank(prompt_bank_path);
    } else {
        auto llm = resolve_llm_client(args);
        prompt_bank = build_prompt_bank(fixture_categories(args.fixtures), *llm);
        if (!args.dataset_path.empty()) {
            // instance-level prompts for every dataset image, via the VQA client
            auto vqa = resolve_vqa_client(args);
            const Dataset dataset = load_dataset(args.dataset_path);
            for (const DatasetImage& im : dataset.images) {
                try {
                    InstancePromptResult inst = generate_instance_prompt(
                        im.file_name, args.category, default_questions(args.category), *vqa);
                    prompt_bank.instances[{args.category, im.file_name}] = inst.terms;
                    for (const std::string& failure : inst.failures)
                        std::cerr << "vqa failure: " << failure << "\n";
                } catch (const client_error& e) {
                    std::cerr << "vqa failure: " << e.what() << "\n";
                }
            }
        }
    }
    save_prompt_bank(prompt_bank, args.out_dir + "/prompt_bank.json");

    auto cat = prompt_bank.categories.find(args.category);
    if (cat == prompt_bank.categories.end())
        throw config_error("prompt bank has no category '" + args.category + "'");

    std::vector<std::vector<InstanceTerm>> instance_prompts;
    for (const auto& [key, terms] : prompt_bank.instances)
        if (key.first == args.category) instance_prompts.push_back(terms);

    const AttributeSet* mix_in = nullptr;
    if (!mix_from.empty()) {
        auto other = prompt_bank.categories.find(mix_from);
        if (other == prompt_bank.categories.end())
            throw config_error("prompt bank has no category '" + mix_from + "' to mix from");
        mix_in = &other->second;
    }
    const CategoryPrompt prompt = build_category_prompt(args.category, instance_prompts,
                                                        cat->second, config.n_l, mix_in);

    const ModelWeights weights = resolve_weights(args, config);
    const KnowledgeBank bank =
        build_bank(prompt.text, prompt.tags, weights, config.bank_config());
    const std::string bank_path =
        args.bank_path.empty() ? args.out_dir + "/bank.gbk" : args.bank_path;
    save_bank(bank, bank_path);
    stamp_config(config, args.out_dir);

    std::cout << "prompt: " << prompt.text << "\n";
    std::cout << "bank: " << bank_path << " (source digest " << bank.source_digest.substr(0, 12)
              << "...)\n";
    return kOk;
}

int cmd_detect(const CommonArgs& args) {
    const LoadedRun run = load_run(args);
    ensure_out_dir(args.out_dir);
    const RunArtifacts artifacts =
        run_detect(run.config, run.dataset, run.images, run.category, run.bank, run.weights);
    write_run_artifacts(artifacts, args.out_dir);
    stamp_config(run.config, args.out_dir);
    std::cout << "AP " << artifacts.metrics.ap << "  AP50 " << artifacts.metrics.ap50 << "\n";
    return kOk;
}

int cmd_ablate_pq(const CommonArgs& args, const std::string& p_list, const std::string& q_list) {
    const LoadedRun run = load_run(args);
    ensure_out_dir(args.out_dir);
    const std::vector<int> p_values = parse_fusion_layers(p_list); // same "1,5,10" syntax
    const std::vector<int> q_values = parse_fusion_layers(q_list);
    const PqGrid grid = run_pq_grid(run.config, run.dataset, run.images, run.category, run.bank,
                                    run.weights, p_values, q_values);
    write_file_bytes(args.out_dir + "/pq_grid.json", pq_grid_to_json(grid));
    write_file_bytes(args.out_dir + "/pq_grid.tsv", render_pq_table(grid));
    stamp_config(run.config, args.out_dir);
    std::cout << render_pq_table(grid);
    return kOk;
}

int cmd_ablate_layers(const CommonArgs& args, const std::string& strategy_name) {
    const LoadedRun run = load_run(args);
    ensure_out_dir(args.out_dir);
    const LayerAblationStrategy strategy = layer_strategy_from_string(strategy_name);
    const auto rows = run_layer_ablation(run.config, run.dataset, run.images, run.category,
                                         run.bank, run.weights, strategy);
    write_file_bytes(args.out_dir + "/layer_ablation_" + strategy_name + ".json",
                     layer_ablation_to_json(rows, strategy));
    stamp_config(run.config, args.out_dir);
    for (const LayerAblationRow& row : rows)
        std::cout << "k=" << row.k << "  AP " << row.metrics.ap << "  AP50 " << row.metrics.ap50
                  << "\n";
    return kOk;
}

int cmd_synth(const CommonArgs& args, const std::string& spec_path) {
    if (spec_path.empty()) throw config_error("--spec is required for synth");
    const SynthSpec spec = load_synth_spec(spec_path);
    const SynthResult result = synth_dataset(spec);
    write_synth_output(result, args.out_dir);
    std::cout << "wrote " << result.dataset.images.size() << " images, "
              << result.dataset.annotations.size() << " boxes to " << args.out_dir << "\n";
    return kOk;
}

int cmd_freq(const CommonArgs& args, const std::string& trace_path) {
    if (trace_path.empty()) throw config_error("--traces is required for freq");
    const FrequencyReport report = aggregate_selection_frequency(read_file_bytes(trace_path));
    ensure_out_dir(args.out_dir);
    write_file_bytes(args.out_dir + "/selection_frequency.json",
                     frequency_report_to_json(report));
    std::cout << frequency_report_to_json(report);
    return kOk;
}

int cmd_attn(const CommonArgs& args, const std::string& trace_path) {
    if (trace_path.empty()) throw config_error("--traces is required for attn");
    const AttentionStrengthReport report = attention_strength_stats(read_file_bytes(trace_path));
    ensure_out_dir(args.out_dir);
    write_file_bytes(args.out_dir + "/attention_strength.json",
                     attention_report_to_json(report));
    std::cout << "images " << report.per_image.size() << ", overall mean attention strength "
              << report.overall_mean << "\n";
    return kOk;
}

int cmd_noisy(const CommonArgs& args, const std::string& noisy_bank_path) {
    if (noisy_bank_path.empty()) throw config_error("--noisy-bank is required for noisy");
    const LoadedRun run = load_run(args);
    const KnowledgeBank noisy_bank = load_bank(noisy_bank_path);
    ensure_fresh(noisy_bank, run.weights, run.config.bank_config());
    ensure_out_dir(args.out_dir);
    const NoisyKnowledgeReport report = run_noisy_knowledge(
        run.config, run.dataset, run.images, run.category, run.bank, noisy_bank, run.weights);
    write_file_bytes(args.out_dir + "/noisy_knowledge.json", noisy_report_to_json(report));
    stamp_config(run.config, args.out_dir);
    std::cout << "clean AP50 " << report.clean.ap50 << ", noisy AP50 " << report.noisy.ap50
              << ", delta " << report.delta_ap50 << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"grounded detection with a layer-wise prompt knowledge bank"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string mix_from, prompt_bank_path, p_list = "1,5,10,15,20", q_list = "5,10,15,20";
    std::string strategy = "single_layer", spec_path, trace_path, noisy_bank_path;

    CLI::App* bank_build = app.add_subcommand("bank-build", "build prompt + knowledge banks");
    add_common_flags(bank_build, args);
    bank_build->add_option("--mix-from", mix_from,
                           "inject another category's attributes (noisy-knowledge bank)");
    bank_build->add_option("--prompt-bank", prompt_bank_path, "existing prompt-bank document");

    CLI::App* detect_cmd = app.add_subcommand("detect", "run detection over a dataset");
    add_common_flags(detect_cmd, args);

    CLI::App* ablate_pq = app.add_subcommand("ablate-pq", "Top-P x Top-Q grid");
    add_common_flags(ablate_pq, args);
    ablate_pq->add_option("--p-values", p_list, "comma list of P values");
    ablate_pq->add_option("--q-values", q_list, "comma list of Q values");

    CLI::App* ablate_layers = app.add_subcommand("ablate-layers", "fusion-layer ablation");
    add_common_flags(ablate_layers, args);
    ablate_layers->add_option("--strategy", strategy, "single_layer or suffix_range");

    CLI::App* synth = app.add_subcommand("synth", "generate a planted-signal dataset");
    add_common_flags(synth, args);
    synth->add_option("--spec", spec_path, "synth spec JSON");

    CLI::App* freq = app.add_subcommand("freq", "selection-frequency report from traces");
    add_common_flags(freq, args);
    freq->add_option("--traces", trace_path, "trace JSONL file");

    CLI::App* attn = app.add_subcommand("attn", "attention-strength stats from traces");
    add_common_flags(attn, args);
    attn->add_option("--traces", trace_path, "trace JSONL file");

    CLI::App* noisy = app.add_subcommand("noisy", "clean vs noisy bank comparison");
    add_common_flags(noisy, args);
    noisy->add_option("--noisy-bank", noisy_bank_path, "noisy knowledge-bank file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (bank_build->parsed()) return cmd_bank_build(args, mix_from, prompt_bank_path);
        if (detect_cmd->parsed()) return cmd_detect(args);
        if (ablate_pq->parsed()) return cmd_ablate_pq(args, p_list, q_list);
        if (ablate_layers->parsed()) return cmd_ablate_layers(args, strategy);
        if (synth->parsed()) return cmd_synth(args, spec_path);
        if (freq->parsed()) return cmd_freq(args, trace_path);
        if (attn->parsed()) return cmd_attn(args, trace_path);
        if (noisy->parsed()) return cmd_noisy(args, noisy_bank_path);
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIoError;
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kFormatError;
    } catch (const integrity_error& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kIntegrityError;
    } catch (const stale_bank_error& e) {
        std::cerr << "stale bank: " << e.what() << "\n";
        return kStaleBank;
    } catch (const capacity_error& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return kCapacityError;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericError;
    } catch (const metric_error& e) {
        std::cerr << "metric error: " << e.what() << "\n";
        return kMetricError;
    } catch (const client_error& e) {
        std::cerr << "client error: " << e.what() << "\n";
        return kClientError;
    }
    return kUsage;
}
