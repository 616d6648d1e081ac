#include "groundbank/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/rng.hpp"

namespace groundbank {

const DatasetCategory& Dataset::category_by_name(const std::string& name) const {
    for (const DatasetCategory& c : categories)
        if (c.name == name) return c;
    throw config_error("dataset has no category named '" + name + "'");
}

std::vector<GroundTruthBox> Dataset::annotations_of(int category_id) const {
    std::vector<GroundTruthBox> out;
    for (const GroundTruthBox& gt : annotations)
        if (gt.category_id == category_id) out.push_back(gt);
    return out;
}

Dataset load_dataset(const std::string& annotation_path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file_bytes(annotation_path));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("annotations unparseable: ") + e.what());
    }

    Dataset ds;
    ds.root_dir = std::filesystem::path(annotation_path).parent_path().string();
    if (ds.root_dir.empty()) ds.root_dir = ".";
    for (const auto& im : doc.at("images"))
        ds.images.push_back({im.at("id").get<int>(), im.at("file_name").get<std::string>(),
                             im.at("width").get<int>(), im.at("height").get<int>()});
    for (const auto& c : doc.at("categories"))
        ds.categories.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
    for (const auto& a : doc.at("annotations")) {
        const auto bbox = a.at("bbox").get<std::vector<double>>();
        if (bbox.size() != 4) throw format_error("annotation bbox must be [x, y, w, h]");
        GroundTruthBox gt;
        gt.image_id = a.at("image_id").get<int>();
        gt.category_id = a.at("category_id").get<int>();
        gt.box = {bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]};
        ds.annotations.push_back(gt);
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& annotation_path) {
    nlohmann::json doc;
    nlohmann::json images = nlohmann::json::array();
    for (const DatasetImage& im : dataset.images)
        images.push_back({{"id", im.id},
                          {"file_name", im.file_name},
                          {"width", im.width},
                          {"height", im.height}});
    nlohmann::json cats = nlohmann::json::array();
    for (const DatasetCategory& c : dataset.categories)
        cats.push_back({{"id", c.id}, {"name", c.name}});
    nlohmann::json anns = nlohmann::json::array();
    for (const GroundTruthBox& gt : dataset.annotations)
        anns.push_back({{"image_id", gt.image_id},
                        {"category_id", gt.category_id},
                        {"bbox", {gt.box.x1, gt.box.y1, gt.box.x2 - gt.box.x1,
                                  gt.box.y2 - gt.box.y1}}});
    doc["images"] = images;
    doc["categories"] = cats;
    doc["annotations"] = anns;
    write_file_bytes(annotation_path, doc.dump(2) + "\n");
}

ToyImage load_dataset_image(const Dataset& dataset, const DatasetImage& entry) {
    return load_image(dataset.root_dir + "/" + entry.file_name);
}

// ---- synthetic data ----------------------------------------------------------

void SynthSpec::validate() const {
    if (image_count <= 0) throw config_error("synth: image_count must be positive");
    if (image_size <= 0 || patch <= 0 || image_size % patch != 0)
        throw config_error("synth: image_size must be a positive multiple of patch");
    if (dim <= 1) throw config_error("synth: dim must be > 1");
    if (categories.empty()) throw config_error("synth: at least one category required");
    for (const SynthCategory& c : categories)
        if (c.name.empty() || c.planted_token.empty())
            throw config_error("synth: category name and planted_token must be nonempty");
    if (objects_per_image < 0) throw config_error("synth: objects_per_image must be >= 0");
    if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0))
        throw config_error("synth: distractor_rate must be in [0,1]");
    const int cells = (image_size / patch) * (image_size / patch);
    if (objects_per_image + 1 > cells)
        throw config_error("synth: more objects than grid cells");
}

SynthSpec synth_spec_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("synth spec unparseable: ") + e.what());
    }
    SynthSpec spec;
    spec.image_count = j.value("image_count", spec.image_count);
    spec.image_size = j.value("image_size", spec.image_size);
    spec.patch = j.value("patch", spec.patch);
    spec.dim = j.value("dim", spec.dim);
    spec.objects_per_image = j.value("objects_per_image", spec.objects_per_image);
    spec.distractor_rate = j.value("distractor_rate", spec.distractor_rate);
    spec.seed = j.value("seed", spec.seed);
    for (const auto& c : j.at("categories"))
        spec.categories.push_back(
            {c.at("name").get<std::string>(), c.at("planted_token").get<std::string>()});
    spec.validate();
    return spec;
}

SynthSpec load_synth_spec(const std::string& path) {
    return synth_spec_from_json_text(read_file_bytes(path));
}

namespace {

// Planted direction: the embedding row of the designated bank token.
std::vector<double> planted_direction(const std::string& token, int dim, uint64_t seed) {
    TextTokens one;
    one.tokens.push_back(token);
    const TokenMatrix m = embed_text(one, dim, 1, seed);
    auto row = m.row(0);
    return {row.begin(), row.end()};
}

// Pixel pattern in [0,1] maximizing dot(direction, embed of the patch). The
// embedding is linear in the pixels, so the optimum over the unit box is a
// 0/1 pattern given by the sign of each pixel's coefficient.
std::vector<double> optimal_patch(const std::vector<double>& direction, int patch, int dim,
                                  uint64_t seed) {
    const int n_in = patch * patch;
    const Mat a = image_patch_map(patch, 1, dim, seed);
    std::vector<double> pattern(size_t(n_in), 0.0);
    for (int i = 0; i < n_in; ++i) {
        double coeff = direction[size_t(dim) - 1] / double(n_in); // mean-intensity term
        for (int d = 0; d < dim; ++d) coeff += direction[size_t(d)] * a.at(d, i);
        pattern[size_t(i)] = coeff > 0.0 ? 1.0 : 0.0;
    }
    return pattern;
}

void paint_patch(ToyImage& img, int cell, int patch, const std::vector<double>& pattern) {
    const int gw = img.width / patch;
    const int gx = cell % gw;
    const int gy = cell / gw;
    size_t k = 0;
    for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
            img.at(gx * patch + px, gy * patch + py) = pattern[k++];
}

// Quantize to the PGM 0..255 scale so written fixtures reload bit-equal.
void quantize(ToyImage& img) {
    for (double& v : img.pixels) v = std::round(v * 255.0) / 255.0;
}

} // namespace

SynthResult synth_dataset(const SynthSpec& spec) {
    spec.validate();

    const int grid = spec.image_size / spec.patch;
    const int cells = grid * grid;

    // Per-category planted directions and optimal patch patterns.
    std::vector<std::vector<double>> directions;
    std::vector<std::vector<double>> patterns;
    for (const SynthCategory& c : spec.categories) {
        directions.push_back(planted_direction(c.planted_token, spec.dim, spec.seed));
        patterns.push_back(optimal_patch(directions.back(), spec.patch, spec.dim, spec.seed));
    }
    const std::vector<double> decoy_direction = planted_direction("decoy", spec.dim, spec.seed);
    const std::vector<double> decoy_pattern =
        optimal_patch(decoy_direction, spec.patch, spec.dim, spec.seed);

    SynthResult result;
    for (size_t c = 0; c < spec.categories.size(); ++c)
        result.dataset.categories.push_back({int(c) + 1, spec.categories[c].name});

    for (int img_idx = 0; img_idx < spec.image_count; ++img_idx) {
        bool ok = false;
        for (uint64_t attempt = 0; attempt < 32 && !ok; ++attempt) {
            SplitMix64 rng(derive_seed(spec.seed, "synth.image", uint64_t(img_idx) * 64 + attempt));

            ToyImage img;
            img.width = img.height = spec.image_size;
            img.channels = 1;
            img.pixels.assign(size_t(spec.image_size) * spec.image_size, 0.0);
            for (double& v : img.pixels) v = rng.next_in(0.0, 0.3);

            // choose distinct cells: objects first, then an optional distractor
            std::set<int> used;
            std::vector<std::pair<int, int>> objects; // (cell, category index)
            for (int obj = 0; obj < spec.objects_per_image; ++obj) {
                int cell;
                do {
                    cell = int(rng.next_below(uint64_t(cells)));
                } while (used.count(cell));
                used.insert(cell);
                const int cat = int(rng.next_below(spec.categories.size()));
                objects.push_back({cell, cat});
                paint_patch(img, cell, spec.patch, patterns[size_t(cat)]);
            }
            if (rng.next_double() < spec.distractor_rate && int(used.size()) < cells) {
                int cell;
                do {
                    cell = int(rng.next_below(uint64_t(cells)));
                } while (used.count(cell));
                used.insert(cell);
                paint_patch(img, cell, spec.patch, decoy_pattern);
            }
            quantize(img);

            // verify the construction: every planted cell must beat every cell
            // not planted with the same category on the planted direction
            const TokenMatrix emb = embed_image(img, spec.patch, spec.dim, spec.seed);
            ok = true;
            for (const auto& [cell, cat] : objects) {
                const auto& dir = directions[size_t(cat)];
                const double planted_dot = dot(emb.row(cell), dir);
                for (int other = 0; other < cells && ok; ++other) {
                    if (other == cell) continue;
                    bool same_plant = false;
                    for (const auto& [ocell, ocat] : objects)
                        if (ocell == other && ocat == cat) same_plant = true;
                    if (same_plant) continue;
                    if (dot(emb.row(other), dir) >= planted_dot) ok = false;
                }
                if (!ok) break;
            }
            if (!ok) continue;

            const int image_id = img_idx + 1;
            result.dataset.images.push_back({image_id,
                                             "img_" + std::to_string(image_id) + ".pgm",
                                             spec.image_size, spec.image_size});
            result.images.push_back(std::move(img));
            for (const auto& [cell, cat] : objects) {
                const CellBox cb = cell_box(cell, grid, spec.patch);
                result.dataset.annotations.push_back(
                    {image_id, int(cat) + 1, {cb.x1, cb.y1, cb.x2, cb.y2}});
                result.planted.push_back({image_id, cell, spec.categories[size_t(cat)].name,
                                          spec.categories[size_t(cat)].planted_token});
            }
        }
        if (!ok)
            throw numeric_error("synth: construction check failed repeatedly for image " +
                                std::to_string(img_idx + 1) + "; try another seed");
    }
    return result;
}

void write_synth_output(const SynthResult& result, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());

    for (size_t i = 0; i < result.images.size(); ++i)
        save_image(result.images[i], out_dir + "/" + result.dataset.images[i].file_name);
    save_dataset(result.dataset, out_dir + "/annotations.json");

    nlohmann::json planted = nlohmann::json::array();
    for (const PlantedObject& p : result.planted)
        planted.push_back({{"image_id", p.image_id},
                           {"cell_index", p.cell_index},
                           {"category", p.category},
                           {"token", p.token}});
    write_file_bytes(out_dir + "/planted_map.json", planted.dump(2) + "\n");
}

} // namespace groundbank
