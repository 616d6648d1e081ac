#pragma once

#include <string>
#include <vector>

#include "groundbank/encoding.hpp"
#include "groundbank/proposals.hpp"

namespace groundbank {

struct DatasetImage {
    int id = 0;
    std::string file_name;
    int width = 0;
    int height = 0;
};

struct DatasetCategory {
    int id = 0;
    std::string name;
};

// Annotation document: images, categories, and ground-truth boxes as
// {image_id, category_id, x, y, w, h} records.
struct Dataset {
    std::vector<DatasetImage> images;
    std::vector<DatasetCategory> categories;
    std::vector<GroundTruthBox> annotations;
    std::string root_dir; // where image files live, set on load

    const DatasetCategory& category_by_name(const std::string& name) const;
    std::vector<GroundTruthBox> annotations_of(int category_id) const;
};

Dataset load_dataset(const std::string& annotation_path);
void save_dataset(const Dataset& dataset, const std::string& annotation_path);
ToyImage load_dataset_image(const Dataset& dataset, const DatasetImage& entry);

// ---- planted-signal synthetic data -----------------------------------------

struct SynthCategory {
    std::string name;
    std::string planted_token; // a bank attribute token; its embedding is the
                               // planted direction
};

struct SynthSpec {
    int image_count = 0;
    int image_size = 0; // square images
    int patch = 8;
    int dim = 32;       // embedding width used for construction checks
    std::vector<SynthCategory> categories;
    int objects_per_image = 1;
    double distractor_rate = 0.0; // chance an image gains one off-category decoy
    uint64_t seed = 0;

    void validate() const;
};

SynthSpec synth_spec_from_json_text(const std::string& text);
SynthSpec load_synth_spec(const std::string& path);

struct PlantedObject {
    int image_id = 0;
    int cell_index = 0;
    std::string category;
    std::string token;
};

struct SynthResult {
    Dataset dataset;               // file_name fields point into out_dir
    std::vector<ToyImage> images;  // index-aligned with dataset.images
    std::vector<PlantedObject> planted;
};

// Generate images whose planted cells maximize the dot product between their
// patch embedding and the category's planted direction; the construction is
// verified cell-by-cell at generation time.
SynthResult synth_dataset(const SynthSpec& spec);

// Write images (PGM), annotations, and the planted map under out_dir.
void write_synth_output(const SynthResult& result, const std::string& out_dir);

} // namespace groundbank
