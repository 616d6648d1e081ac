#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundbank/tensor.hpp"

namespace groundbank {

// Small grayscale or RGB image with pixel values in [0, 1], stored row-major
// with interleaved channels.
struct ToyImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> pixels;

    double at(int x, int y, int c = 0) const {
        return pixels[(size_t(y) * width + x) * channels + c];
    }
    double& at(int x, int y, int c = 0) {
        return pixels[(size_t(y) * width + x) * channels + c];
    }
};

constexpr const char* kPadSymbol = "[PAD]";

struct TextTokens {
    std::vector<std::string> tokens;
};

// Lowercase and split on whitespace and punctuation (commas, periods,
// brackets and similar). Hyphens survive, so "pink-white" is one token.
TextTokens tokenize(const std::string& text);

// Hash each token into a unit-norm pseudo-random row; pad to pad_to rows.
// Identical (token, seed) pairs always give identical rows; the pad symbol
// and pad rows embed to zero with mask=false.
TokenMatrix embed_text(const TextTokens& tokens, int dim, int pad_to, uint64_t seed);

// Patch embedding: one row per patch cell, row-major over the grid. Each row
// is a seeded linear map of the flattened patch plus the patch's mean
// intensity added on the last coordinate.
TokenMatrix embed_image(const ToyImage& img, int patch, int dim, uint64_t seed);

// The seeded linear map and bias behind embed_image, exposed so synthetic
// data construction can optimize against the exact same map.
Mat image_patch_map(int patch, int channels, int dim, uint64_t seed);
std::vector<double> image_patch_bias(int dim, uint64_t seed);

// Patch-grid geometry shared with the proposal head's anchors.
struct CellBox {
    double x1, y1, x2, y2;
};
int grid_width(const ToyImage& img, int patch);
int grid_height(const ToyImage& img, int patch);
CellBox cell_box(int cell_index, int grid_w, int patch);

// Textual PGM (P2) / PPM (P3) fixtures, maxval 255.
ToyImage load_image(const std::string& path);
void save_image(const ToyImage& img, const std::string& path);

} // namespace groundbank
