#include "groundbank/encoding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "groundbank/errors.hpp"
#include "groundbank/rng.hpp"

namespace groundbank {

namespace {

bool is_separator(char c) {
    switch (c) {
        case ',':
        case '.':
        case '[':
        case ']':
        case '(':
        case ')':
        case '{':
        case '}':
        case ';':
        case ':':
        case '!':
        case '?':
        case '"':
            return true;
        default:
            return std::isspace(static_cast<unsigned char>(c)) != 0;
    }
}

void fill_token_row(std::span<double> row, const std::string& token, uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, "embed_text") ^ fnv1a64(token));
    for (double& v : row) v = rng.next_signed();
    const double norm = l2_norm(row);
    if (norm > 0.0) {
        for (double& v : row) v /= norm;
    } else {
        row[0] = 1.0;
    }
}

} // namespace

TextTokens tokenize(const std::string& text) {
    TextTokens out;
    std::string current;
    for (char c : text) {
        if (is_separator(c)) {
            if (!current.empty()) {
                out.tokens.push_back(current);
                current.clear();
            }
        } else {
            current.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) out.tokens.push_back(current);
    return out;
}

TokenMatrix embed_text(const TextTokens& tokens, int dim, int pad_to, uint64_t seed) {
    if (dim <= 0 || pad_to <= 0) throw config_error("embed_text: dim and pad_to must be positive");
    if (int(tokens.tokens.size()) > pad_to)
        throw capacity_error("embed_text: " + std::to_string(tokens.tokens.size()) +
                             " tokens exceed capacity " + std::to_string(pad_to) + " by " +
                             std::to_string(tokens.tokens.size() - size_t(pad_to)));

    TokenMatrix out(pad_to, dim);
    for (int r = 0; r < pad_to; ++r) {
        if (r < int(tokens.tokens.size()) && tokens.tokens[size_t(r)] != kPadSymbol) {
            fill_token_row(out.row(r), tokens.tokens[size_t(r)], seed);
            out.mask[size_t(r)] = 1;
        } else {
            out.mask[size_t(r)] = 0; // zero row, never selectable
        }
    }
    return out;
}

int grid_width(const ToyImage& img, int patch) { return img.width / patch; }
int grid_height(const ToyImage& img, int patch) { return img.height / patch; }

CellBox cell_box(int cell_index, int grid_w, int patch) {
    const int gy = cell_index / grid_w;
    const int gx = cell_index % grid_w;
    return {double(gx * patch), double(gy * patch), double((gx + 1) * patch),
            double((gy + 1) * patch)};
}

// Patch-map magnitude. Large enough that a constructed on-prompt patch
// produces attention logits that clearly separate from background noise;
// top-k selection itself is scale-invariant.
constexpr double kPatchMapGain = 4.0;

Mat image_patch_map(int patch, int channels, int dim, uint64_t seed) {
    const int n_in = patch * patch * channels;
    return Mat::seeded(dim, n_in, derive_seed(seed, "embed_image.A"),
                       kPatchMapGain * std::sqrt(3.0 / double(n_in)));
}

std::vector<double> image_patch_bias(int dim, uint64_t seed) {
    std::vector<double> bias(size_t(dim), 0.0);
    SplitMix64 rng(derive_seed(seed, "embed_image.b"));
    for (double& v : bias) v = 0.05 * rng.next_signed();
    return bias;
}

TokenMatrix embed_image(const ToyImage& img, int patch, int dim, uint64_t seed) {
    if (patch <= 0 || dim <= 0) throw config_error("embed_image: patch and dim must be positive");
    if (img.width <= 0 || img.height <= 0 || (img.channels != 1 && img.channels != 3))
        throw config_error("embed_image: invalid image geometry");
    if (img.width % patch != 0 || img.height % patch != 0)
        throw config_error("embed_image: image dimensions " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + " not divisible by patch " +
                           std::to_string(patch));
    for (double v : img.pixels)
        if (!(v >= 0.0 && v <= 1.0)) throw numeric_error("embed_image: pixel outside [0,1]");

    const int n_in = patch * patch * img.channels;
    const Mat a = image_patch_map(patch, img.channels, dim, seed);
    Mat bias(1, dim);
    bias.data = image_patch_bias(dim, seed);

    const int gw = grid_width(img, patch);
    const int gh = grid_height(img, patch);
    TokenMatrix out(gw * gh, dim);

    std::vector<double> flat(size_t(n_in), 0.0);
    for (int cell = 0; cell < gw * gh; ++cell) {
        const int gx = cell % gw;
        const int gy = cell / gw;
        double mean = 0.0;
        size_t k = 0;
        for (int py = 0; py < patch; ++py)
            for (int px = 0; px < patch; ++px)
                for (int c = 0; c < img.channels; ++c) {
                    const double v = img.at(gx * patch + px, gy * patch + py, c);
                    flat[k++] = v;
                    mean += v;
                }
        mean /= double(n_in);

        auto row = out.row(cell);
        for (int d = 0; d < dim; ++d) {
            double s = bias.data[size_t(d)];
            const double* arow = a.data.data() + size_t(d) * n_in;
            for (int i = 0; i < n_in; ++i) s += arow[i] * flat[size_t(i)];
            row[d] = s;
        }
        row[dim - 1] += mean;
    }
    return out;
}

ToyImage load_image(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P3") throw format_error("unsupported image magic in " + path);

    // strip comment lines
    auto next_int = [&](int& v) {
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v)) throw format_error("truncated image header/data in " + path);
            return;
        }
    };

    ToyImage img;
    img.channels = magic == "P3" ? 3 : 1;
    int maxval = 0;
    next_int(img.width);
    next_int(img.height);
    next_int(maxval);
    if (img.width <= 0 || img.height <= 0 || maxval <= 0)
        throw format_error("invalid image header in " + path);

    const size_t count = size_t(img.width) * img.height * img.channels;
    img.pixels.resize(count);
    for (size_t i = 0; i < count; ++i) {
        int v;
        next_int(v);
        if (v < 0 || v > maxval) throw format_error("pixel out of range in " + path);
        img.pixels[i] = double(v) / double(maxval);
    }
    return img;
}

void save_image(const ToyImage& img, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open image for writing: " + path);
    out << (img.channels == 3 ? "P3" : "P2") << "\n";
    out << img.width << " " << img.height << "\n255\n";
    size_t i = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width * img.channels; ++x) {
            const int v = int(std::lround(img.pixels[i++] * 255.0));
            out << v << (x + 1 == img.width * img.channels ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

} // namespace groundbank
