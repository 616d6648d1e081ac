#include "groundbank/weights.hpp"

#include <cmath>

#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/rng.hpp"
#include "groundbank/sha256.hpp"

namespace groundbank {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'W', 'T'};
constexpr uint32_t kVersion = 1;
constexpr double kLnEps = 1e-5;

// Identity-plus-noise attention projections keep the value path close to a
// pass-through; small feed-forward weights keep the residual stream dominant.
// Encoder self-attention gets a damped output projection so token identity
// survives the stack, while cross-modal fusion attention runs at full
// strength.
constexpr double kAttnNoise = 0.05;
constexpr double kFfnScale = 0.35;
constexpr double kEncoderSelfGain = 0.15;

Mat seeded_projection(int dim, uint64_t seed, double gain = 1.0) {
    Mat m = Mat::identity(dim);
    SplitMix64 rng(seed);
    for (double& v : m.data) v += kAttnNoise * rng.next_signed();
    if (gain != 1.0)
        for (double& v : m.data) v *= gain;
    return m;
}

AttentionParams seeded_attention(int dim, int heads, uint64_t base_seed,
                                 const std::string& name, double out_gain = 1.0) {
    AttentionParams p;
    p.heads = heads;
    p.head_dim = dim / heads;
    p.scale = 1.0 / std::sqrt(double(p.head_dim));
    p.w_q = seeded_projection(dim, derive_seed(base_seed, name + ".w_q"));
    p.w_k = seeded_projection(dim, derive_seed(base_seed, name + ".w_k"));
    p.w_v = seeded_projection(dim, derive_seed(base_seed, name + ".w_v"));
    p.w_o = seeded_projection(dim, derive_seed(base_seed, name + ".w_o"), out_gain);
    return p;
}

EncoderLayerParams seeded_encoder_layer(int dim, int heads, uint64_t base_seed,
                                        const std::string& name) {
    EncoderLayerParams p;
    const int hidden = 4 * dim;
    p.self_attn = seeded_attention(dim, heads, base_seed, name + ".attn", kEncoderSelfGain);
    p.ffn_w1 = Mat::seeded(dim, hidden, derive_seed(base_seed, name + ".ffn_w1"),
                           kFfnScale / std::sqrt(double(dim)));
    p.ffn_w2 = Mat::seeded(hidden, dim, derive_seed(base_seed, name + ".ffn_w2"),
                           kFfnScale / std::sqrt(double(hidden)));
    p.ln1_gain.assign(size_t(dim), 1.0);
    p.ln1_bias.assign(size_t(dim), 0.0);
    p.ln2_gain.assign(size_t(dim), 1.0);
    p.ln2_bias.assign(size_t(dim), 0.0);
    p.eps = kLnEps;
    return p;
}

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    const std::vector<double>* data;
};

void collect_attention(std::vector<TensorRef>& out, const AttentionParams& p, int dim,
                       const std::string& name) {
    out.push_back({name + ".w_q", {dim, dim}, &p.w_q.data});
    out.push_back({name + ".w_k", {dim, dim}, &p.w_k.data});
    out.push_back({name + ".w_v", {dim, dim}, &p.w_v.data});
    out.push_back({name + ".w_o", {dim, dim}, &p.w_o.data});
}

void collect_encoder(std::vector<TensorRef>& out, const EncoderLayerParams& p, int dim,
                     const std::string& name) {
    collect_attention(out, p.self_attn, dim, name + ".attn");
    out.push_back({name + ".ffn_w1", {p.ffn_w1.rows, p.ffn_w1.cols}, &p.ffn_w1.data});
    out.push_back({name + ".ffn_w2", {p.ffn_w2.rows, p.ffn_w2.cols}, &p.ffn_w2.data});
    out.push_back({name + ".ln1_gain", {dim}, &p.ln1_gain});
    out.push_back({name + ".ln1_bias", {dim}, &p.ln1_bias});
    out.push_back({name + ".ln2_gain", {dim}, &p.ln2_gain});
    out.push_back({name + ".ln2_bias", {dim}, &p.ln2_bias});
}

std::vector<TensorRef> tensor_list(const ModelWeights& w) {
    std::vector<TensorRef> refs;
    for (int i = 0; i < w.layers; ++i) {
        const std::string li = std::to_string(i);
        collect_encoder(refs, w.vision_layers[size_t(i)], w.dim, "vision." + li);
        collect_encoder(refs, w.language_layers[size_t(i)], w.dim, "language." + li);
        collect_attention(refs, w.cross_t2v[size_t(i)], w.dim, "cross_t2v." + li);
        collect_attention(refs, w.cross_v2t[size_t(i)], w.dim, "cross_v2t." + li);
    }
    return refs;
}

std::string serialize(const ModelWeights& w) {
    const auto refs = tensor_list(w);
    std::string blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& ref : refs) {
        size_t count = 1;
        for (int s : ref.shape) count *= size_t(s);
        if (ref.data->size() != count)
            throw config_error("weights: tensor " + ref.name + " has inconsistent size");
        put_f64_span(blob, *ref.data);
        tensors.push_back({{"name", ref.name}, {"shape", ref.shape}});
    }

    nlohmann::json manifest;
    manifest["format"] = "groundbank-weights";
    manifest["version"] = kVersion;
    manifest["dim"] = w.dim;
    manifest["heads"] = w.heads;
    manifest["layers"] = w.layers;
    manifest["seed"] = w.seed;
    manifest["ln_eps"] = kLnEps;
    manifest["tensors"] = tensors;
    manifest["blob_len"] = blob.size();
    manifest["blob_sha256"] = sha256_hex(blob);
    const std::string mtext = manifest.dump();

    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, mtext.size());
    out += mtext;
    out += blob;
    return out;
}

} // namespace

const std::string& ModelWeights::digest() const {
    if (digest_.empty()) digest_ = sha256_hex(serialize(*this));
    return digest_;
}

ModelWeights seeded_weights(int dim, int heads, int layers, uint64_t seed) {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
        throw config_error("seeded_weights: heads must divide dim");
    if (layers < 0) throw config_error("seeded_weights: negative layer count");

    ModelWeights w;
    w.dim = dim;
    w.heads = heads;
    w.layers = layers;
    w.seed = seed;
    for (int i = 0; i < layers; ++i) {
        const std::string li = std::to_string(i);
        w.vision_layers.push_back(seeded_encoder_layer(dim, heads, seed, "vision." + li));
        w.language_layers.push_back(seeded_encoder_layer(dim, heads, seed, "language." + li));
        w.cross_t2v.push_back(seeded_attention(dim, heads, seed, "cross_t2v." + li, 0.25));
        w.cross_v2t.push_back(seeded_attention(dim, heads, seed, "cross_v2t." + li));
    }
    return w;
}

void save_weights(const ModelWeights& w, const std::string& path) {
    write_file_bytes(path, serialize(w));
}

ModelWeights load_weights(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 16 || bytes.compare(0, 4, kMagic, 4) != 0)
        throw format_error("not a weights file: " + path);
    ByteReader reader(bytes);
    reader.pos = 4;
    const uint32_t version = reader.get_u32();
    if (version != kVersion)
        throw format_error("unsupported weights version " + std::to_string(version));
    const uint64_t mlen = reader.get_u64();
    if (reader.remaining() < mlen) throw integrity_error("weights manifest truncated: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(reader.pos, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("weights manifest unparseable: ") + e.what());
    }
    reader.pos += mlen;

    const std::string blob = bytes.substr(reader.pos);
    if (blob.size() != manifest.at("blob_len").get<size_t>())
        throw integrity_error("weights blob truncated: " + path);
    if (sha256_hex(blob) != manifest.at("blob_sha256").get<std::string>())
        throw integrity_error("weights blob digest mismatch: " + path);

    const int dim = manifest.at("dim").get<int>();
    const int heads = manifest.at("heads").get<int>();
    const int layers = manifest.at("layers").get<int>();
    if (dim <= 0 || heads <= 0 || layers < 0 || dim % heads != 0)
        throw format_error("weights manifest declares invalid geometry: " + path);

    // Start from a correctly shaped skeleton, then overwrite every tensor
    // from the blob; the file content is authoritative.
    ModelWeights w = seeded_weights(dim, heads, layers, manifest.at("seed").get<uint64_t>());
    const double eps = manifest.value("ln_eps", kLnEps);
    for (auto& l : w.vision_layers) l.eps = eps;
    for (auto& l : w.language_layers) l.eps = eps;

    const auto refs = tensor_list(w);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != refs.size())
        throw format_error("weights manifest lists " + std::to_string(tensors.size()) +
                           " tensors, expected " + std::to_string(refs.size()));
    ByteReader blob_reader(blob);
    for (size_t t = 0; t < refs.size(); ++t) {
        const auto& entry = tensors.at(t);
        if (entry.at("name").get<std::string>() != refs[t].name)
            throw format_error("weights tensor " + std::to_string(t) + " is named '" +
                               entry.at("name").get<std::string>() + "', expected '" +
                               refs[t].name + "'");
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != refs[t].shape)
            throw format_error("weights tensor " + refs[t].name + " has unexpected shape");
        size_t count = 1;
        for (int s : shape) count *= size_t(s);
        if (blob_reader.remaining() < count * 8)
            throw integrity_error("weights blob too short for tensor " + refs[t].name);
        auto* dst = const_cast<std::vector<double>*>(refs[t].data);
        for (size_t i = 0; i < count; ++i) (*dst)[i] = blob_reader.get_f64();
    }
    if (blob_reader.remaining() != 0)
        throw integrity_error("weights blob has trailing bytes: " + path);
    return w;
}

void ensure_compatible(const ModelWeights& w, int dim, int heads, int layers) {
    if (w.dim != dim || w.heads != heads || w.layers != layers)
        throw config_error("weights geometry (dim=" + std::to_string(w.dim) + ", heads=" +
                           std::to_string(w.heads) + ", layers=" + std::to_string(w.layers) +
                           ") does not match config (dim=" + std::to_string(dim) + ", heads=" +
                           std::to_string(heads) + ", layers=" + std::to_string(layers) + ")");
}

} // namespace groundbank
