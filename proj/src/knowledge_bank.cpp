#include "groundbank/knowledge_bank.hpp"

#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/encoding.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/sha256.hpp"

namespace groundbank {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'N', 'K'};
constexpr uint32_t kVersion = 1;

std::string source_digest_of(const std::string& prompt_text,
                             const std::vector<AttributeKind>& tags,
                             const std::string& weights_digest, int dim, int n_l, int layers,
                             uint64_t seed) {
    Sha256 h;
    h.update("groundbank-bank-source.v1\n");
    h.update(prompt_text);
    h.update("\n");
    for (AttributeKind k : tags) {
        h.update(to_string(k));
        h.update("|");
    }
    h.update("\n" + weights_digest + "\n");
    h.update("dim=" + std::to_string(dim) + " n_l=" + std::to_string(n_l) +
             " layers=" + std::to_string(layers) + " seed=" + std::to_string(seed));
    return h.hex_digest();
}

} // namespace

KnowledgeBank build_bank(const std::string& prompt_text, const std::vector<AttributeKind>& tags,
                         const ModelWeights& weights, const BankBuildConfig& config) {
    ensure_compatible(weights, config.dim, weights.heads, config.layers);
    const TextTokens tokens = tokenize(prompt_text);
    if (tokens.tokens.empty()) throw config_error("build_bank: prompt produced no tokens");
    if (int(tokens.tokens.size()) > config.n_l)
        throw capacity_error("prompt has " + std::to_string(tokens.tokens.size()) +
                             " tokens, exceeding N_l=" + std::to_string(config.n_l) + " by " +
                             std::to_string(tokens.tokens.size() - size_t(config.n_l)));
    if (tags.size() != tokens.tokens.size())
        throw config_error("build_bank: " + std::to_string(tags.size()) + " tags for " +
                           std::to_string(tokens.tokens.size()) + " tokens");

    KnowledgeBank bank;
    bank.prompt_text = prompt_text;
    bank.dim = config.dim;
    bank.n_l = config.n_l;
    bank.n_layers = config.layers;
    bank.seed = config.seed;
    bank.weights_digest = weights.digest();

    bank.token_tags = tags;
    bank.token_tags.resize(size_t(config.n_l), AttributeKind::pad);

    bank.layers.reserve(size_t(config.layers) + 1);
    bank.layers.push_back(embed_text(tokens, config.dim, config.n_l, config.seed));
    for (int i = 1; i <= config.layers; ++i)
        bank.layers.push_back(encoder_layer(bank.layers.back(),
                                            weights.language_layers[size_t(i - 1)]));

    bank.source_digest = source_digest_of(prompt_text, bank.token_tags, bank.weights_digest,
                                          config.dim, config.n_l, config.layers, config.seed);
    return bank;
}

std::string bank_content_checksum(const KnowledgeBank& bank) {
    Sha256 h;
    for (const TokenMatrix& layer : bank.layers) {
        std::string bytes;
        put_f64_span(bytes, layer.data);
        for (uint8_t m : layer.mask) bytes.push_back(char(m));
        h.update(bytes);
    }
    return h.hex_digest();
}

void save_bank(const KnowledgeBank& bank, const std::string& path) {
    std::string blob;
    for (const TokenMatrix& layer : bank.layers) put_f64_span(blob, layer.data);

    nlohmann::json manifest;
    manifest["format"] = "groundbank-bank";
    manifest["version"] = kVersion;
    manifest["source_digest"] = bank.source_digest;
    manifest["weights_digest"] = bank.weights_digest;
    manifest["prompt_text"] = bank.prompt_text;
    manifest["dim"] = bank.dim;
    manifest["n_l"] = bank.n_l;
    manifest["layers"] = bank.n_layers;
    manifest["seed"] = bank.seed;
    nlohmann::json tags = nlohmann::json::array();
    for (AttributeKind k : bank.token_tags) tags.push_back(to_string(k));
    manifest["tags"] = tags;
    nlohmann::json mask = nlohmann::json::array();
    for (uint8_t m : bank.layers.front().mask) mask.push_back(int(m));
    manifest["mask"] = mask;
    manifest["blob_len"] = blob.size();
    manifest["blob_sha256"] = sha256_hex(blob);
    const std::string mtext = manifest.dump();

    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, mtext.size());
    out += mtext;
    out += blob;
    write_file_bytes(path, out);
}

KnowledgeBank load_bank(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 16 || bytes.compare(0, 4, kMagic, 4) != 0)
        throw format_error("not a knowledge-bank file: " + path);
    ByteReader reader(bytes);
    reader.pos = 4;
    const uint32_t version = reader.get_u32();
    if (version != kVersion)
        throw format_error("unsupported bank version " + std::to_string(version));
    const uint64_t mlen = reader.get_u64();
    if (reader.remaining() < mlen) throw integrity_error("bank manifest truncated: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(reader.pos, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bank manifest unparseable: ") + e.what());
    }
    reader.pos += mlen;

    const std::string blob = bytes.substr(reader.pos);
    if (blob.size() != manifest.at("blob_len").get<size_t>())
        throw integrity_error("bank blob truncated: " + path);
    if (sha256_hex(blob) != manifest.at("blob_sha256").get<std::string>())
        throw integrity_error("bank blob digest mismatch: " + path);

    KnowledgeBank bank;
    bank.prompt_text = manifest.at("prompt_text").get<std::string>();
    bank.weights_digest = manifest.at("weights_digest").get<std::string>();
    bank.source_digest = manifest.at("source_digest").get<std::string>();
    bank.dim = manifest.at("dim").get<int>();
    bank.n_l = manifest.at("n_l").get<int>();
    bank.n_layers = manifest.at("layers").get<int>();
    bank.seed = manifest.at("seed").get<uint64_t>();
    if (bank.dim <= 0 || bank.n_l <= 0 || bank.n_layers < 0)
        throw format_error("bank manifest declares invalid geometry: " + path);

    for (const auto& t : manifest.at("tags"))
        bank.token_tags.push_back(attribute_kind_from_string(t.get<std::string>()));
    if (bank.token_tags.size() != size_t(bank.n_l))
        throw format_error("bank tag list length does not match n_l: " + path);

    std::vector<uint8_t> mask;
    for (const auto& m : manifest.at("mask")) mask.push_back(uint8_t(m.get<int>()));
    if (mask.size() != size_t(bank.n_l))
        throw format_error("bank mask length does not match n_l: " + path);

    const size_t per_layer = size_t(bank.n_l) * size_t(bank.dim);
    if (blob.size() != (size_t(bank.n_layers) + 1) * per_layer * 8)
        throw integrity_error("bank blob size does not match geometry: " + path);

    ByteReader blob_reader(blob);
    for (int i = 0; i <= bank.n_layers; ++i) {
        TokenMatrix layer(bank.n_l, bank.dim);
        layer.mask = mask;
        for (double& v : layer.data) v = blob_reader.get_f64();
        bank.layers.push_back(std::move(layer));
    }

    // The stored source digest must match its recomputation from the stored
    // inputs; anything else means the file was corrupted or spliced.
    const std::string expect =
        source_digest_of(bank.prompt_text, bank.token_tags, bank.weights_digest, bank.dim,
                         bank.n_l, bank.n_layers, bank.seed);
    if (expect != bank.source_digest)
        throw integrity_error("bank source digest mismatch: " + path);
    return bank;
}

void ensure_fresh(const KnowledgeBank& bank, const ModelWeights& weights,
                  const BankBuildConfig& config) {
    if (bank.weights_digest != weights.digest())
        throw stale_bank_error("bank was built against weights " + bank.weights_digest.substr(0, 12) +
                               "..., current weights are " + weights.digest().substr(0, 12) + "...");
    if (bank.dim != config.dim || bank.n_l != config.n_l || bank.n_layers != config.layers ||
        bank.seed != config.seed)
        throw stale_bank_error("bank geometry/seed does not match the current config");
}

} // namespace groundbank
