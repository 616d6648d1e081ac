#include "groundbank/prompt_forge.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/encoding.hpp"
#include "groundbank/errors.hpp"

namespace groundbank {

namespace {

constexpr int kSchemaVersion = 1;

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

// lowercase, collapse inner whitespace, trim
std::string clean_term(const std::string& raw) {
    std::string out;
    bool pending_space = false;
    for (char c : lower(raw)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

constexpr AttributeKind kCanonicalKinds[4] = {AttributeKind::color, AttributeKind::shape,
                                              AttributeKind::texture, AttributeKind::location};

const char* plural_of(AttributeKind k) {
    switch (k) {
        case AttributeKind::color: return "colors";
        case AttributeKind::shape: return "shapes";
        case AttributeKind::texture: return "textures";
        case AttributeKind::location: return "locations";
        default: return "other";
    }
}

nlohmann::json parse_json_file(const std::string& path, const char* what) {
    try {
        return nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string(what) + " unparseable (" + path + "): " + e.what());
    }
}

} // namespace

const char* to_string(TermSource s) {
    switch (s) {
        case TermSource::vqa: return "vqa";
        case TermSource::llm: return "llm";
        case TermSource::fixture: return "fixture";
    }
    return "fixture";
}

TermSource term_source_from_string(const std::string& s) {
    if (s == "vqa") return TermSource::vqa;
    if (s == "llm") return TermSource::llm;
    if (s == "fixture") return TermSource::fixture;
    throw format_error("unknown term source: '" + s + "'");
}

const std::vector<Term>& AttributeSet::list(AttributeKind k) const {
    switch (k) {
        case AttributeKind::color: return colors;
        case AttributeKind::shape: return shapes;
        case AttributeKind::texture: return textures;
        case AttributeKind::location: return locations;
        default: throw config_error("AttributeSet has no list for non-canonical kind");
    }
}

std::vector<Term>& AttributeSet::list(AttributeKind k) {
    return const_cast<std::vector<Term>&>(static_cast<const AttributeSet*>(this)->list(k));
}

// ---- mocks -----------------------------------------------------------------

MockVqaClient::MockVqaClient(const std::string& fixture_path) {
    const nlohmann::json j = parse_json_file(fixture_path, "vqa fixture");
    for (const auto& [category, table] : j.items())
        for (const auto& [kind, answer] : table.items())
            answers_[lower(category)][lower(kind)] = answer.get<std::string>();
}

std::string MockVqaClient::request(const std::string& /*image_ref*/,
                                   const std::string& question) {
    const std::string q = lower(question);
    // longest category name appearing in the question wins
    const std::map<std::string, std::string>* table = nullptr;
    size_t best_len = 0;
    for (const auto& [category, answers] : answers_) {
        if (category.size() > best_len && q.find(category) != std::string::npos) {
            table = &answers;
            best_len = category.size();
        }
    }
    if (table == nullptr)
        throw client_error("mock vqa: no category recognized in question '" + question + "'");
    for (const auto& [kind, answer] : *table)
        if (q.find(kind) != std::string::npos) return answer;
    throw client_error("mock vqa: no answer for question '" + question + "'");
}

MockLlmClient::MockLlmClient(const std::string& fixture_path) {
    const nlohmann::json j = parse_json_file(fixture_path, "attribute fixture");
    for (const auto& [category, table] : j.items())
        for (const auto& [kind, terms] : table.items())
            tables_[lower(category)][lower(kind)] = terms.get<std::vector<std::string>>();
}

std::vector<std::string> MockLlmClient::request(const std::string& category,
                                                const std::string& kind) {
    auto cat = tables_.find(lower(category));
    if (cat == tables_.end())
        throw client_error("mock llm: unknown category '" + category + "'");
    auto k = cat->second.find(lower(kind));
    if (k == cat->second.end())
        throw client_error("mock llm: no '" + kind + "' table for '" + category + "'");
    return k->second;
}

// ---- wire-protocol clients ---------------------------------------------------

std::string HttpVqaClient::request(const std::string& image_ref, const std::string& question) {
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(0, options_.timeout_ms * 1000);
    client.set_read_timeout(0, options_.timeout_ms * 1000);

    nlohmann::json body{{"image_ref", image_ref}, {"question", question}};
    const std::string payload = body.dump();
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        auto res = client.Post("/vqa", payload, "application/json");
        if (!res || res->status != 200) continue;
        try {
            return nlohmann::json::parse(res->body).at("answer").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw format_error("vqa response unparseable: " + res->body);
        }
    }
    throw client_error("vqa endpoint " + options_.endpoint + " exhausted " +
                       std::to_string(options_.retries + 1) + " attempts");
}

std::vector<std::string> HttpLlmClient::request(const std::string& category,
                                                const std::string& kind) {
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(0, options_.timeout_ms * 1000);
    client.set_read_timeout(0, options_.timeout_ms * 1000);

    nlohmann::json body{{"category", category}, {"kind", kind}};
    const std::string payload = body.dump();
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        auto res = client.Post("/expand", payload, "application/json");
        if (!res || res->status != 200) continue;
        try {
            return nlohmann::json::parse(res->body).at("terms").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception&) {
            throw format_error("llm response unparseable: " + res->body);
        }
    }
    throw client_error("llm endpoint " + options_.endpoint + " exhausted " +
                       std::to_string(options_.retries + 1) + " attempts");
}

// ---- operations --------------------------------------------------------------

std::vector<Question> default_questions(const std::string& category) {
    std::vector<Question> qs;
    for (AttributeKind k : kCanonicalKinds)
        qs.push_back({k, "what is the " + std::string(to_string(k)) + " of the " +
                             lower(category) + "?"});
    return qs;
}

InstancePromptResult generate_instance_prompt(const std::string& image_ref,
                                              const std::string& category,
                                              const std::vector<Question>& questions,
                                              VqaClient& client) {
    if (questions.empty()) throw config_error("generate_instance_prompt: no questions");

    InstancePromptResult result;
    for (const Question& q : questions) {
        std::string answer;
        try {
            answer = client.request(image_ref, q.text);
        } catch (const client_error& e) {
            result.failures.push_back(q.text + ": " + e.what());
            continue;
        }
        // hyphen-join multi-word answers so one answer stays one token
        const TextTokens toks = tokenize(answer);
        if (toks.tokens.empty()) {
            result.failures.push_back(q.text + ": empty answer");
            continue;
        }
        std::string term = toks.tokens.front();
        for (size_t i = 1; i < toks.tokens.size(); ++i) term += "-" + toks.tokens[i];
        result.terms.push_back({term, q.kind, TermSource::vqa});
    }
    if (result.terms.empty())
        throw client_error("instance prompt for '" + category + "' (" + image_ref +
                           "): all " + std::to_string(questions.size()) + " questions failed");
    return result;
}

std::vector<std::string> expand_category_attributes(const std::string& category,
                                                    AttributeKind kind, LlmClient& client) {
    if (kind != AttributeKind::color && kind != AttributeKind::shape &&
        kind != AttributeKind::texture && kind != AttributeKind::location)
        throw config_error("expand_category_attributes: kind must be canonical");

    const std::vector<std::string> raw = client.request(category, plural_of(kind));
    std::vector<std::string> terms;
    std::set<std::string> seen;
    for (const std::string& r : raw) {
        const std::string t = clean_term(r);
        if (t.empty()) continue;
        if (seen.insert(t).second) terms.push_back(t);
    }
    return terms;
}

CategoryPrompt build_category_prompt(const std::string& category,
                                     const std::vector<std::vector<InstanceTerm>>& instance_prompts,
                                     const AttributeSet& expansions, int max_tokens,
                                     const AttributeSet* mix_in) {
    bool any_source = !expansions.colors.empty() || !expansions.shapes.empty() ||
                      !expansions.textures.empty() || !expansions.locations.empty();
    for (const auto& inst : instance_prompts) any_source = any_source || !inst.empty();
    if (!any_source)
        throw config_error("build_category_prompt: no instance or expansion terms for '" +
                           category + "'");

    struct Slot {
        std::string text;
        AttributeKind kind;
    };
    std::vector<Slot> ordered;
    std::set<std::pair<int, std::string>> seen; // (kind, text), first occurrence wins

    auto push = [&](const std::string& text, AttributeKind kind) {
        if (text.empty()) return;
        if (seen.insert({int(kind), text}).second) ordered.push_back({text, kind});
    };

    for (AttributeKind kind : kCanonicalKinds) {
        for (const auto& inst : instance_prompts)
            for (const InstanceTerm& t : inst)
                if (t.kind == kind) push(t.text, kind);
        for (const Term& t : expansions.list(kind)) push(t.text, kind);
        if (mix_in != nullptr)
            for (const Term& t : mix_in->list(kind)) push(t.text, kind);
    }
    // non-canonical instance answers (e.g. morphology) trail the four kinds
    for (const auto& inst : instance_prompts)
        for (const InstanceTerm& t : inst)
            if (t.kind == AttributeKind::other || t.kind == AttributeKind::pad)
                push(t.text, AttributeKind::other);

    CategoryPrompt prompt;
    std::vector<std::string> overflow;
    int token_count = 0;
    for (const Slot& slot : ordered) {
        const std::vector<std::string> words = split_ws(slot.text);
        if (token_count + int(words.size()) > max_tokens) {
            overflow.push_back(slot.text);
            token_count += int(words.size());
            continue;
        }
        for (const std::string& w : words) {
            if (!prompt.text.empty()) prompt.text += " ";
            prompt.text += w;
            prompt.tags.push_back(slot.kind);
            ++token_count;
        }
    }
    if (!overflow.empty()) {
        std::string listed;
        for (const std::string& t : overflow) listed += (listed.empty() ? "" : ", ") + t;
        throw capacity_error("category prompt for '" + category + "' needs " +
                             std::to_string(token_count) + " tokens but only " +
                             std::to_string(max_tokens) + " fit; overflow terms: " + listed);
    }
    return prompt;
}

// ---- prompt bank document -----------------------------------------------------

std::string prompt_bank_to_text(const PromptBank& bank) {
    nlohmann::json doc;
    doc["format"] = "groundbank-prompt-bank";
    doc["schema_version"] = kSchemaVersion;

    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [name, attrs] : bank.categories) {
        nlohmann::json c = nlohmann::json::object();
        for (AttributeKind kind : kCanonicalKinds) {
            nlohmann::json terms = nlohmann::json::array();
            for (const Term& t : attrs.list(kind))
                terms.push_back({{"term", t.text}, {"source", to_string(t.source)}});
            c[plural_of(kind)] = terms;
        }
        cats[name] = c;
    }
    doc["categories"] = cats;

    nlohmann::json instances = nlohmann::json::array();
    for (const auto& [key, terms] : bank.instances) {
        nlohmann::json t = nlohmann::json::array();
        for (const InstanceTerm& term : terms)
            t.push_back({{"term", term.text},
                         {"kind", to_string(term.kind)},
                         {"source", to_string(term.source)}});
        instances.push_back(
            {{"category", key.first}, {"image_ref", key.second}, {"terms", t}});
    }
    doc["instances"] = instances;
    return doc.dump(2) + "\n";
}

PromptBank prompt_bank_from_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("prompt bank unparseable: ") + e.what());
    }
    if (doc.value("format", "") != "groundbank-prompt-bank")
        throw format_error("not a prompt-bank document");
    if (doc.value("schema_version", -1) != kSchemaVersion)
        throw format_error("unsupported prompt-bank schema_version " +
                           doc.value("schema_version", nlohmann::json()).dump());

    PromptBank bank;
    for (const auto& [name, c] : doc.at("categories").items()) {
        AttributeSet attrs;
        for (const auto& [field, terms] : c.items()) {
            const AttributeKind kind = attribute_kind_from_string(field); // names the field
            if (kind == AttributeKind::other || kind == AttributeKind::pad)
                throw format_error("prompt-bank field '" + field + "' is not a category list");
            for (const auto& t : terms) {
                const std::string text_v = t.at("term").get<std::string>();
                if (text_v.empty()) throw format_error("empty term in category '" + name + "'");
                if (text_v != lower(text_v))
                    throw format_error("term '" + text_v + "' in category '" + name +
                                       "' is not lowercase");
                attrs.list(kind).push_back(
                    {text_v, term_source_from_string(t.at("source").get<std::string>())});
            }
        }
        bank.categories[name] = std::move(attrs);
    }
    for (const auto& inst : doc.at("instances")) {
        const std::string category = inst.at("category").get<std::string>();
        if (bank.categories.find(category) == bank.categories.end())
            throw format_error("instance references unknown category '" + category + "'");
        std::vector<InstanceTerm> terms;
        for (const auto& t : inst.at("terms")) {
            const std::string text_v = t.at("term").get<std::string>();
            if (text_v.empty()) throw format_error("empty instance term for '" + category + "'");
            terms.push_back({text_v, attribute_kind_from_string(t.at("kind").get<std::string>()),
                             term_source_from_string(t.at("source").get<std::string>())});
        }
        bank.instances[{category, inst.at("image_ref").get<std::string>()}] = std::move(terms);
    }
    return bank;
}

void save_prompt_bank(const PromptBank& bank, const std::string& path) {
    write_file_bytes(path, prompt_bank_to_text(bank));
}

PromptBank load_prompt_bank(const std::string& path) {
    return prompt_bank_from_text(read_file_bytes(path));
}

PromptBank build_prompt_bank(const std::vector<std::string>& categories, LlmClient& llm) {
    PromptBank bank;
    for (const std::string& category : categories) {
        AttributeSet attrs;
        for (AttributeKind kind : kCanonicalKinds)
            for (const std::string& term : expand_category_attributes(category, kind, llm))
                attrs.list(kind).push_back({term, TermSource::llm});
        bank.categories[lower(category)] = std::move(attrs);
    }
    return bank;
}

std::string default_fixture_dir() { return GROUNDBANK_DATA_DIR; }

std::string attribute_fixture_path(const std::string& fixture_dir) {
    return fixture_dir + "/category_attributes.json";
}

std::string vqa_fixture_path(const std::string& fixture_dir) {
    return fixture_dir + "/vqa_answers.json";
}

std::vector<std::string> fixture_categories(const std::string& fixture_dir) {
    const nlohmann::json j =
        parse_json_file(attribute_fixture_path(fixture_dir), "attribute fixture");
    std::vector<std::string> names;
    for (const auto& [category, table] : j.items()) names.push_back(lower(category));
    std::sort(names.begin(), names.end());
    return names;
}

} // namespace groundbank
