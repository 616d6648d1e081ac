#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "groundbank/attributes.hpp"

namespace groundbank {

enum class TermSource { vqa, llm, fixture };
const char* to_string(TermSource s);
TermSource term_source_from_string(const std::string& s); // throws format_error

struct Term {
    std::string text; // lowercase, nonempty
    TermSource source = TermSource::fixture;

    bool operator==(const Term&) const = default;
};

// Ordered, de-duplicated attribute vocabularies for one category.
struct AttributeSet {
    std::vector<Term> colors, shapes, textures, locations;

    const std::vector<Term>& list(AttributeKind k) const;
    std::vector<Term>& list(AttributeKind k);

    bool operator==(const AttributeSet&) const = default;
};

struct InstanceTerm {
    std::string text;
    AttributeKind kind = AttributeKind::other;
    TermSource source = TermSource::vqa;

    bool operator==(const InstanceTerm&) const = default;
};

// Dual-level prompt repository: category attribute vocabularies plus
// per-image instance prompts, with per-term provenance.
struct PromptBank {
    std::map<std::string, AttributeSet> categories;
    std::map<std::pair<std::string, std::string>, std::vector<InstanceTerm>> instances;

    bool operator==(const PromptBank&) const = default;
};

// ---- external generator clients ------------------------------------------

struct VqaClient {
    virtual ~VqaClient() = default;
    // Answer a free-form question about an image. Throws client_error when no
    // answer can be produced within the retry budget.
    virtual std::string request(const std::string& image_ref, const std::string& question) = 0;
};

struct LlmClient {
    virtual ~LlmClient() = default;
    virtual std::vector<std::string> request(const std::string& category,
                                             const std::string& kind) = 0;
};

// Table-backed mocks serving the bundled fixture files. Pure lookups:
// identical requests always give identical results.
class MockVqaClient : public VqaClient {
  public:
    explicit MockVqaClient(const std::string& fixture_path);
    std::string request(const std::string& image_ref, const std::string& question) override;

  private:
    // category -> kind keyword -> answer
    std::map<std::string, std::map<std::string, std::string>> answers_;
};

class MockLlmClient : public LlmClient {
  public:
    explicit MockLlmClient(const std::string& fixture_path);
    std::vector<std::string> request(const std::string& category,
                                     const std::string& kind) override;

  private:
    std::map<std::string, std::map<std::string, std::vector<std::string>>> tables_;
};

struct ClientOptions {
    std::string endpoint; // e.g. http://127.0.0.1:8700
    int timeout_ms = 2000;
    int retries = 2;
};

// Wire-protocol clients: POST {image_ref, question} -> {answer} to /vqa and
// POST {category, kind} -> {terms: [...]} to /expand.
class HttpVqaClient : public VqaClient {
  public:
    explicit HttpVqaClient(ClientOptions options) : options_(std::move(options)) {}
    std::string request(const std::string& image_ref, const std::string& question) override;

  private:
    ClientOptions options_;
};

class HttpLlmClient : public LlmClient {
  public:
    explicit HttpLlmClient(ClientOptions options) : options_(std::move(options)) {}
    std::vector<std::string> request(const std::string& category,
                                     const std::string& kind) override;

  private:
    ClientOptions options_;
};

// ---- operations ------------------------------------------------------------

struct Question {
    AttributeKind kind = AttributeKind::other;
    std::string text;
};

// One question per canonical attribute kind: "what is the color of the X?" ...
std::vector<Question> default_questions(const std::string& category);

struct InstancePromptResult {
    std::vector<InstanceTerm> terms;    // one per answered question, in order
    std::vector<std::string> failures;  // per-question failure notes
};

// Ask every question; failures are recorded without aborting the batch.
// Multi-word answers become single hyphen-joined terms. Throws client_error
// only when every question failed.
InstancePromptResult generate_instance_prompt(const std::string& image_ref,
                                              const std::string& category,
                                              const std::vector<Question>& questions,
                                              VqaClient& client);

// Parsed, lowercased, de-duplicated expansion terms for one attribute kind.
std::vector<std::string> expand_category_attributes(const std::string& category,
                                                    AttributeKind kind, LlmClient& client);

struct CategoryPrompt {
    std::string text;                     // tokens joined by single spaces
    std::vector<AttributeKind> tags;      // one per token
};

// Concatenate instance terms and expansions into one prompt: kinds in the
// order colors, shapes, textures, locations (then any other-kind instance
// terms); within a kind instance terms come first, then expansions, deduped
// first-wins. When mix_in is given its terms are appended per kind with
// their true tags (the noisy-knowledge switch).
CategoryPrompt build_category_prompt(const std::string& category,
                                     const std::vector<std::vector<InstanceTerm>>& instance_prompts,
                                     const AttributeSet& expansions, int max_tokens,
                                     const AttributeSet* mix_in = nullptr);

// Schema-versioned human-readable document; round-trips value-identically
// including provenance and ordering.
void save_prompt_bank(const PromptBank& bank, const std::string& path);
PromptBank load_prompt_bank(const std::string& path);
std::string prompt_bank_to_text(const PromptBank& bank);
PromptBank prompt_bank_from_text(const std::string& text);

// Expand every category served by the LLM fixture into a PromptBank.
PromptBank build_prompt_bank(const std::vector<std::string>& categories, LlmClient& llm);

// Path helpers for the bundled fixtures.
std::string default_fixture_dir();
std::string attribute_fixture_path(const std::string& fixture_dir);
std::string vqa_fixture_path(const std::string& fixture_dir);
std::vector<std::string> fixture_categories(const std::string& fixture_dir);

} // namespace groundbank
