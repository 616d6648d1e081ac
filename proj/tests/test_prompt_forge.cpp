#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "groundbank/binio.hpp"
#include "groundbank/encoding.hpp"
#include "groundbank/errors.hpp"
#include "groundbank/prompt_forge.hpp"
#include "test_util.hpp"

using namespace groundbank;

namespace {

std::vector<std::string> texts(const std::vector<Term>& terms) {
    std::vector<std::string> out;
    for (const Term& t : terms) out.push_back(t.text);
    return out;
}

} // namespace

TEST_CASE("mock vqa: the polyp instance prompt from the fixtures") {
    MockVqaClient vqa(vqa_fixture_path(default_fixture_dir()));
    const std::vector<Question> questions{
        {AttributeKind::color, "What is the color of the polyp?"},
        {AttributeKind::other, "What is the morphology of the polyp?"},
        {AttributeKind::shape, "What is the shape of the polyp?"}};

    const InstancePromptResult r = generate_instance_prompt("img0.pgm", "polyp", questions, vqa);
    REQUIRE(r.terms.size() == 3);
    CHECK(r.terms[0].text == "pink-white");
    CHECK(r.terms[1].text == "bump-like");
    CHECK(r.terms[2].text == "round");
    CHECK(r.terms[0].kind == AttributeKind::color);
    CHECK(r.failures.empty());

    // mock determinism
    const InstancePromptResult again =
        generate_instance_prompt("img0.pgm", "polyp", questions, vqa);
    CHECK(again.terms == r.terms);
}

TEST_CASE("generate_instance_prompt: partial failure keeps the answered questions") {
    MockVqaClient vqa(vqa_fixture_path(default_fixture_dir()));
    std::vector<Question> questions = default_questions("polyp"); // texture/location unanswered
    const InstancePromptResult r = generate_instance_prompt("x.pgm", "polyp", questions, vqa);
    CHECK(r.terms.size() == 2);
    CHECK(r.failures.size() == 2);

    const std::vector<Question> unanswerable{{AttributeKind::color, "what hue is the gizmo?"}};
    CHECK_THROWS_AS(generate_instance_prompt("x.pgm", "polyp", unanswerable, vqa), client_error);
}

TEST_CASE("expand_category_attributes: fixture tables, dedup, lowercasing") {
    MockLlmClient llm(attribute_fixture_path(default_fixture_dir()));

    const std::vector<std::string> polyp_colors =
        expand_category_attributes("polyp", AttributeKind::color, llm);
    REQUIRE(polyp_colors.size() >= 5);
    CHECK(polyp_colors[0] == "white");
    CHECK(polyp_colors[1] == "yellow");
    CHECK(polyp_colors[2] == "orange");
    CHECK(polyp_colors[3] == "red");
    CHECK(polyp_colors[4] == "brown");

    const std::vector<std::string> rbc_shapes =
        expand_category_attributes("red blood cells", AttributeKind::shape, llm);
    REQUIRE(rbc_shapes.size() >= 3);
    CHECK(rbc_shapes[0] == "disc-shaped");
    CHECK(rbc_shapes[1] == "oval");
    CHECK(rbc_shapes[2] == "round");

    CHECK_THROWS_AS(expand_category_attributes("polyp", AttributeKind::other, llm), config_error);
}

TEST_CASE("expand_category_attributes: duplicates collapse to the first occurrence") {
    groundbank::testing::TempDir tmp("llmfix");
    write_file_bytes(tmp.file("attrs.json"),
                     R"({"thing": {"colors": ["Red", "blue", "red ", "BLUE", "green"]}})");
    MockLlmClient llm(tmp.file("attrs.json"));
    CHECK(expand_category_attributes("thing", AttributeKind::color, llm) ==
          std::vector<std::string>{"red", "blue", "green"});
}

TEST_CASE("build_category_prompt: fixture expansions lead with the polyp colors") {
    MockLlmClient llm(attribute_fixture_path(default_fixture_dir()));
    AttributeSet expansions;
    for (AttributeKind kind : {AttributeKind::color, AttributeKind::shape,
                               AttributeKind::texture, AttributeKind::location})
        for (const std::string& t : expand_category_attributes("polyp", kind, llm))
            expansions.list(kind).push_back({t, TermSource::llm});

    const CategoryPrompt prompt = build_category_prompt("polyp", {}, expansions, 128);
    CHECK(prompt.text.rfind("white yellow orange red brown", 0) == 0);
    CHECK(prompt.tags.size() == size_t(tokenize(prompt.text).tokens.size()));
    CHECK(prompt.tags[0] == AttributeKind::color);
    CHECK(prompt.tags.back() == AttributeKind::location);

    // instance terms come first within their kind and dedup against expansions
    std::vector<std::vector<InstanceTerm>> instances{
        {{"pink-white", AttributeKind::color, TermSource::vqa},
         {"round", AttributeKind::shape, TermSource::vqa},
         {"white", AttributeKind::color, TermSource::vqa}}};
    const CategoryPrompt merged = build_category_prompt("polyp", instances, expansions, 128);
    CHECK(merged.text.rfind("pink-white white yellow orange red brown", 0) == 0);
    const size_t round_count =
        [&] {
            size_t n = 0;
            for (const auto& tok : tokenize(merged.text).tokens) n += tok == "round";
            return n;
        }();
    CHECK(round_count == 1);

    CHECK_THROWS_AS(build_category_prompt("polyp", {}, expansions, 16), capacity_error);
    CHECK_THROWS_AS(build_category_prompt("polyp", {}, AttributeSet{}, 128), config_error);
}

TEST_CASE("build_category_prompt: noisy mixing injects foreign terms with true tags") {
    AttributeSet own;
    own.colors = {{"pink", TermSource::llm}};
    own.shapes = {{"oval", TermSource::llm}};
    AttributeSet foreign;
    foreign.colors = {{"purple", TermSource::llm}};
    foreign.locations = {{"spleen", TermSource::llm}};

    const CategoryPrompt noisy = build_category_prompt("rbc", {}, own, 64, &foreign);
    CHECK(noisy.text == "pink purple oval spleen");
    CHECK(noisy.tags == std::vector<AttributeKind>{AttributeKind::color, AttributeKind::color,
                                                   AttributeKind::shape,
                                                   AttributeKind::location});
}

TEST_CASE("prompt bank document: deterministic round trip, strict schema") {
    MockLlmClient llm(attribute_fixture_path(default_fixture_dir()));
    PromptBank bank = build_prompt_bank(fixture_categories(default_fixture_dir()), llm);
    bank.instances[{"polyp", "img_1.pgm"}] = {{"pink-white", AttributeKind::color,
                                               TermSource::vqa}};

    groundbank::testing::TempDir tmp("pbank");
    save_prompt_bank(bank, tmp.file("bank.json"));
    const PromptBank back = load_prompt_bank(tmp.file("bank.json"));
    CHECK(back == bank);

    // byte determinism of the document
    const PromptBank rebuilt = [&] {
        MockLlmClient llm2(attribute_fixture_path(default_fixture_dir()));
        PromptBank b = build_prompt_bank(fixture_categories(default_fixture_dir()), llm2);
        b.instances[{"polyp", "img_1.pgm"}] = {{"pink-white", AttributeKind::color,
                                                TermSource::vqa}};
        return b;
    }();
    CHECK(prompt_bank_to_text(rebuilt) == prompt_bank_to_text(bank));

    // unknown attribute kind is rejected by field name
    std::string doc = prompt_bank_to_text(bank);
    const size_t pos = doc.find("\"textures\"");
    REQUIRE(pos != std::string::npos);
    doc.replace(pos, 10, "\"flavours\"");
    CHECK_THROWS_WITH_AS(static_cast<void>(prompt_bank_from_text(doc)),
                         doctest::Contains("flavours"), format_error);

    // instances must reference a known category
    PromptBank orphan = bank;
    orphan.instances[{"ghost", "img.pgm"}] = {{"x", AttributeKind::other, TermSource::vqa}};
    CHECK_THROWS_AS(static_cast<void>(prompt_bank_from_text(prompt_bank_to_text(orphan))),
                    format_error);
}

TEST_CASE("http clients: request/response bodies over a live endpoint") {
    httplib::Server server;
    server.Post("/vqa", [](const httplib::Request& req, httplib::Response& res) {
        const nlohmann::json body = nlohmann::json::parse(req.body);
        REQUIRE(body.contains("image_ref"));
        REQUIRE(body.contains("question"));
        if (body.at("image_ref") == "garbage") {
            res.set_content("not json at all", "text/plain");
            return;
        }
        res.set_content(nlohmann::json{{"answer", "pale pink"}}.dump(), "application/json");
    });
    server.Post("/expand", [](const httplib::Request& req, httplib::Response& res) {
        const nlohmann::json body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("kind") == "colors");
        res.set_content(nlohmann::json{{"terms", {"Red", "blue", "red"}}}.dump(),
                        "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string endpoint = "http://127.0.0.1:" + std::to_string(port);
    HttpVqaClient vqa({endpoint});
    CHECK(vqa.request("img.pgm", "what is the color of the lesion?") == "pale pink");
    CHECK_THROWS_AS(vqa.request("garbage", "anything?"), format_error);

    HttpLlmClient llm({endpoint});
    CHECK(expand_category_attributes("lesion", AttributeKind::color, llm) ==
          std::vector<std::string>{"red", "blue"});

    // unreachable endpoint exhausts its retry budget
    HttpVqaClient dead({"http://127.0.0.1:1", 50, 1});
    CHECK_THROWS_AS(dead.request("img.pgm", "anything?"), client_error);

    server.stop();
    server_thread.join();
}
