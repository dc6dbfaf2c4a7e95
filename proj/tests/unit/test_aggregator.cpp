#include <doctest.h>

#include "agro/aggregator.hpp"
#include "expect_error.hpp"

using namespace agro;
using namespace agro::aggregate;
using agro::testing::code_of;
using triage::Mode;

namespace {

PlotRecord plot() {
    return {parse_plot_id("0:0:107:55:1"),
            {0.763, 375.35, 21.6, 94, "PASTIZAL"},
            {{{{0, 0}, {1, 0}, {1, 1}, {0, 0}}}},
            PlotSource::Fixture};
}

rag::RetrievalHit hit(const std::string& text, int page, double score) {
    rag::Chunk c{"c" + std::to_string(page), "d", "manual.pdf", page, 0, text.size(), text};
    return {c, score, score, rag::source_label("manual.pdf", page), rag::ScoreSource::Cosine};
}

triage::QueryMode mode(Mode m, bool ids = true) {
    triage::QueryMode q;
    q.mode = m;
    if (ids) q.detected_plot_ids = {parse_plot_id("0:0:107:55:1")};
    return q;
}

raster::IndexStats ndvi() {
    return {raster::IndexKind::NDVI, 0.90965, 0.85, 0.7, 0.05, 10, *parse_date_range("2024-06-01/2024-06-30")};
}

}  // namespace

TEST_CASE("plot attributes and statistics render as sentences") {
    CHECK(attrs_to_text(plot().attributes) ==
          "Area in ha = 0.763, Perimeter in meters = 375.35, Average slope = 21.6 %, Altitude in meters = 94, "
          "Land use = PASTIZAL.");
    CHECK(stats_to_text(ndvi()) ==
          "The NDVI statistics are 'NDVI_max': 0.9097, 'NDVI_mean': 0.8500, 'NDVI_min': 0.7000, 'NDVI_stdDev': 0.0500 "
          "in range [-1,1].");
}

TEST_CASE("bundles order plot blocks before numbered document chunks") {
    BundleInputs in;
    in.mode = mode(Mode::Both);
    in.plot = plot();
    in.terrain = ortho::TerrainDescription{"Grass on a slope.", "vision", {}};
    in.stats = {ndvi()};
    in.hits = {hit("first", 67, 0.9), hit("  ", 68, 0.8), hit("third", 69, 0.7)};
    auto b = build_context_bundle(in);
    REQUIRE(b.blocks.size() == 5);
    CHECK(b.blocks[0].kind == BlockKind::TerrainDescription);
    CHECK(b.blocks[1].kind == BlockKind::PlotAttributes);
    CHECK(b.blocks[1].text.find("0:0:107:55:1") != std::string::npos);
    CHECK(b.blocks[2].kind == BlockKind::IndexStats);
    auto cites = b.citations();
    REQUIRE(cites.size() == 2);
    CHECK(cites[0] == CitationEntry{1, "manual.pdf (page 67)", "90.00% (0.9000)"});
    CHECK(cites[1].number == 2);
    CHECK(cites[1].source_label == "manual.pdf (page 69)");
    CHECK(!b.empty_retrieval);
}

TEST_CASE("bundle components must match the mode") {
    BundleInputs in;
    in.mode = mode(Mode::Multimodal);
    CHECK(code_of([&] { build_context_bundle(in); }) == Errc::ModeComponentMismatch);
    in.plot = plot();
    in.hits = {hit("x", 1, 0.5)};
    CHECK(code_of([&] { build_context_bundle(in); }) == Errc::ModeComponentMismatch);

    BundleInputs rag;
    rag.mode = mode(Mode::Rag, false);
    rag.stats = {ndvi()};
    CHECK(code_of([&] { build_context_bundle(rag); }) == Errc::ModeComponentMismatch);
    rag.stats.clear();
    auto b = build_context_bundle(rag);
    CHECK(b.empty_retrieval);
    CHECK(b.blocks.empty());

    BundleInputs none;
    none.mode = mode(Mode::None, false);
    CHECK(!build_context_bundle(none).empty_retrieval);
}

TEST_CASE("prompts label sections and keep history before the query") {
    BundleInputs in;
    in.mode = mode(Mode::Both);
    in.plot = plot();
    in.hits = {hit("Apple trees need deep soil.", 68, 0.82)};
    auto prompt = assemble_prompt(build_context_bundle(in), "Can I plant apples?", {{"hi", "hello"}});
    REQUIRE(prompt.messages.size() == 4);
    CHECK(prompt.messages[0].role == llm::ChatMessage::Role::System);
    CHECK(prompt.messages[1].text() == "hi");
    CHECK(prompt.messages[2].role == llm::ChatMessage::Role::Assistant);
    auto user = prompt.messages[3].text();
    CHECK(user.find("### Plot attributes") != std::string::npos);
    CHECK(user.find("[1] Source: manual.pdf (page 68), relevance 82.00% (0.8200)") != std::string::npos);
    CHECK(user.size() - user.rfind("Can I plant apples?") == std::string("Can I plant apples?").size());
    CHECK(!prompt.context_truncated);
}

TEST_CASE("empty retrieval is stated explicitly") {
    BundleInputs in;
    in.mode = mode(Mode::Rag, false);
    auto prompt = assemble_prompt(build_context_bundle(in), "q", {});
    CHECK(prompt.messages.back().text().find("No relevant document excerpts were found.") != std::string::npos);
    CHECK(prompt.citations.empty());
}

TEST_CASE("over-budget prompts evict the least relevant chunks and renumber") {
    BundleInputs in;
    in.mode = mode(Mode::Both);
    in.plot = plot();
    in.hits = {hit(std::string(100, 'a'), 1, 0.9), hit(std::string(100, 'b'), 2, 0.2), hit(std::string(100, 'c'), 3, 0.5)};
    auto bundle = build_context_bundle(in);
    const std::size_t plot_len = bundle.blocks[0].text.size();

    auto p = assemble_prompt(bundle, "q", {}, plot_len + 200);
    CHECK(p.context_truncated);
    CHECK(p.dropped_chunks == 1);
    REQUIRE(p.citations.size() == 2);
    CHECK(p.citations[0].source_label == "manual.pdf (page 1)");
    CHECK(p.citations[1].source_label == "manual.pdf (page 3)");
    CHECK(p.citations[1].number == 2);

    auto tiny = assemble_prompt(bundle, "q", {}, 1);
    CHECK(tiny.citations.empty());
    CHECK(tiny.messages.back().text().find("### Plot attributes") != std::string::npos);
    CHECK(tiny.messages.back().text().find("No relevant document excerpts") != std::string::npos);
}

TEST_CASE("follow-up blocks round trip") {
    std::vector<std::string> f = {"What rootstock?", "Which cultivars?"};
    auto text = append_followups_block("## Answer\n\nPlant in winter.", f);
    auto split = extract_followups(text);
    CHECK(split.followups == f);
    CHECK(split.markdown == "## Answer\n\nPlant in winter.");

    auto none = extract_followups("Just prose.");
    CHECK(none.followups.empty());
    CHECK(none.markdown == "Just prose.");

    auto broken = extract_followups("Text\n```json\n{\"followups\": [\n```");
    CHECK(broken.followups.empty());
    CHECK(broken.markdown == "Text\n```json\n{\"followups\": [\n```");

    auto code = extract_followups("Run\n```python\nprint(1)\n```");
    CHECK(code.followups.empty());

    auto many = extract_followups(append_followups_block("x", {"a", "b", "c", "d", "e", " "}));
    CHECK(many.followups.size() == kMaxFollowups);
}

TEST_CASE("unresolved citation markers are dropped") {
    std::vector<CitationEntry> cites = {{1, "a", std::nullopt}, {2, "b", std::nullopt}};
    CHECK(drop_unresolved_markers("See [1], [2] and [3].", cites) == "See [1], [2] and .");
    CHECK(drop_unresolved_markers("A [link](http://x) and [5](y)", {}) == "A [link](http://x) and [5](y)");
    CHECK(citation_markers("[2] then [10] then [x]") == std::vector<int>{2, 10});
}

TEST_CASE("finalized responses carry citations, follow-ups and the image") {
    BundleInputs in;
    in.mode = mode(Mode::Rag, false);
    in.hits = {hit("text", 5, 0.5)};
    auto prompt = assemble_prompt(build_context_bundle(in), "q", {});
    auto r = finalize_response(append_followups_block("Answer [1] [2].", {"next?"}), prompt, "data:image/jpeg;base64,AA");
    CHECK(r.markdown == "Answer [1] .");
    CHECK(r.followups == std::vector<std::string>{"next?"});
    REQUIRE(r.citations.size() == 1);
    for (int n : citation_markers(r.markdown)) CHECK(n <= static_cast<int>(r.citations.size()));

    auto j = to_json(r);
    CHECK(j["citations"][0]["source_label"] == "manual.pdf (page 5)");
    CHECK(j["image_data_uri"] == "data:image/jpeg;base64,AA");
    auto back = response_from_json(j);
    CHECK(back.markdown == r.markdown);
    CHECK(back.citations == r.citations);
    CHECK(back.image_data_uri == r.image_data_uri);
}
