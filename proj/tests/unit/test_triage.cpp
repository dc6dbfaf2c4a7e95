#include <doctest.h>

#include <random>

#include "agro/triage.hpp"
#include "expect_error.hpp"
#include "fake_world.hpp"

using namespace agro;
using namespace agro::triage;

namespace {

std::vector<std::string> strs(const std::vector<PlotId>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) out.push_back(id.str());
    return out;
}

}  // namespace

TEST_CASE("plot IDs are detected in free text") {
    CHECK(strs(detect_plot_ids("Can I plant apple trees in plot 0:0:107:55:1?")) ==
          std::vector<std::string>{"0:0:107:55:1"});
    CHECK(strs(detect_plot_ids("Compare 33:12:4:201:7:3 with 0:0:107:161:1 and 33:12:4:201:7:3 again")) ==
          std::vector<std::string>{"33:12:4:201:7:3", "0:0:107:161:1"});
    CHECK(detect_plot_ids("At 10:30:15 the NDVI was 0.8").empty());
    CHECK(detect_plot_ids("1:2:3:4:5:6:7:8").empty());
    CHECK(strs(detect_plot_ids("id=1:2:3:4:5.")) == std::vector<std::string>{"1:2:3:4:5"});
    CHECK(detect_plot_ids("").empty());
}

TEST_CASE("non-canonical ID-shaped runs are reported") {
    CHECK(malformed_plot_ids("plot 0:0:0107:55:1") == std::vector<std::string>{"0:0:0107:55:1"});
    CHECK(detect_plot_ids("plot 0:0:0107:55:1").empty());
    CHECK(malformed_plot_ids("plot 0:0:107:55:1").empty());
    CHECK(malformed_plot_ids("time 10:30:15").empty());
}

TEST_CASE("triage output tokens are parsed loosely") {
    CHECK(parse_triage_output("RAG") == Mode::Rag);
    CHECK(parse_triage_output("  both\n") == Mode::Both);
    CHECK(parse_triage_output("The route is MULTIMODAL.") == Mode::Multimodal);
    CHECK(parse_triage_output("<think>maybe RAG</think>NONE") == Mode::None);
    CHECK(parse_triage_output("**BOTH**") == Mode::Both);
    CHECK(!parse_triage_output("I cannot decide"));
    CHECK(!parse_triage_output(""));
    for (auto m : {Mode::Multimodal, Mode::Rag, Mode::Both, Mode::None}) CHECK(parse_mode(mode_name(m)) == m);
}

TEST_CASE("plot modes require plot IDs") {
    CHECK(enforce_invariant(Mode::Multimodal, false) == Mode::Rag);
    CHECK(enforce_invariant(Mode::Both, false) == Mode::Rag);
    CHECK(enforce_invariant(Mode::None, false) == Mode::None);
    CHECK(enforce_invariant(Mode::Multimodal, true) == Mode::Multimodal);
    CHECK(enforce_invariant(Mode::Rag, true) == Mode::Rag);
}

TEST_CASE("triage prompt lists the detected IDs") {
    auto ids = detect_plot_ids("plot 0:0:107:55:1");
    auto msgs = build_triage_prompt("Is plot 0:0:107:55:1 steep?", ids);
    REQUIRE(msgs.size() == 1);
    auto text = msgs[0].text();
    CHECK(text.find("Plot IDs detected in the question: 0:0:107:55:1") != std::string::npos);
    CHECK(text.find("Question: Is plot 0:0:107:55:1 steep?") != std::string::npos);
    CHECK(build_triage_prompt("hello", {})[0].text().find("question: none") != std::string::npos);
}

TEST_CASE("classification follows the model within the invariant") {
    agro::testing::FakeWorld world;
    auto cfg = world.config();
    llm::Gateway gw(cfg.endpoints, cfg.retry);
    auto ids = detect_plot_ids("plot 0:0:107:55:1");

    auto both = classify_mode("Can I plant apples in plot 0:0:107:55:1?", ids, gw);
    CHECK(both.mode == Mode::Both);
    CHECK(!both.model_fallback);
    CHECK(strs(both.detected_plot_ids) == std::vector<std::string>{"0:0:107:55:1"});

    world.triage_reply = [](const std::string&, bool) { return "MULTIMODAL"; };
    CHECK(classify_mode("What grows on apple farms?", {}, gw).mode == Mode::Rag);
    CHECK(classify_mode("Describe plot 0:0:107:55:1", ids, gw).mode == Mode::Multimodal);

    world.triage_reply = [](const std::string&, bool) { return "no idea"; };
    auto fb = classify_mode("Describe plot 0:0:107:55:1", ids, gw);
    CHECK(fb.model_fallback);
    CHECK(fb.mode == Mode::Both);

    world.triage_reply = nullptr;
    world.fail("triage");
    auto down = classify_mode("What is the best rootstock?", {}, gw);
    CHECK(down.model_fallback);
    CHECK(down.mode == Mode::Rag);
}

TEST_CASE("random model replies never break the invariant") {
    agro::testing::FakeWorld world;
    auto cfg = world.config();
    llm::Gateway gw(cfg.endpoints, cfg.retry);
    std::mt19937 rng(99);
    const char* replies[] = {"MULTIMODAL", "BOTH", "RAG", "NONE", "", "???", "both please", "<think>x"};
    world.triage_reply = [&](const std::string&, bool) { return std::string(replies[rng() % 8]); };
    const char* queries[] = {"plot 0:0:107:55:1 slope?", "apple pollination", "1:2:3", "1:2:3:4:5 and 6:7:8:9:10"};
    for (int i = 0; i < 40; ++i) {
        std::string q = queries[i % 4];
        auto ids = detect_plot_ids(q);
        auto r = classify_mode(q, ids, gw);
        if (ids.empty()) CHECK(!uses_plot(r.mode));
    }
}
