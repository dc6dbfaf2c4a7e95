#include "agro/aggregator.hpp"

#include <algorithm>
#include <numeric>

#include "agro/errors.hpp"
#include "agro/prompt_assets.hpp"
#include "agro/util.hpp"

namespace agro::aggregate {

using nlohmann::json;
using triage::Mode;

std::string_view block_kind_name(BlockKind kind) noexcept {
    switch (kind) {
        case BlockKind::TerrainDescription: return "terrain_description";
        case BlockKind::PlotAttributes: return "plot_attributes";
        case BlockKind::IndexStats: return "index_stats";
        case BlockKind::DocumentChunk: return "document_chunk";
    }
    return "?";
}

std::vector<CitationEntry> ContextBundle::citations() const {
    std::vector<CitationEntry> out;
    for (const auto& b : blocks)
        if (b.citation) out.push_back(*b.citation);
    return out;
}

json to_json(const CitationEntry& c) {
    json j{{"number", c.number}, {"source_label", c.source_label}};
    j["relevance"] = c.relevance_display ? json(*c.relevance_display) : json(nullptr);
    return j;
}

json to_json(const AssistantResponse& r) {
    json citations = json::array();
    for (const auto& c : r.citations) citations.push_back(to_json(c));
    return {{"markdown", r.markdown},
            {"citations", std::move(citations)},
            {"followups", r.followups},
            {"image_data_uri", r.image_data_uri ? json(*r.image_data_uri) : json(nullptr)}};
}

AssistantResponse response_from_json(const json& j) {
    AssistantResponse r;
    r.markdown = j.at("markdown").get<std::string>();
    for (const auto& c : j.at("citations")) {
        CitationEntry e{c.at("number").get<int>(), c.at("source_label").get<std::string>(), std::nullopt};
        if (c.contains("relevance") && c["relevance"].is_string()) e.relevance_display = c["relevance"].get<std::string>();
        r.citations.push_back(std::move(e));
    }
    r.followups = j.at("followups").get<std::vector<std::string>>();
    if (j.contains("image_data_uri") && j["image_data_uri"].is_string())
        r.image_data_uri = j["image_data_uri"].get<std::string>();
    return r;
}

std::string attrs_to_text(const PlotAttributes& a) {
    return "Area in ha = " + format_shortest(a.area_ha) + ", Perimeter in meters = " + format_shortest(a.perimeter_m) +
           ", Average slope = " + format_shortest(a.slope_pct) + " %, Altitude in meters = " +
           format_shortest(a.altitude_m) + ", Land use = " + a.land_use + ".";
}

std::string stats_to_text(const raster::IndexStats& s) {
    const std::string k(raster::index_name(s.kind));
    auto field = [&](const char* suffix, double v) { return "'" + k + "_" + suffix + "': " + format_fixed_half_up(v, 4); };
    return "The " + k + " statistics are " + field("max", s.max) + ", " + field("mean", s.mean) + ", " +
           field("min", s.min) + ", " + field("stdDev", s.std_dev) + " in range [-1,1].";
}

ContextBundle build_context_bundle(const BundleInputs& in) {
    const Mode mode = in.mode.mode;
    auto mismatch = [&](const std::string& why) {
        return Error(Errc::ModeComponentMismatch, "mode " + std::string(triage::mode_name(mode)) + ": " + why);
    };
    if (triage::uses_plot(mode) && !in.plot) throw mismatch("plot record required");
    if (triage::uses_plot(mode) && in.mode.detected_plot_ids.empty()) throw mismatch("no detected plot ID");
    if (!triage::uses_plot(mode) && (in.plot || in.terrain || !in.stats.empty()))
        throw mismatch("plot components supplied without a plot mode");
    if (!triage::uses_rag(mode) && !in.hits.empty()) throw mismatch("document hits supplied without a RAG mode");

    ContextBundle bundle;
    bundle.mode = in.mode;
    bundle.plot = in.plot;
    bundle.image_data_uri = in.image_data_uri;
    if (in.terrain && !trim(in.terrain->text).empty())
        bundle.blocks.push_back({BlockKind::TerrainDescription, in.terrain->text, std::nullopt, 0});
    if (in.plot)
        bundle.blocks.push_back({BlockKind::PlotAttributes,
                                 "Plot " + in.plot->id.str() + ": " + attrs_to_text(in.plot->attributes), std::nullopt, 0});
    for (const auto& s : in.stats)
        bundle.blocks.push_back({BlockKind::IndexStats, stats_to_text(s), std::nullopt, 0});
    int number = 0;
    for (const auto& hit : in.hits) {
        if (trim(hit.chunk.text).empty()) continue;
        CitationEntry cite{++number, hit.source_label, rag::format_relevance(hit.relevance)};
        bundle.blocks.push_back({BlockKind::DocumentChunk, hit.chunk.text, std::move(cite), hit.raw_score});
    }
    bundle.empty_retrieval = triage::uses_rag(mode) && number == 0;
    return bundle;
}

AssembledPrompt assemble_prompt(const ContextBundle& bundle, std::string_view query, const std::vector<Turn>& history,
                                std::size_t budget_chars) {
    AssembledPrompt out;
    std::vector<bool> keep(bundle.blocks.size(), true);
    std::size_t total = 0;
    for (const auto& b : bundle.blocks) total += b.text.size();

    if (total > budget_chars) {
        std::vector<std::size_t> docs;
        for (std::size_t i = 0; i < bundle.blocks.size(); ++i)
            if (bundle.blocks[i].kind == BlockKind::DocumentChunk) docs.push_back(i);
        // Lowest relevance first; among equals the later citation goes first.
        std::stable_sort(docs.begin(), docs.end(), [&](std::size_t a, std::size_t b) {
            const auto& ba = bundle.blocks[a];
            const auto& bb = bundle.blocks[b];
            return ba.relevance != bb.relevance ? ba.relevance < bb.relevance : a > b;
        });
        for (auto i : docs) {
            if (total <= budget_chars) break;
            keep[i] = false;
            total -= bundle.blocks[i].text.size();
            ++out.dropped_chunks;
        }
        out.context_truncated = true;
    }

    std::string plot_section, docs_section;
    int number = 0;
    for (std::size_t i = 0; i < bundle.blocks.size(); ++i) {
        if (!keep[i]) continue;
        const auto& b = bundle.blocks[i];
        switch (b.kind) {
            case BlockKind::TerrainDescription: plot_section += "### Terrain description\n" + b.text + "\n\n"; break;
            case BlockKind::PlotAttributes: plot_section += "### Plot attributes\n" + b.text + "\n\n"; break;
            case BlockKind::IndexStats: plot_section += "### Satellite index statistics\n" + b.text + "\n\n"; break;
            case BlockKind::DocumentChunk: {
                CitationEntry cite = *b.citation;
                cite.number = ++number;
                docs_section += "[" + std::to_string(cite.number) + "] Source: " + cite.source_label;
                if (cite.relevance_display) docs_section += ", relevance " + *cite.relevance_display;
                docs_section += "\n" + b.text + "\n\n";
                out.citations.push_back(std::move(cite));
                break;
            }
        }
    }

    std::string user;
    if (!plot_section.empty()) user += "## Plot context\n\n" + plot_section;
    if (!docs_section.empty()) {
        user += "## Document excerpts\n\n" + docs_section;
    } else if (bundle.empty_retrieval || (triage::uses_rag(bundle.mode.mode) && out.dropped_chunks > 0)) {
        user += "## Document excerpts\n\nNo relevant document excerpts were found.\n\n";
    }
    user += "## Question\n\n";
    user += query;

    out.messages.push_back(llm::ChatMessage::system(std::string(prompts::kAnswerSystem)));
    for (const auto& turn : history) {
        out.messages.push_back(llm::ChatMessage::user(turn.query));
        out.messages.push_back(llm::ChatMessage::assistant(turn.answer));
    }
    out.messages.push_back(llm::ChatMessage::user(std::move(user)));
    return out;
}

FollowupSplit extract_followups(std::string_view model_text) {
    FollowupSplit untouched{std::string(model_text), {}};
    auto body = model_text;
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    if (body.size() < 6 || body.substr(body.size() - 3) != "```") return untouched;
    const auto closing = body.size() - 3;
    const auto opening = body.rfind("```", closing - 3);
    if (opening == std::string_view::npos) return untouched;

    auto inner = body.substr(opening + 3, closing - opening - 3);
    auto newline = inner.find('\n');
    auto info = trim(inner.substr(0, newline == std::string_view::npos ? 0 : newline));
    if (!info.empty() && to_upper(info) != "JSON") return untouched;
    auto payload = newline == std::string_view::npos ? inner : inner.substr(newline + 1);

    json doc = json::parse(payload, nullptr, false);
    if (doc.is_discarded()) return untouched;
    const json* list = nullptr;
    if (doc.is_object() && doc.contains("followups")) list = &doc["followups"];
    if (doc.is_array()) list = &doc;
    if (!list || !list->is_array()) return untouched;

    FollowupSplit out;
    for (const auto& item : *list) {
        if (!item.is_string()) return untouched;
        const auto raw = item.get<std::string>();
        auto text = trim(raw);
        if (!text.empty() && out.followups.size() < kMaxFollowups) out.followups.emplace_back(text);
    }
    auto md = model_text.substr(0, opening);
    if (!md.empty() && md.back() == '\n') md.remove_suffix(1);
    out.markdown = std::string(md);
    return out;
}

std::string append_followups_block(std::string_view markdown, const std::vector<std::string>& followups) {
    return std::string(markdown) + "\n```json\n" + json{{"followups", followups}}.dump() + "\n```\n";
}

namespace {

template <typename Fn>
std::string rewrite_markers(std::string_view text, Fn&& on_marker) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '[') {
            std::size_t j = i + 1;
            while (j < text.size() && j - i <= 4 && text[j] >= '0' && text[j] <= '9') ++j;
            if (j > i + 1 && j < text.size() && text[j] == ']' && (j + 1 >= text.size() || text[j + 1] != '(')) {
                int n = std::stoi(std::string(text.substr(i + 1, j - i - 1)));
                out += on_marker(n, text.substr(i, j - i + 1));
                i = j + 1;
                continue;
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

}  // namespace

std::vector<int> citation_markers(std::string_view markdown) {
    std::vector<int> numbers;
    rewrite_markers(markdown, [&](int n, std::string_view raw) {
        numbers.push_back(n);
        return std::string(raw);
    });
    return numbers;
}

std::string drop_unresolved_markers(std::string_view markdown, const std::vector<CitationEntry>& citations) {
    return rewrite_markers(markdown, [&](int n, std::string_view raw) {
        bool known = std::any_of(citations.begin(), citations.end(), [n](const CitationEntry& c) { return c.number == n; });
        return known ? std::string(raw) : std::string();
    });
}

AssistantResponse finalize_response(std::string_view model_text, const AssembledPrompt& prompt,
                                    std::optional<std::string> image_data_uri) {
    auto split = extract_followups(model_text);
    AssistantResponse r;
    r.markdown = drop_unresolved_markers(split.markdown, prompt.citations);
    r.citations = prompt.citations;
    r.followups = std::move(split.followups);
    r.image_data_uri = std::move(image_data_uri);
    return r;
}

}  // namespace agro::aggregate
