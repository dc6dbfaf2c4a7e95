#include "agro/triage.hpp"

#include <algorithm>
#include <cctype>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/prompt_assets.hpp"
#include "agro/util.hpp"

namespace agro::triage {

std::string_view mode_name(Mode mode) noexcept {
    switch (mode) {
        case Mode::Multimodal: return "multimodal";
        case Mode::Rag: return "rag";
        case Mode::Both: return "both";
        case Mode::None: return "none";
    }
    return "none";
}

std::optional<Mode> parse_mode(std::string_view name) {
    auto upper = to_upper(trim(name));
    if (upper == "MULTIMODAL") return Mode::Multimodal;
    if (upper == "RAG") return Mode::Rag;
    if (upper == "BOTH") return Mode::Both;
    if (upper == "NONE") return Mode::None;
    return std::nullopt;
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

namespace {

/// Maximal digit-colon runs with a plot-ID arity, in order of appearance.
std::vector<std::string_view> id_candidates(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_digit(text[i]) || (i > 0 && is_digit(text[i - 1]))) {
            ++i;
            continue;
        }
        std::size_t end = i;
        std::size_t groups = 0;
        while (true) {
            while (end < text.size() && is_digit(text[end])) ++end;
            ++groups;
            if (end + 1 < text.size() && text[end] == ':' && is_digit(text[end + 1])) {
                ++end;
                continue;
            }
            break;
        }
        if (groups >= PlotId::kMinComponents && groups <= PlotId::kMaxComponents) out.push_back(text.substr(i, end - i));
        i = end;
    }
    return out;
}

}  // namespace

std::vector<PlotId> detect_plot_ids(std::string_view text) {
    std::vector<PlotId> found;
    for (auto candidate : id_candidates(text)) {
        try {
            auto id = parse_plot_id(candidate);
            if (std::find(found.begin(), found.end(), id) == found.end()) found.push_back(std::move(id));
        } catch (const Error&) {
            // leading zeros or overflow: not a canonical plot ID
        }
    }
    return found;
}

std::vector<std::string> malformed_plot_ids(std::string_view text) {
    std::vector<std::string> bad;
    for (auto candidate : id_candidates(text)) {
        try {
            parse_plot_id(candidate);
        } catch (const Error&) {
            bad.emplace_back(candidate);
        }
    }
    return bad;
}

std::optional<Mode> parse_triage_output(std::string_view model_text) {
    std::string text(model_text);
    // Reasoning models may prepend a <think>...</think> block.
    for (auto open = text.find("<think>"); open != std::string::npos; open = text.find("<think>")) {
        auto close = text.find("</think>", open);
        text.erase(open, close == std::string::npos ? std::string::npos : close + 8 - open);
    }
    std::string word;
    auto flush = [&]() -> std::optional<Mode> {
        auto mode = word.empty() ? std::nullopt : parse_mode(word);
        word.clear();
        return mode;
    };
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word.push_back(c);
        } else if (auto mode = flush()) {
            return mode;
        }
    }
    return flush();
}

Mode enforce_invariant(Mode proposed, bool has_ids) noexcept {
    if (!has_ids && uses_plot(proposed)) return Mode::Rag;
    return proposed;
}

std::vector<llm::ChatMessage> build_triage_prompt(std::string_view query, const std::vector<PlotId>& ids) {
    std::string listed;
    for (const auto& id : ids) listed += (listed.empty() ? "" : ", ") + id.str();
    if (listed.empty()) listed = "none";
    return {llm::ChatMessage::user(render_template(prompts::kTriage, {{"query", std::string(query)}, {"plot_ids", listed}}))};
}

QueryMode classify_mode(std::string_view query, const std::vector<PlotId>& ids, const llm::Gateway& gateway) {
    QueryMode result{Mode::None, ids, false};
    const bool has_ids = !ids.empty();
    std::optional<Mode> proposed;
    if (gateway.has(llm::ModelRole::Triage)) {
        try {
            auto reply = gateway.chat_complete(llm::ModelRole::Triage, build_triage_prompt(query, ids));
            proposed = parse_triage_output(reply);
            if (!proposed) spdlog::warn("triage: unparsable model output '{}'", reply.substr(0, 80));
        } catch (const Error& e) {
            spdlog::warn("triage: model call failed ({}), using rule-based routing", e.what());
        }
    }
    if (!proposed) {
        result.model_fallback = true;
        proposed = has_ids ? Mode::Both : Mode::Rag;
    }
    result.mode = enforce_invariant(*proposed, has_ids);
    return result;
}

}  // namespace agro::triage
