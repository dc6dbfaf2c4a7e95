#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agro/llm_gateway.hpp"
#include "agro/plot_registry.hpp"

namespace agro::triage {

enum class Mode { Multimodal, Rag, Both, None };

std::string_view mode_name(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view name);

inline bool uses_plot(Mode m) noexcept { return m == Mode::Multimodal || m == Mode::Both; }
inline bool uses_rag(Mode m) noexcept { return m == Mode::Rag || m == Mode::Both; }

struct QueryMode {
    Mode mode = Mode::None;
    std::vector<PlotId> detected_plot_ids;
    bool model_fallback = false;  // triage output was unusable; rule-based choice applied
};

/// Every maximal run of 5-7 colon-joined integers, in order of first
/// appearance, duplicates dropped. Runs of other lengths are ignored.
std::vector<PlotId> detect_plot_ids(std::string_view text);
/// ID-shaped runs (5-7 colon-separated integers) that are not canonical,
/// e.g. with leading zeros.
std::vector<std::string> malformed_plot_ids(std::string_view text);

/// MULTIMODAL/RAG/BOTH/NONE from a model reply; nullopt when no token is found.
std::optional<Mode> parse_triage_output(std::string_view model_text);

/// Forces the plot-ID rule: without IDs, plot modes degrade to RAG.
Mode enforce_invariant(Mode proposed, bool has_ids) noexcept;

std::vector<llm::ChatMessage> build_triage_prompt(std::string_view query, const std::vector<PlotId>& ids);

/// Never throws on model trouble: unusable output or gateway failure falls back
/// to BOTH when IDs are present and RAG otherwise.
QueryMode classify_mode(std::string_view query, const std::vector<PlotId>& ids, const llm::Gateway& gateway);

}  // namespace agro::triage
