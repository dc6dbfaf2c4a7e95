#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/llm_gateway.hpp"
#include "agro/ortho.hpp"
#include "agro/plot_registry.hpp"
#include "agro/rag_store.hpp"
#include "agro/raster.hpp"
#include "agro/triage.hpp"

namespace agro::aggregate {

enum class BlockKind { TerrainDescription, PlotAttributes, IndexStats, DocumentChunk };

std::string_view block_kind_name(BlockKind kind) noexcept;

struct CitationEntry {
    int number = 1;
    std::string source_label;
    std::optional<std::string> relevance_display;

    friend bool operator==(const CitationEntry&, const CitationEntry&) = default;
};

struct ContextBlock {
    BlockKind kind = BlockKind::DocumentChunk;
    std::string text;
    std::optional<CitationEntry> citation;
    double relevance = 0;  // retrieval score, used only for budget eviction
};

struct ContextBundle {
    std::vector<ContextBlock> blocks;
    triage::QueryMode mode;
    std::optional<PlotRecord> plot;
    std::optional<std::string> image_data_uri;
    bool empty_retrieval = false;

    std::vector<CitationEntry> citations() const;
};

struct AssistantResponse {
    std::string markdown;
    std::vector<CitationEntry> citations;
    std::vector<std::string> followups;
    std::optional<std::string> image_data_uri;
};

nlohmann::json to_json(const CitationEntry& c);
nlohmann::json to_json(const AssistantResponse& r);
AssistantResponse response_from_json(const nlohmann::json& j);

/// "Area in ha = 0.763, Perimeter in meters = 375.35, Average slope = 21.6 %,
/// Altitude in meters = 94, Land use = PASTIZAL."
std::string attrs_to_text(const PlotAttributes& attrs);

/// "The NDVI statistics are 'NDVI_max': 0.9097, ... in range [-1,1]." (4 decimals, half-up)
std::string stats_to_text(const raster::IndexStats& stats);

struct BundleInputs {
    triage::QueryMode mode;
    std::optional<PlotRecord> plot;
    std::optional<ortho::TerrainDescription> terrain;
    std::vector<raster::IndexStats> stats;
    std::vector<rag::RetrievalHit> hits;
    std::optional<std::string> image_data_uri;
};

/// Blocks ordered terrain, attributes, one per index, then document chunks
/// numbered 1..n in retrieval order. Throws ModeComponentMismatch.
ContextBundle build_context_bundle(const BundleInputs& inputs);

struct Turn {
    std::string query;
    std::string answer;
};

struct AssembledPrompt {
    std::vector<llm::ChatMessage> messages;
    std::vector<CitationEntry> citations;  // after eviction, renumbered 1..m
    bool context_truncated = false;
    std::size_t dropped_chunks = 0;
};

inline constexpr std::size_t kDefaultContextBudget = 24000;

/// System message, then history, then one user message with labeled context
/// sections and the verbatim query. Document chunks are evicted lowest
/// relevance first while the block texts exceed `budget_chars`; plot blocks
/// are never evicted.
AssembledPrompt assemble_prompt(const ContextBundle& bundle, std::string_view query, const std::vector<Turn>& history,
                                std::size_t budget_chars = kDefaultContextBudget);

struct FollowupSplit {
    std::string markdown;
    std::vector<std::string> followups;
};

inline constexpr std::size_t kMaxFollowups = 4;

/// Strips a trailing ```json {"followups": [...]} ``` block. Absent or
/// malformed blocks leave the text untouched and yield no follow-ups.
FollowupSplit extract_followups(std::string_view model_text);

/// Inverse of extract_followups for well-formed input.
std::string append_followups_block(std::string_view markdown, const std::vector<std::string>& followups);

/// Removes "[n]" markers that have no matching citation entry.
std::string drop_unresolved_markers(std::string_view markdown, const std::vector<CitationEntry>& citations);

/// Numbers n of every "[n]" marker, in order of appearance.
std::vector<int> citation_markers(std::string_view markdown);

AssistantResponse finalize_response(std::string_view model_text, const AssembledPrompt& prompt,
                                    std::optional<std::string> image_data_uri);

}  // namespace agro::aggregate
