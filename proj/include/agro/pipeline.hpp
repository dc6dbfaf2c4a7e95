#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agro/aggregator.hpp"
#include "agro/config.hpp"
#include "agro/errors.hpp"
#include "agro/llm_gateway.hpp"
#include "agro/plot_registry.hpp"
#include "agro/rag_store.hpp"
#include "agro/raster.hpp"
#include "agro/triage.hpp"

namespace agro {

/// A pipeline failure tagged with the stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), cause.what()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Scene search, loading, cloud masking, median composite and zonal statistics
/// for one plot.
class IndexService {
public:
    explicit IndexService(StacSettings settings);

    bool enabled() const noexcept { return !settings_.endpoint.empty(); }
    const StacSettings& settings() const noexcept { return settings_; }

    /// One entry per configured index the scenes support. Throws
    /// NoValidPixels when nothing usable falls inside the plot.
    std::vector<raster::IndexStats> compute(const PlotRecord& plot, const DateRange& window) const;

    /// compute() on already-loaded scenes.
    std::vector<raster::IndexStats> compute_from_scenes(const PlotRecord& plot,
                                                        const std::vector<raster::SceneStack>& scenes,
                                                        const DateRange& window) const;

private:
    StacSettings settings_;
};

struct ChatRequest {
    std::string query;
    std::optional<std::string> plot_id;  // in addition to IDs written in the query
    std::vector<aggregate::Turn> history;
    std::optional<triage::Mode> forced_mode;
};

struct ChatResult {
    aggregate::AssistantResponse response;
    triage::QueryMode mode;
    bool context_truncated = false;
    std::vector<std::string> notes;  // degraded sub-results, e.g. no cloud-free scene
};

class ChatPipeline {
public:
    ChatPipeline(const AppConfig& config, const PlotRegistry& registry, const llm::Gateway& gateway,
                 const rag::RagStore& store);

    /// Throws Error(InvalidArgument / MalformedPlotId), Error(PlotNotFound) and
    /// StageError for upstream failures.
    ChatResult run(const ChatRequest& request) const;

private:
    const AppConfig& config_;
    const PlotRegistry& registry_;
    const llm::Gateway& gateway_;
    const rag::RagStore& store_;
    IndexService indices_;
};

}  // namespace agro
