#include "agro/pipeline.hpp"

#include <algorithm>
#include <future>
#include <set>

#include <spdlog/spdlog.h>

#include "agro/ortho.hpp"
#include "agro/stac.hpp"

namespace agro {

IndexService::IndexService(StacSettings settings) : settings_(std::move(settings)) {}

std::vector<raster::IndexStats> IndexService::compute_from_scenes(const PlotRecord& plot,
                                                                  const std::vector<raster::SceneStack>& scenes,
                                                                  const DateRange& window) const {
    std::vector<raster::IndexStats> out;
    for (auto kind : settings_.indices) {
        std::vector<raster::SceneStack> usable;
        for (const auto& s : scenes) {
            const auto bands = raster::required_bands(kind);
            if (std::all_of(bands.begin(), bands.end(), [&](const std::string& b) { return s.has(b); }))
                usable.push_back(s);
        }
        if (usable.empty()) {
            spdlog::info("indices: no scene provides the bands for {}", raster::index_name(kind));
            continue;
        }
        std::vector<raster::PixelMask> masks;
        for (const auto& s : usable) {
            const auto& ref = s.reference();
            masks.push_back(s.has("scl") ? raster::scl_cloud_mask(s.band("scl"), settings_.excluded_scl)
                                         : raster::PixelMask::full(ref.ncols, ref.nrows));
        }
        auto composite = raster::temporal_composite(usable, kind, masks);
        auto zone = raster::rasterize_polygon_mask(plot.geometry, composite);
        try {
            out.push_back(raster::zonal_stats(composite, zone.mask, kind, window));
        } catch (const Error& e) {
            if (e.code() != Errc::NoValidPixels) throw;
            spdlog::info("indices: {} has no valid pixel inside plot {}", raster::index_name(kind), plot.id.str());
        }
    }
    if (out.empty())
        throw Error(Errc::NoValidPixels, "no cloud-free pixel inside plot " + plot.id.str() + " for window " +
                                             format_date_range(window));
    return out;
}

std::vector<raster::IndexStats> IndexService::compute(const PlotRecord& plot, const DateRange& window) const {
    if (!enabled()) throw Error(Errc::ConfigError, "no STAC endpoint is configured");
    stac::SearchRequest req;
    req.endpoint = settings_.endpoint;
    req.bbox = plot.geometry.bbox();
    req.window = window;
    req.collection = settings_.collection;
    req.max_cloud_pct = settings_.max_cloud_pct;
    req.limit = settings_.limit;
    req.asset_bands = settings_.asset_bands;
    req.timeout_s = settings_.timeout_s;
    auto refs = stac::stac_search(req);
    if (refs.empty())
        throw Error(Errc::NoValidPixels, "no scene found for plot " + plot.id.str() + " in " + format_date_range(window));

    stac::LoadOptions opts;
    for (auto kind : settings_.indices)
        for (auto& b : raster::required_bands(kind)) opts.bands.insert(b);
    opts.bands.insert("scl");
    opts.reflectance_scale = settings_.reflectance_scale;
    opts.reflectance_offset = settings_.reflectance_offset;
    opts.max_in_flight = settings_.max_in_flight;
    opts.timeout_s = settings_.timeout_s;
    return compute_from_scenes(plot, stac::load_scenes(refs, opts), window);
}

// ---------------------------------------------------------------------------

ChatPipeline::ChatPipeline(const AppConfig& config, const PlotRegistry& registry, const llm::Gateway& gateway,
                           const rag::RagStore& store)
    : config_(config), registry_(registry), gateway_(gateway), store_(store), indices_(config.stac) {}

namespace {

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        if (is_upstream_failure(e.code())) throw StageError(stage, e);
        throw;
    }
}

struct PlotContext {
    std::optional<std::string> image_data_uri;
    std::optional<ortho::TerrainDescription> terrain;
};

}  // namespace

ChatResult ChatPipeline::run(const ChatRequest& request) const {
    const std::string query(trim(request.query));
    if (query.empty()) throw Error(Errc::InvalidArgument, "query must not be empty");

    if (auto bad = triage::malformed_plot_ids(query); !bad.empty())
        throw Error(Errc::MalformedPlotId, "malformed plot ID '" + bad.front() + "'");
    auto ids = triage::detect_plot_ids(query);
    if (request.plot_id) {
        auto extra = parse_plot_id(*request.plot_id);
        if (std::find(ids.begin(), ids.end(), extra) == ids.end()) ids.insert(ids.begin(), extra);
    }

    ChatResult result;
    if (request.forced_mode) {
        result.mode = {triage::enforce_invariant(*request.forced_mode, !ids.empty()), ids, false};
    } else {
        result.mode = triage::classify_mode(query, ids, gateway_);
    }
    const auto mode = result.mode.mode;
    spdlog::info("chat: mode {} ({} plot IDs{})", triage::mode_name(mode), ids.size(),
                 result.mode.model_fallback ? ", rule fallback" : "");

    aggregate::BundleInputs inputs;
    inputs.mode = result.mode;

    std::future<PlotContext> plot_task;
    std::future<std::vector<raster::IndexStats>> index_task;
    std::future<rag::SearchResult> rag_task;

    if (triage::uses_plot(mode)) {
        if (ids.size() > 1) result.notes.push_back("only plot " + ids.front().str() + " was analysed");
        inputs.plot = in_stage("registry", [&] { return registry_.fetch(ids.front()); });
        const PlotRecord& plot = *inputs.plot;

        if (!config_.wms.endpoint.empty()) {
            plot_task = std::async(std::launch::async, [this, &plot] {
                PlotContext ctx;
                auto image = in_stage("orthophoto", [&] {
                    const auto& w = config_.wms;
                    auto req = ortho::build_wms_request(plot.geometry, w.buffer_frac, w.target_px, w.layer, w.format);
                    return ortho::fetch_orthophoto(req, w.endpoint, w.timeout_s);
                });
                ctx.image_data_uri = ortho::encode_data_uri(image);
                if (gateway_.has(llm::ModelRole::Multimodal))
                    ctx.terrain = in_stage("terrain",
                                           [&] { return ortho::describe_terrain(image, plot.attributes, gateway_); });
                return ctx;
            });
        }
        if (indices_.enabled()) {
            index_task = std::async(std::launch::async, [this, &plot] {
                return in_stage("indices", [&] { return indices_.compute(plot, default_window(indices_.settings())); });
            });
        }
    }
    if (triage::uses_rag(mode) && store_.chunk_count() > 0) {
        rag_task = std::async(std::launch::async, [this, &query] {
            return in_stage("retrieval", [&] {
                return store_.search_topk(query, config_.rag.top_k, gateway_, config_.rag.use_reranker);
            });
        });
    }

    // Join every task before rethrowing so no worker outlives the request.
    std::exception_ptr first_error;
    auto join = [&](auto& fut, auto&& on_value) {
        if (!fut.valid()) return;
        try {
            on_value(fut.get());
        } catch (const Error& e) {
            if (e.code() == Errc::NoValidPixels) {
                result.notes.push_back(e.what());
                return;
            }
            if (!first_error) first_error = std::current_exception();
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    };
    join(plot_task, [&](PlotContext ctx) {
        inputs.image_data_uri = std::move(ctx.image_data_uri);
        inputs.terrain = std::move(ctx.terrain);
    });
    join(index_task, [&](std::vector<raster::IndexStats> stats) { inputs.stats = std::move(stats); });
    join(rag_task, [&](rag::SearchResult found) {
        if (found.reranker_failed) result.notes.push_back("reranker unavailable, cosine order used");
        inputs.hits = std::move(found.hits);
    });
    if (first_error) std::rethrow_exception(first_error);

    auto bundle = aggregate::build_context_bundle(inputs);
    std::vector<aggregate::Turn> history = request.history;
    if (history.size() > config_.history_turns)
        history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(config_.history_turns));
    auto prompt = aggregate::assemble_prompt(bundle, query, history, config_.context_budget_chars);
    result.context_truncated = prompt.context_truncated;

    auto reply = in_stage("answer", [&] { return gateway_.chat_complete(llm::ModelRole::Final, prompt.messages); });
    if (trim(reply).empty()) throw StageError("answer", Error(Errc::EmptyModelResponse, "the final model returned no text"));
    result.response = aggregate::finalize_response(reply, prompt, bundle.image_data_uri);
    return result;
}

}  // namespace agro
