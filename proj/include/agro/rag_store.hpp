#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/llm_gateway.hpp"

namespace agro::rag {

using llm::EmbeddingVector;

struct DocumentPage {
    int page_number = 1;
    std::string text;
};

struct DocumentRecord {
    std::string doc_id;
    std::string filename;
    std::vector<DocumentPage> pages;
};

/// {doc_id, filename, pages: [{page_number, text}]} ("page" is accepted too); page numbers must be >= 1 and
/// strictly increasing.
DocumentRecord document_from_json(const nlohmann::json& j);
/// Plain UTF-8 text, treated as a single page.
DocumentRecord document_from_text(std::string doc_id, std::string filename, std::string text);

/// Character offsets are counted in Unicode code points, never bytes.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string filename;
    int page_number = 1;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string text;
};

struct ChunkingParams {
    std::size_t chunk_size = 1000;
    std::size_t overlap = 200;
};

/// Fixed windows with stride chunk_size - overlap, restarted on every page.
/// A page that fits in one window yields one chunk; otherwise every window
/// start below the page length yields a chunk (the last ones clamped).
std::vector<Chunk> chunk_document(const DocumentRecord& doc, const ChunkingParams& params, std::size_t generation = 0);

/// Throws DimensionMismatch / ZeroVector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

enum class ScoreSource { Cosine, Reranker };

struct RetrievalHit {
    Chunk chunk;
    double relevance = 0;  // raw_score clamped to [0, 1], display only
    double raw_score = 0;
    std::string source_label;  // "{filename} (page {n})"
    ScoreSource score_source = ScoreSource::Cosine;
};

std::string source_label(const std::string& filename, int page);

/// "82.21% (0.8221)". Throws OutOfRange outside [0, 1].
std::string format_relevance(double raw);

struct SearchResult {
    std::vector<RetrievalHit> hits;
    bool reranker_failed = false;
};

/// Exact in-memory vector index with many-readers / one-writer snapshots.
class RagStore {
public:
    explicit RagStore(ChunkingParams params = {});

    const ChunkingParams& params() const noexcept { return params_; }

    /// Chunks, embeds and inserts `doc`; with replace=true an existing doc_id
    /// is swapped out atomically. Returns the number of chunks added.
    std::size_t ingest_document(const DocumentRecord& doc, const llm::Gateway& gateway, bool replace = false);

    /// Inserts pre-embedded chunks (one vector per chunk).
    std::size_t insert_chunks(const std::string& doc_id, const std::string& filename, std::vector<Chunk> chunks,
                              std::vector<EmbeddingVector> vectors, bool replace = false);

    SearchResult search_topk(const std::string& query, std::size_t k, const llm::Gateway& gateway,
                             bool use_reranker) const;

    /// Exhaustive cosine scan; ties keep insertion order.
    std::vector<RetrievalHit> search_vector(const EmbeddingVector& query, std::size_t k) const;

    std::size_t chunk_count() const;
    std::size_t dim() const;
    bool has_document(const std::string& doc_id) const;
    std::vector<std::string> chunk_ids() const;

    /// vectors.bin (format tag, dim, count, float64 data) + chunks.json.
    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);

private:
    struct Snapshot {
        std::vector<Chunk> chunks;
        std::vector<EmbeddingVector> vectors;
        std::vector<double> norms;
        std::map<std::string, std::string> documents;  // doc_id -> filename
        std::size_t dim = 0;
        std::size_t generation = 0;
    };

    std::shared_ptr<const Snapshot> snapshot() const;
    void publish(std::shared_ptr<const Snapshot> next);

    ChunkingParams params_;
    mutable std::mutex snapshot_mu_;
    std::mutex write_mu_;
    std::shared_ptr<const Snapshot> current_;
};

}  // namespace agro::rag
