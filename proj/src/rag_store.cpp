#include "agro/rag_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/util.hpp"

namespace agro::rag {

using nlohmann::json;

namespace {

constexpr char kVectorMagic[8] = {'A', 'G', 'R', 'O', 'V', 'E', 'C', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kEmbedBatch = 32;

/// Byte offset of every code point start, plus the total length at the end.
std::vector<std::size_t> codepoint_offsets(const std::string& s) {
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < s.size(); ++i)
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) offsets.push_back(i);
    offsets.push_back(s.size());
    return offsets;
}

double norm_of(const EmbeddingVector& v) {
    double sq = 0;
    for (double x : v.values) sq += x * x;
    return std::sqrt(sq);
}

}  // namespace

DocumentRecord document_from_json(const json& j) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "document: " + why); };
    if (!j.is_object()) throw bad("expected a JSON object");
    if (!j.contains("doc_id") || !j["doc_id"].is_string() || j["doc_id"].get<std::string>().empty())
        throw bad("doc_id must be a non-empty string");
    DocumentRecord doc;
    doc.doc_id = j["doc_id"].get<std::string>();
    doc.filename = j.contains("filename") && j["filename"].is_string() ? j["filename"].get<std::string>() : doc.doc_id;
    if (!j.contains("pages") || !j["pages"].is_array()) throw bad("pages must be an array");
    int previous = 0;
    for (const auto& p : j["pages"]) {
        const char* key = p.is_object() && p.contains("page_number") ? "page_number" : "page";
        if (!p.is_object() || !p.contains(key) || !p[key].is_number_integer() || !p.contains("text") ||
            !p["text"].is_string())
            throw bad("each page needs an integer 'page_number' and a string 'text'");
        int number = p[key].get<int>();
        if (number < 1) throw bad("page numbers start at 1");
        if (number <= previous) throw bad("page numbers must be strictly increasing");
        previous = number;
        doc.pages.push_back({number, p["text"].get<std::string>()});
    }
    return doc;
}

DocumentRecord document_from_text(std::string doc_id, std::string filename, std::string text) {
    DocumentRecord doc{std::move(doc_id), std::move(filename), {}};
    doc.pages.push_back({1, std::move(text)});
    return doc;
}

std::vector<Chunk> chunk_document(const DocumentRecord& doc, const ChunkingParams& params, std::size_t generation) {
    if (params.chunk_size == 0 || params.overlap >= params.chunk_size)
        throw Error(Errc::InvalidArgument, "chunking requires chunk_size > overlap >= 0");
    const std::size_t stride = params.chunk_size - params.overlap;
    std::vector<Chunk> chunks;
    for (const auto& page : doc.pages) {
        const auto offsets = codepoint_offsets(page.text);
        const std::size_t length = offsets.size() - 1;
        if (length == 0) continue;
        for (std::size_t start = 0; start < length; start += stride) {
            const std::size_t end = std::min(start + params.chunk_size, length);
            std::string text = page.text.substr(offsets[start], offsets[end] - offsets[start]);
            if (!trim(text).empty()) {
                chunks.push_back({doc.doc_id + "@" + std::to_string(generation) + ":p" + std::to_string(page.page_number) +
                                      ":" + std::to_string(start),
                                  doc.doc_id, doc.filename, page.page_number, start, end, std::move(text)});
            }
            if (length <= params.chunk_size) break;
        }
    }
    return chunks;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw Error(Errc::DimensionMismatch, "cosine of vectors with dims " + std::to_string(a.dim()) + " and " +
                                                 std::to_string(b.dim()));
    double na = norm_of(a), nb = norm_of(b);
    if (na == 0 || nb == 0) throw Error(Errc::ZeroVector, "cosine similarity of a zero vector");
    double dot = std::inner_product(a.values.begin(), a.values.end(), b.values.begin(), 0.0);
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::string source_label(const std::string& filename, int page) {
    return filename + " (page " + std::to_string(page) + ")";
}

std::string format_relevance(double raw) {
    if (!(raw >= 0.0 && raw <= 1.0)) throw Error(Errc::OutOfRange, "relevance must be within [0, 1]");
    return format_fixed_half_up(raw, 2, 2) + "% (" + format_fixed_half_up(raw, 4) + ")";
}

// ---------------------------------------------------------------------------

RagStore::RagStore(ChunkingParams params) : params_(params), current_(std::make_shared<Snapshot>()) {
    if (params_.chunk_size == 0 || params_.overlap >= params_.chunk_size)
        throw Error(Errc::InvalidArgument, "chunking requires chunk_size > overlap >= 0");
}

std::shared_ptr<const RagStore::Snapshot> RagStore::snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return current_;
}

void RagStore::publish(std::shared_ptr<const Snapshot> next) {
    std::lock_guard lock(snapshot_mu_);
    current_ = std::move(next);
}

std::size_t RagStore::ingest_document(const DocumentRecord& doc, const llm::Gateway& gateway, bool replace) {
    if (doc.doc_id.empty()) throw Error(Errc::InvalidArgument, "document needs a doc_id");
    if (!replace && has_document(doc.doc_id))
        throw Error(Errc::DuplicateDocId, "document " + doc.doc_id + " already ingested; pass replace to overwrite");

    const auto generation = snapshot()->generation + 1;
    auto chunks = chunk_document(doc, params_, generation);
    std::vector<EmbeddingVector> vectors;
    for (std::size_t i = 0; i < chunks.size(); i += kEmbedBatch) {
        std::vector<std::string> texts;
        for (std::size_t j = i; j < std::min(chunks.size(), i + kEmbedBatch); ++j) texts.push_back(chunks[j].text);
        try {
            auto batch = gateway.embed_texts(texts);
            std::move(batch.begin(), batch.end(), std::back_inserter(vectors));
        } catch (const Error& e) {
            throw Error(Errc::EmbeddingFailed, std::string("embedding document chunks failed: ") + e.what());
        }
    }
    return insert_chunks(doc.doc_id, doc.filename, std::move(chunks), std::move(vectors), replace);
}

std::size_t RagStore::insert_chunks(const std::string& doc_id, const std::string& filename, std::vector<Chunk> chunks,
                                    std::vector<EmbeddingVector> vectors, bool replace) {
    if (chunks.size() != vectors.size())
        throw Error(Errc::EmbeddingFailed, "one embedding per chunk is required");
    std::lock_guard write(write_mu_);
    auto base = snapshot();
    if (!replace && base->documents.count(doc_id))
        throw Error(Errc::DuplicateDocId, "document " + doc_id + " already ingested; pass replace to overwrite");

    auto next = std::make_shared<Snapshot>();
    next->dim = base->dim;
    next->generation = base->generation + 1;
    next->documents = base->documents;
    for (std::size_t i = 0; i < base->chunks.size(); ++i) {
        if (base->chunks[i].doc_id == doc_id) continue;
        next->chunks.push_back(base->chunks[i]);
        next->vectors.push_back(base->vectors[i]);
        next->norms.push_back(base->norms[i]);
    }
    if (next->chunks.empty()) next->dim = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        auto& v = vectors[i];
        if (next->dim == 0) next->dim = v.dim();
        if (v.dim() != next->dim)
            throw Error(Errc::EmbeddingFailed, "embedding dim " + std::to_string(v.dim()) + " differs from index dim " +
                                                   std::to_string(next->dim));
        double n = norm_of(v);
        if (!(n > 0) || !std::isfinite(n)) throw Error(Errc::EmbeddingFailed, "chunk embedding has zero norm");
        chunks[i].doc_id = doc_id;
        chunks[i].filename = filename;
        next->chunks.push_back(std::move(chunks[i]));
        next->vectors.push_back(std::move(v));
        next->norms.push_back(n);
    }
    next->documents[doc_id] = filename;
    const auto added = chunks.size();
    publish(std::move(next));
    spdlog::info("rag: {} chunks indexed for {}", added, doc_id);
    return added;
}

std::vector<RetrievalHit> RagStore::search_vector(const EmbeddingVector& query, std::size_t k) const {
    auto snap = snapshot();
    if (snap->chunks.empty()) throw Error(Errc::EmptyIndex, "the document index is empty");
    if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
    if (query.dim() != snap->dim)
        throw Error(Errc::DimensionMismatch, "query dim " + std::to_string(query.dim()) + " differs from index dim " +
                                                 std::to_string(snap->dim));
    const double qn = norm_of(query);
    if (qn == 0) throw Error(Errc::ZeroVector, "query embedding is a zero vector");

    std::vector<double> scores(snap->chunks.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& v = snap->vectors[i].values;
        double dot = std::inner_product(v.begin(), v.end(), query.values.begin(), 0.0);
        scores[i] = std::clamp(dot / (snap->norms[i] * qn), -1.0, 1.0);
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    const auto take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });

    std::vector<RetrievalHit> hits;
    for (std::size_t i = 0; i < take; ++i) {
        const auto& chunk = snap->chunks[order[i]];
        hits.push_back({chunk, std::clamp(scores[order[i]], 0.0, 1.0), scores[order[i]],
                        source_label(chunk.filename, chunk.page_number), ScoreSource::Cosine});
    }
    return hits;
}

SearchResult RagStore::search_topk(const std::string& query, std::size_t k, const llm::Gateway& gateway,
                                   bool use_reranker) const {
    if (chunk_count() == 0) throw Error(Errc::EmptyIndex, "the document index is empty");
    if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
    EmbeddingVector qv;
    try {
        qv = gateway.embed_texts({query}).front();
    } catch (const Error& e) {
        throw Error(Errc::EmbeddingFailed, std::string("embedding the query failed: ") + e.what());
    }

    SearchResult result;
    if (!use_reranker || !gateway.has(llm::ModelRole::Reranker)) {
        result.hits = search_vector(qv, k);
        return result;
    }

    auto candidates = search_vector(qv, 4 * k);
    std::vector<std::string> passages;
    for (const auto& h : candidates) passages.push_back(h.chunk.text);
    try {
        auto scores = gateway.rerank_pairs(query, passages);
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            candidates[i].raw_score = scores[i];
            candidates[i].relevance = std::clamp(scores[i], 0.0, 1.0);
            candidates[i].score_source = ScoreSource::Reranker;
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const RetrievalHit& a, const RetrievalHit& b) { return a.raw_score > b.raw_score; });
    } catch (const Error& e) {
        spdlog::warn("rag: reranker failed, keeping cosine order: {}", e.what());
        result.reranker_failed = true;
    }
    candidates.resize(std::min(k, candidates.size()));
    result.hits = std::move(candidates);
    return result;
}

std::size_t RagStore::chunk_count() const { return snapshot()->chunks.size(); }
std::size_t RagStore::dim() const { return snapshot()->dim; }
bool RagStore::has_document(const std::string& doc_id) const { return snapshot()->documents.count(doc_id) != 0; }

std::vector<std::string> RagStore::chunk_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : snapshot()->chunks) ids.push_back(c.chunk_id);
    return ids;
}

void RagStore::save(const std::filesystem::path& dir) const {
    auto snap = snapshot();
    std::string bin(kVectorMagic, sizeof kVectorMagic);
    auto put = [&bin](const void* p, std::size_t n) { bin.append(static_cast<const char*>(p), n); };
    const std::uint32_t version = kFormatVersion;
    const auto dim = static_cast<std::uint32_t>(snap->dim);
    const auto count = static_cast<std::uint64_t>(snap->chunks.size());
    put(&version, sizeof version);
    put(&dim, sizeof dim);
    put(&count, sizeof count);
    for (const auto& v : snap->vectors) put(v.values.data(), v.values.size() * sizeof(double));

    json meta{{"format", "agro-rag-index"},
              {"version", kFormatVersion},
              {"dim", snap->dim},
              {"generation", snap->generation},
              {"chunk_size", params_.chunk_size},
              {"overlap", params_.overlap},
              {"documents", snap->documents},
              {"chunks", json::array()}};
    for (const auto& c : snap->chunks) {
        meta["chunks"].push_back({{"chunk_id", c.chunk_id},
                                  {"doc_id", c.doc_id},
                                  {"filename", c.filename},
                                  {"page", c.page_number},
                                  {"start", c.start},
                                  {"end", c.end},
                                  {"text", c.text}});
    }
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "vectors.bin", bin);
    write_file_atomic(dir / "chunks.json", meta.dump(1));
}

void RagStore::load(const std::filesystem::path& dir) {
    auto bad = [](const std::string& why) { return Error(Errc::IndexFormatError, "index: " + why); };
    const auto bin = read_file(dir / "vectors.bin");
    json meta;
    try {
        meta = json::parse(read_file(dir / "chunks.json"));
    } catch (const json::parse_error& e) {
        throw bad(std::string("chunks.json is not valid JSON: ") + e.what());
    }
    if (meta.value("format", "") != "agro-rag-index" || meta.value("version", 0u) != kFormatVersion)
        throw bad("unsupported metadata format tag");

    constexpr std::size_t header = sizeof kVectorMagic + 4 + 4 + 8;
    if (bin.size() < header || std::memcmp(bin.data(), kVectorMagic, sizeof kVectorMagic) != 0)
        throw bad("vectors.bin has a bad format tag");
    std::uint32_t version = 0, dim = 0;
    std::uint64_t count = 0;
    std::memcpy(&version, bin.data() + 8, 4);
    std::memcpy(&dim, bin.data() + 12, 4);
    std::memcpy(&count, bin.data() + 16, 8);
    if (version != kFormatVersion) throw bad("unsupported vectors.bin version");
    if (bin.size() != header + count * dim * sizeof(double)) throw bad("vectors.bin length does not match header");
    const auto& chunks_json = meta.at("chunks");
    if (chunks_json.size() != count) throw bad("chunk metadata count does not match vectors");

    auto next = std::make_shared<Snapshot>();
    next->dim = dim;
    next->generation = meta.value("generation", std::size_t{0});
    next->documents = meta.at("documents").get<std::map<std::string, std::string>>();
    for (std::size_t i = 0; i < count; ++i) {
        const auto& c = chunks_json[i];
        next->chunks.push_back({c.at("chunk_id").get<std::string>(), c.at("doc_id").get<std::string>(),
                                c.at("filename").get<std::string>(), c.at("page").get<int>(),
                                c.at("start").get<std::size_t>(), c.at("end").get<std::size_t>(),
                                c.at("text").get<std::string>()});
        EmbeddingVector v;
        v.values.resize(dim);
        std::memcpy(v.values.data(), bin.data() + header + i * dim * sizeof(double), dim * sizeof(double));
        next->norms.push_back(norm_of(v));
        next->vectors.push_back(std::move(v));
    }
    std::lock_guard write(write_mu_);
    publish(std::move(next));
}

}  // namespace agro::rag
