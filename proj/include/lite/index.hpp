#pragma once
// Pre-computed document token-embedding index.
//
// File layout (little-endian):
//   "LITEIDX1"  u32 version=1  u32 P'  u32 L2'  u64 doc_count        (28-byte header)
//   doc_count x [ u64 doc_id | f32 x (P' * L2'), row-major ]          (sorted by doc_id)
//
// Records are fixed-size and sorted, so the record array doubles as the id
// table: lookup is a binary search followed by an O(1) offset computation.
// Query and raw-document embedding files use the same layout.
//
// Projections used while building are saved next to the index as head
// checkpoints (<index>.tokproj, <index>.dimproj) so queries can be reduced
// the same way.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lite/binary_io.hpp"
#include "lite/error.hpp"
#include "lite/head.hpp"
#include "lite/tensor.hpp"

namespace lite {

inline constexpr std::string_view kIndexMagic = "LITEIDX1";
inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::uint64_t kIndexHeaderBytes = 28;

struct IndexHeader {
    std::uint32_t version = kIndexVersion;
    std::uint32_t token_dim = 1;       // P'
    std::uint32_t tokens_per_doc = 1;  // L2'
    std::uint64_t doc_count = 0;
    static constexpr std::uint32_t float_bits = 32;

    std::uint64_t embedding_bytes() const noexcept {
        return 4ull * token_dim * tokens_per_doc;
    }
    std::uint64_t record_bytes() const noexcept { return 8 + embedding_bytes(); }

    friend bool operator==(const IndexHeader&, const IndexHeader&) = default;
};

/// Total file size: header plus fixed-size records.
inline std::uint64_t storage_bytes(const IndexHeader& h) {
    return kIndexHeaderBytes + h.doc_count * h.record_bytes();
}

/// Embedding bytes only (no header, no ids).
inline std::uint64_t payload_bytes(const IndexHeader& h) { return h.doc_count * h.embedding_bytes(); }

// ---------------------------------------------------------------------------
// Reductions

inline Matrix avg_pool_tokens(const Matrix& d, std::size_t factor) {
    if (factor < 1 || factor > d.cols() || d.cols() % factor != 0) {
        throw ContractError("avg_pool_tokens: factor " + std::to_string(factor) +
                            " does not divide token count " + std::to_string(d.cols()));
    }
    const std::size_t out_cols = d.cols() / factor;
    Matrix out(d.rows(), out_cols);
    for (std::size_t p = 0; p < d.rows(); ++p) {
        auto in = d.row(p);
        for (std::size_t j = 0; j < out_cols; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < factor; ++t) acc += in[j * factor + t];
            out(p, j) = acc / static_cast<double>(factor);
        }
    }
    return out;
}

/// D (P x L2) times proj (L2 x L2'): a learned linear map over each embedding row.
inline Matrix project_tokens(const Matrix& d, const Matrix& proj) {
    if (proj.rows() != d.cols()) {
        throw ShapeError("project_tokens: D is " + d.shape_str() + ", projection is " +
                         proj.shape_str());
    }
    return matmul(d, proj);
}

/// proj (P' x P) times D (P x L): shrinks every token's embedding width.
inline Matrix project_dims(const Matrix& d, const Matrix& proj) {
    if (proj.cols() != d.rows()) {
        throw ShapeError("project_dims: D is " + d.shape_str() + ", projection is " +
                         proj.shape_str());
    }
    return matmul(proj, d);
}

struct ReductionSpec {
    std::size_t avg_pool = 1;  // 1 = off
    std::optional<Matrix> token_proj;
    std::optional<Matrix> dim_proj;

    static ReductionSpec none() { return {}; }
    static ReductionSpec pool(std::size_t factor) { return {factor, {}, {}}; }

    bool is_identity() const { return avg_pool == 1 && !token_proj && !dim_proj; }

    void validate() const {
        if (avg_pool < 1) throw ContractError("ReductionSpec: pooling factor must be >= 1");
        if (avg_pool > 1 && (token_proj || dim_proj)) {
            throw ContractError("ReductionSpec: average pooling cannot be combined with projections");
        }
    }

    Matrix apply(const Matrix& d) const {
        validate();
        if (avg_pool > 1) return avg_pool_tokens(d, avg_pool);
        Matrix out = d;
        if (token_proj) out = project_tokens(out, *token_proj);
        if (dim_proj) out = project_dims(out, *dim_proj);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Build

struct IndexedDoc {
    std::uint64_t id = 0;
    Matrix tokens;  // P x L, one column per token
};

namespace detail {

inline std::filesystem::path sidecar(const std::filesystem::path& index, const char* ext) {
    auto p = index;
    p += ext;
    return p;
}

inline void write_record(bin::Writer& w, std::uint64_t id, const Matrix& m) {
    w.u64(id);
    for (double x : m.data()) w.f32(static_cast<float>(x));
}

}  // namespace detail

/// Reduces every document, checks the reduced shapes agree and writes the
/// index sorted by id. Output bytes depend only on the inputs. With zero
/// documents the header dims come from `empty_shape` (default 1x1).
inline IndexHeader build_index(std::span<const IndexedDoc> docs,
                               const ReductionSpec& reduction,
                               const std::filesystem::path& path,
                               std::pair<std::uint32_t, std::uint32_t> empty_shape = {1, 1}) {
    reduction.validate();
    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return docs[a].id < docs[b].id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (docs[order[i]].id == docs[order[i - 1]].id) {
            throw ContractError("build_index: duplicate doc_id " +
                                std::to_string(docs[order[i]].id));
        }
    }

    IndexHeader header;
    header.doc_count = docs.size();
    header.token_dim = empty_shape.first;
    header.tokens_per_doc = empty_shape.second;

    std::vector<Matrix> reduced;
    reduced.reserve(docs.size());
    for (std::size_t i : order) {
        reduced.push_back(reduction.is_identity() ? docs[i].tokens : reduction.apply(docs[i].tokens));
        const auto& m = reduced.back();
        if (reduced.size() == 1) {
            header.token_dim = static_cast<std::uint32_t>(m.rows());
            header.tokens_per_doc = static_cast<std::uint32_t>(m.cols());
        } else if (m.rows() != header.token_dim || m.cols() != header.tokens_per_doc) {
            throw ShapeError("build_index: doc " + std::to_string(docs[i].id) + " reduces to " +
                             m.shape_str() + " but earlier docs are " +
                             std::to_string(header.token_dim) + "x" +
                             std::to_string(header.tokens_per_doc));
        }
    }
    if (header.token_dim < 1 || header.tokens_per_doc < 1) {
        throw ContractError("build_index: token_dim and tokens_per_doc must be >= 1");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("build_index: cannot open '" + path.string() + "' for writing");
    bin::Writer w;
    w.bytes(kIndexMagic);
    w.u32(header.version);
    w.u32(header.token_dim);
    w.u32(header.tokens_per_doc);
    w.u64(header.doc_count);
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
    for (std::size_t k = 0; k < reduced.size(); ++k) {
        bin::Writer rec;
        detail::write_record(rec, docs[order[k]].id, reduced[k]);
        out.write(rec.buffer().data(), static_cast<std::streamsize>(rec.size()));
    }
    out.close();
    if (!out) throw IoError("build_index: write failed for '" + path.string() + "'");

    const auto tok = detail::sidecar(path, ".tokproj");
    const auto dim = detail::sidecar(path, ".dimproj");
    std::filesystem::remove(tok);
    std::filesystem::remove(dim);
    if (reduction.token_proj) save_projection({ProjectionSide::Tokens, *reduction.token_proj}, tok);
    if (reduction.dim_proj) save_projection({ProjectionSide::Dims, *reduction.dim_proj}, dim);
    return header;
}

/// Writes an unreduced embeddings file (queries or raw documents).
inline IndexHeader write_embeddings(std::span<const IndexedDoc> docs,
                                    const std::filesystem::path& path) {
    return build_index(docs, ReductionSpec::none(), path);
}

// ---------------------------------------------------------------------------
// Read

/// Immutable in-memory view of an index file; safe for concurrent readers.
class DocumentIndex {
public:
    static DocumentIndex open(const std::filesystem::path& path) {
        DocumentIndex idx(bin::read_file(path), path.string());
        const auto tok = detail::sidecar(path, ".tokproj");
        const auto dim = detail::sidecar(path, ".dimproj");
        if (std::filesystem::exists(tok)) idx.token_proj_ = load_projection(tok).matrix;
        if (std::filesystem::exists(dim)) idx.dim_proj_ = load_projection(dim).matrix;
        return idx;
    }

    static DocumentIndex from_bytes(std::vector<char> bytes, std::string name = "index") {
        return DocumentIndex(std::move(bytes), std::move(name));
    }

    const IndexHeader& header() const noexcept { return header_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::uint64_t>& doc_ids() const noexcept { return ids_; }

    std::optional<std::size_t> position(std::uint64_t id) const {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
        if (it == ids_.end() || *it != id) return std::nullopt;
        return static_cast<std::size_t>(it - ids_.begin());
    }

    bool contains(std::uint64_t id) const { return position(id).has_value(); }

    Matrix load_at(std::size_t pos) const {
        if (pos >= ids_.size()) throw NotFoundError("index " + name_ + ": record out of range");
        bin::Reader r(bytes_, name_);
        r.seek(kIndexHeaderBytes + pos * header_.record_bytes() + 8);
        Matrix m(header_.token_dim, header_.tokens_per_doc);
        for (double& x : m.data()) x = static_cast<double>(r.f32());
        return m;
    }

    Matrix load_doc(std::uint64_t id) const {
        const auto pos = position(id);
        if (!pos) throw NotFoundError("index " + name_ + ": doc_id " + std::to_string(id) + " not found");
        return load_at(*pos);
    }

    const std::optional<Matrix>& token_projection() const noexcept { return token_proj_; }
    const std::optional<Matrix>& dim_projection() const noexcept { return dim_proj_; }

    /// Applies the index's stored dim projection (if any) to query tokens.
    Matrix reduce_query(const Matrix& q) const {
        return dim_proj_ ? project_dims(q, *dim_proj_) : q;
    }

private:
    DocumentIndex(std::vector<char> bytes, std::string name)
        : bytes_(std::move(bytes)), name_(std::move(name)) {
        bin::Reader r(bytes_, name_);
        if (r.bytes(kIndexMagic.size()) != kIndexMagic) throw FormatError(name_ + ": bad magic");
        header_.version = r.u32();
        if (header_.version != kIndexVersion) {
            throw FormatError(name_ + ": unsupported version " + std::to_string(header_.version));
        }
        header_.token_dim = r.u32();
        header_.tokens_per_doc = r.u32();
        header_.doc_count = r.u64();
        if (header_.token_dim == 0 || header_.tokens_per_doc == 0) {
            throw FormatError(name_ + ": zero token dimension or token count");
        }
        const auto expected = storage_bytes(header_);
        if (bytes_.size() != expected) {
            throw FormatError(name_ + ": size " + std::to_string(bytes_.size()) + " bytes, header implies " +
                              std::to_string(expected) + " (truncated or corrupt)");
        }
        ids_.reserve(header_.doc_count);
        for (std::uint64_t k = 0; k < header_.doc_count; ++k) {
            r.seek(kIndexHeaderBytes + k * header_.record_bytes());
            const auto id = r.u64();
            if (!ids_.empty() && id <= ids_.back()) {
                throw FormatError(name_ + ": records not strictly sorted by doc_id");
            }
            ids_.push_back(id);
        }
    }

    std::vector<char> bytes_;
    std::string name_;
    IndexHeader header_;
    std::vector<std::uint64_t> ids_;
    std::optional<Matrix> token_proj_;
    std::optional<Matrix> dim_proj_;
};

inline std::vector<IndexedDoc> read_embeddings(const std::filesystem::path& path) {
    const auto idx = DocumentIndex::open(path);
    std::vector<IndexedDoc> out;
    out.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out.push_back({idx.doc_ids()[k], idx.load_at(k)});
    return out;
}

}  // namespace lite
