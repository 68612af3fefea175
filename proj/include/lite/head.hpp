#pragma once
// Uniform scorer dispatch plus the head checkpoint format.
//
// Checkpoint layout (little-endian):
//   "LITEHEAD"  u32 version  u8 kind-tag  <dims>  <tensors as f64, row-major, declaration order>
//   KNRM:       u32 K                                  mus, sigmas, w
//   FlatLITE:   u32 L1, u32 L2, u32 m                  W, b, a
//   SepLITE:    u32 L1, u32 L2, u32 m1, u32 m2, f64 eps  W1, b1, W2, b2, W3, b3, W4, b4, w
//   Projection: u32 rows, u32 cols, u8 side            matrix

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "lite/binary_io.hpp"
#include "lite/error.hpp"
#include "lite/nn.hpp"
#include "lite/scorers.hpp"
#include "lite/tensor.hpp"

namespace lite {

using Head = std::variant<std::monostate, KnrmParams, FlatLiteParams, SepLiteParams>;

inline constexpr std::string_view kHeadMagic = "LITEHEAD";
inline constexpr std::uint32_t kHeadVersion = 1;

enum class HeadTag : std::uint8_t { Knrm = 1, FlatLite = 2, SepLite = 3, Projection = 4 };

/// Which axis a stored projection reduces.
enum class ProjectionSide : std::uint8_t {
    Tokens = 0,  // L2 x L2', right-multiplied onto D
    Dims = 1,    // P' x P, left-multiplied onto D
};

struct Projection {
    ProjectionSide side = ProjectionSide::Tokens;
    Matrix matrix;
};

namespace detail {

inline bin::Writer head_preamble(HeadTag tag) {
    bin::Writer w;
    w.bytes(kHeadMagic);
    w.u32(kHeadVersion);
    w.u8(static_cast<std::uint8_t>(tag));
    return w;
}

inline HeadTag read_head_preamble(bin::Reader& r) {
    if (r.bytes(kHeadMagic.size()) != kHeadMagic) throw FormatError("checkpoint: bad magic");
    const auto version = r.u32();
    if (version != kHeadVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto tag = r.u8();
    if (tag < 1 || tag > 4) throw FormatError("checkpoint: unknown kind tag " + std::to_string(tag));
    return static_cast<HeadTag>(tag);
}

inline std::uint32_t read_dim(bin::Reader& r, const char* what) {
    const auto v = r.u32();
    if (v == 0 || v > (1u << 24)) {
        throw FormatError(std::string("checkpoint: implausible dimension ") + what + "=" +
                          std::to_string(v));
    }
    return v;
}

inline void expect_end(const bin::Reader& r) {
    if (r.remaining() != 0) {
        throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
    }
}

}  // namespace detail

inline std::string serialize_head(const Head& head) {
    return std::visit(
        [](const auto& h) -> std::string {
            using T = std::decay_t<decltype(h)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                throw ContractError("serialize_head: no head to save");
            } else if constexpr (std::is_same_v<T, KnrmParams>) {
                h.validate();
                auto w = detail::head_preamble(HeadTag::Knrm);
                w.u32(static_cast<std::uint32_t>(h.kernels()));
                w.f64s(h.mus);
                w.f64s(h.sigmas);
                w.f64s(h.w);
                return w.buffer();
            } else if constexpr (std::is_same_v<T, FlatLiteParams>) {
                h.validate();
                auto w = detail::head_preamble(HeadTag::FlatLite);
                w.u32(static_cast<std::uint32_t>(h.l1));
                w.u32(static_cast<std::uint32_t>(h.l2));
                w.u32(static_cast<std::uint32_t>(h.hidden()));
                for (auto t : h.tensors()) w.f64s(t);
                return w.buffer();
            } else {
                h.validate();
                auto w = detail::head_preamble(HeadTag::SepLite);
                w.u32(static_cast<std::uint32_t>(h.dims.l1));
                w.u32(static_cast<std::uint32_t>(h.dims.l2));
                w.u32(static_cast<std::uint32_t>(h.dims.m1));
                w.u32(static_cast<std::uint32_t>(h.dims.m2));
                w.f64(h.eps);
                for (auto t : h.tensors()) w.f64s(t);
                return w.buffer();
            }
        },
        head);
}

inline Head deserialize_head(std::span<const char> bytes) {
    bin::Reader r(bytes, "checkpoint");
    const auto tag = detail::read_head_preamble(r);
    switch (tag) {
        case HeadTag::Knrm: {
            const auto k = detail::read_dim(r, "K");
            KnrmParams p;
            p.mus.resize(k);
            p.sigmas.resize(k);
            p.w.resize(k);
            r.f64s(p.mus);
            r.f64s(p.sigmas);
            r.f64s(p.w);
            detail::expect_end(r);
            try {
                p.validate();
            } catch (const ContractError& e) {
                throw FormatError(std::string("checkpoint: ") + e.what());
            }
            return p;
        }
        case HeadTag::FlatLite: {
            const auto l1 = detail::read_dim(r, "L1");
            const auto l2 = detail::read_dim(r, "L2");
            const auto m = detail::read_dim(r, "m");
            auto p = FlatLiteParams::zeros(l1, l2, m);
            for (auto t : p.tensors()) r.f64s(t);
            detail::expect_end(r);
            return p;
        }
        case HeadTag::SepLite: {
            SepLiteDims d;
            d.l1 = detail::read_dim(r, "L1");
            d.l2 = detail::read_dim(r, "L2");
            d.m1 = detail::read_dim(r, "m1");
            d.m2 = detail::read_dim(r, "m2");
            const double eps = r.f64();
            auto p = SepLiteParams::zeros(d, eps);
            for (auto t : p.tensors()) r.f64s(t);
            detail::expect_end(r);
            return p;
        }
        case HeadTag::Projection:
            throw FormatError("checkpoint: holds a projection, not a scorer head");
    }
    throw FormatError("checkpoint: unreachable kind tag");
}

inline void save_head(const Head& head, const std::filesystem::path& path) {
    bin::write_file(path, serialize_head(head));
}

inline Head load_head(const std::filesystem::path& path) {
    return deserialize_head(bin::read_file(path));
}

inline std::string serialize_projection(const Projection& proj) {
    auto w = detail::head_preamble(HeadTag::Projection);
    w.u32(static_cast<std::uint32_t>(proj.matrix.rows()));
    w.u32(static_cast<std::uint32_t>(proj.matrix.cols()));
    w.u8(static_cast<std::uint8_t>(proj.side));
    w.f64s(proj.matrix.data());
    return w.buffer();
}

inline Projection deserialize_projection(std::span<const char> bytes) {
    bin::Reader r(bytes, "projection checkpoint");
    if (detail::read_head_preamble(r) != HeadTag::Projection) {
        throw FormatError("checkpoint: expected a projection");
    }
    const auto rows = detail::read_dim(r, "rows");
    const auto cols = detail::read_dim(r, "cols");
    const auto side = r.u8();
    if (side > 1) throw FormatError("checkpoint: bad projection side " + std::to_string(side));
    Projection p{static_cast<ProjectionSide>(side), Matrix(rows, cols)};
    r.f64s(p.matrix.data());
    detail::expect_end(r);
    return p;
}

inline void save_projection(const Projection& proj, const std::filesystem::path& path) {
    bin::write_file(path, serialize_projection(proj));
}

inline Projection load_projection(const std::filesystem::path& path) {
    return deserialize_projection(bin::read_file(path));
}

// ---------------------------------------------------------------------------
// Dispatch

/// Scores a similarity matrix with any late-interaction scorer.
inline double score_similarity(const ScorerKind& kind, const Matrix& s, const Head& head) {
    switch (kind.type) {
        case ScorerType::DE:
            throw ContractError("score_similarity: DE does not score a similarity matrix");
        case ScorerType::ColBERT: return colbert_score(s);
        case ScorerType::ColBERTTopK: return colbert_topk_score(s, kind.k, kind.topk_agg);
        case ScorerType::KNRM:
            if (const auto* p = std::get_if<KnrmParams>(&head)) return knrm_score(s, *p);
            break;
        case ScorerType::FlatLITE:
            if (const auto* p = std::get_if<FlatLiteParams>(&head)) return flat_lite_score(s, *p);
            break;
        case ScorerType::SepLITE:
            if (const auto* p = std::get_if<SepLiteParams>(&head)) return sep_lite_score(s, *p);
            break;
    }
    throw ContractError("scorer '" + kind.name() + "' requires matching head parameters");
}

/// Scores token matrices Q (P x L1) and D (P x L2). DE mean-pools both sides.
inline double score(const ScorerKind& kind, const Matrix& q_tokens, const Matrix& d_tokens,
                    const Head& head = {}, OpCounter* counter = nullptr) {
    if (kind.type == ScorerType::DE) {
        if (q_tokens.rows() != d_tokens.rows()) {
            throw ShapeError("score: token dimension mismatch, Q is " + q_tokens.shape_str() +
                             ", D is " + d_tokens.shape_str());
        }
        return de_score(mean_pool(q_tokens), mean_pool(d_tokens), counter);
    }
    if (kind.needs_head() && std::holds_alternative<std::monostate>(head)) {
        throw ContractError("scorer '" + kind.name() + "' requires head parameters");
    }
    return score_similarity(kind, similarity_matrix(q_tokens, d_tokens, counter), head);
}

struct HeadDims {
    std::size_t l1 = 30;
    std::size_t l2 = 200;
    std::size_t m1 = 360;   // SepLITE column MLP width; FlatLITE hidden width
    std::size_t m2 = 2400;  // SepLITE row MLP width
};

/// Fresh parameters for a trainable scorer; weights ~ U(+-1/sqrt(fan_in)), biases zero.
inline Head init_head(const ScorerKind& kind, const HeadDims& dims, std::uint64_t seed) {
    switch (kind.type) {
        case ScorerType::KNRM: return init_knrm(seed);
        case ScorerType::FlatLITE: return FlatLiteParams::init(dims.l1, dims.l2, dims.m1, seed);
        case ScorerType::SepLITE:
            return SepLiteParams::init({dims.l1, dims.l2, dims.m1, dims.m2}, seed);
        default: return std::monostate{};
    }
}

/// Multiply-add and elementwise operation count of the head on an L1 x L2 matrix,
/// excluding the L1*L2 embedding dot products that form S.
///   sep:  2(m2*L2 + L2*m2)*L1 + 2(m1*L1 + L1*m1)*L2 + 2*L1*L2      (matmuls + projection)
///         + L1*(7*m2 + 7*L2) + L2*(7*m1 + 7*L1)                    (bias, ReLU, two-pass LN)
///   flat: 2*m*L1*L2 + 4*m
///   knrm: K*L1*(5*L2 + 1) + 2*K
///   colbert / top-k: L1*L2 comparisons or adds; de: 0
inline std::uint64_t head_flops(const ScorerKind& kind, const Head& head, std::size_t l1,
                                std::size_t l2) {
    using u = std::uint64_t;
    switch (kind.type) {
        case ScorerType::DE: return 0;
        case ScorerType::ColBERT:
        case ScorerType::ColBERTTopK: return u(l1) * l2;
        case ScorerType::KNRM: {
            const auto* p = std::get_if<KnrmParams>(&head);
            const u k = p ? p->kernels() : 11;
            return k * l1 * (5 * u(l2) + 1) + 2 * k;
        }
        case ScorerType::FlatLITE: {
            const auto* p = std::get_if<FlatLiteParams>(&head);
            const u m = p ? p->hidden() : 0;
            return 2 * m * l1 * l2 + 4 * m;
        }
        case ScorerType::SepLITE: {
            const auto* p = std::get_if<SepLiteParams>(&head);
            if (!p) return 0;
            const u m1 = p->dims.m1, m2 = p->dims.m2;
            const u matmuls = 2 * (m2 * l2 + l2 * m2) * l1 + 2 * (m1 * l1 + l1 * m1) * l2 +
                              2 * u(l1) * l2;
            const u elementwise = u(l1) * (7 * m2 + 7 * u(l2)) + u(l2) * (7 * m1 + 7 * u(l1));
            return matmuls + elementwise;
        }
    }
    return 0;
}

}  // namespace lite
