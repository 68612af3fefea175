#pragma once
// Fixed (non-learned) late-interaction scorers over the similarity matrix
// S = Q^T D, plus the dual-encoder dot product over mean-pooled tokens.
//
// Token matrices are P x L: one column per token, P the embedding width.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lite/error.hpp"
#include "lite/tensor.hpp"

namespace lite {

/// Optional instrumentation: scorers add the number of embedding dot
/// products they evaluate. Safe to share across worker threads.
struct OpCounter {
    std::atomic<std::uint64_t> dot_products{0};

    void reset() noexcept { dot_products.store(0, std::memory_order_relaxed); }
    std::uint64_t dots() const noexcept { return dot_products.load(std::memory_order_relaxed); }
};

inline Matrix similarity_matrix(const Matrix& q_tokens, const Matrix& d_tokens,
                                OpCounter* counter = nullptr) {
    if (q_tokens.rows() != d_tokens.rows()) {
        throw ShapeError("similarity_matrix: token dimension mismatch, Q is " +
                         q_tokens.shape_str() + ", D is " + d_tokens.shape_str());
    }
    const std::size_t dim = q_tokens.rows();
    const std::size_t l1 = q_tokens.cols();
    const std::size_t l2 = d_tokens.cols();
    Matrix s(l1, l2);
    for (std::size_t p = 0; p < dim; ++p) {
        auto q_row = q_tokens.row(p);
        auto d_row = d_tokens.row(p);
        for (std::size_t i = 0; i < l1; ++i) {
            const double qi = q_row[i];
            auto s_row = s.row(i);
            for (std::size_t j = 0; j < l2; ++j) s_row[j] += qi * d_row[j];
        }
    }
    if (counter) counter->dot_products.fetch_add(l1 * l2, std::memory_order_relaxed);
    return s;
}

/// Column mean of a P x L token matrix.
inline std::vector<double> mean_pool(const Matrix& tokens) {
    std::vector<double> pooled(tokens.rows(), 0.0);
    for (std::size_t p = 0; p < tokens.rows(); ++p) {
        double acc = 0.0;
        for (double x : tokens.row(p)) acc += x;
        pooled[p] = acc / static_cast<double>(tokens.cols());
    }
    return pooled;
}

inline double de_score(std::span<const double> q_pooled, std::span<const double> d_pooled,
                       OpCounter* counter = nullptr) {
    const double s = dot(q_pooled, d_pooled);
    if (counter) counter->dot_products.fetch_add(1, std::memory_order_relaxed);
    return s;
}

/// ColBERT sum-max: sum over query tokens of the best-matching document token.
inline double colbert_score(const Matrix& s) {
    double total = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto r = s.row(i);
        total += *std::max_element(r.begin(), r.end());
    }
    return total;
}

enum class TopKAggregate { Sum, Mean };

inline double colbert_topk_score(const Matrix& s, std::size_t k,
                                 TopKAggregate agg = TopKAggregate::Sum) {
    if (k < 1 || k > s.cols()) {
        throw ContractError("colbert_topk_score: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(s.cols()) + "]");
    }
    double total = 0.0;
    std::vector<double> buf;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto r = s.row(i);
        buf.assign(r.begin(), r.end());
        std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end(),
                         std::greater<>());
        // Sum in descending order so k=1 reproduces the row max bit-for-bit.
        std::sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) row_sum += buf[j];
        total += agg == TopKAggregate::Mean ? row_sum / static_cast<double>(k) : row_sum;
    }
    return total;
}

struct KnrmParams {
    std::vector<double> mus;
    std::vector<double> sigmas;
    std::vector<double> w;

    std::size_t kernels() const noexcept { return mus.size(); }

    void validate() const {
        if (mus.empty() || mus.size() != sigmas.size() || mus.size() != w.size()) {
            throw ContractError("KnrmParams: mus/sigmas/w must share a length K >= 1");
        }
        for (double s : sigmas) {
            if (!(s > 0.0)) throw ContractError("KnrmParams: sigmas must be strictly positive");
        }
    }

    /// Eleven kernels: mu = 0.9, 0.7, ..., -0.9 with sigma 0.1, plus an exact-match
    /// kernel at mu = 1.0 with sigma 1e-3. Weights start at one.
    static KnrmParams defaults() {
        KnrmParams p;
        for (int k = 0; k < 10; ++k) {
            p.mus.push_back(0.9 - 0.2 * k);
            p.sigmas.push_back(0.1);
        }
        p.mus.push_back(1.0);
        p.sigmas.push_back(1e-3);
        p.w.assign(p.mus.size(), 1.0);
        return p;
    }
};

inline constexpr double kKnrmLogFloor = 1e-10;

/// Kernel-pooling features: phi_k = sum_i log(max(sum_j exp(-(S_ij - mu_k)^2 / (2 sigma_k^2)), floor)).
inline std::vector<double> knrm_features(const Matrix& s, const KnrmParams& params) {
    params.validate();
    std::vector<double> phi(params.kernels(), 0.0);
    // Each row is summed in sorted order so the score is bit-identical under
    // any permutation of document tokens.
    std::vector<double> row(s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto r = s.row(i);
        std::copy(r.begin(), r.end(), row.begin());
        std::sort(row.begin(), row.end());
        for (std::size_t k = 0; k < params.kernels(); ++k) {
            const double mu = params.mus[k];
            const double two_sigma_sq = 2.0 * params.sigmas[k] * params.sigmas[k];
            double soft_tf = 0.0;
            for (double x : row) soft_tf += std::exp(-(x - mu) * (x - mu) / two_sigma_sq);
            phi[k] += std::log(std::max(soft_tf, kKnrmLogFloor));
        }
    }
    return phi;
}

inline double knrm_score(const Matrix& s, const KnrmParams& params) {
    return dot(knrm_features(s, params), params.w);
}

enum class ScorerType { DE, ColBERT, ColBERTTopK, KNRM, FlatLITE, SepLITE };

struct ScorerKind {
    ScorerType type = ScorerType::ColBERT;
    std::size_t k = 1;  // ColBERTTopK only
    TopKAggregate topk_agg = TopKAggregate::Sum;

    static ScorerKind de() { return {ScorerType::DE}; }
    static ScorerKind colbert() { return {ScorerType::ColBERT}; }
    static ScorerKind topk(std::size_t k, TopKAggregate agg = TopKAggregate::Sum) {
        if (k < 1) throw ContractError("ScorerKind: top-k requires k >= 1");
        return {ScorerType::ColBERTTopK, k, agg};
    }
    static ScorerKind knrm() { return {ScorerType::KNRM}; }
    static ScorerKind flat_lite() { return {ScorerType::FlatLITE}; }
    static ScorerKind sep_lite() { return {ScorerType::SepLITE}; }

    bool needs_head() const noexcept {
        return type == ScorerType::KNRM || type == ScorerType::FlatLITE ||
               type == ScorerType::SepLITE;
    }
    bool late_interaction() const noexcept { return type != ScorerType::DE; }

    /// Accepts de, colbert, topk:K, topk-mean:K, knrm, flat, sep.
    static ScorerKind parse(const std::string& name) {
        if (name == "de") return de();
        if (name == "colbert") return colbert();
        if (name == "knrm") return knrm();
        if (name == "flat" || name == "flat-lite") return flat_lite();
        if (name == "sep" || name == "sep-lite") return sep_lite();
        for (auto [prefix, agg] : {std::pair{"topk:", TopKAggregate::Sum},
                                   std::pair{"topk-mean:", TopKAggregate::Mean}}) {
            const std::string pre = prefix;
            if (name.rfind(pre, 0) == 0) {
                try {
                    const long k = std::stol(name.substr(pre.size()));
                    if (k >= 1) return topk(static_cast<std::size_t>(k), agg);
                } catch (const std::exception&) {
                }
                throw ContractError("invalid top-k scorer '" + name + "'");
            }
        }
        throw ContractError("unknown scorer '" + name + "'");
    }

    std::string name() const {
        switch (type) {
            case ScorerType::DE: return "de";
            case ScorerType::ColBERT: return "colbert";
            case ScorerType::ColBERTTopK:
                return (topk_agg == TopKAggregate::Mean ? "topk-mean:" : "topk:") +
                       std::to_string(k);
            case ScorerType::KNRM: return "knrm";
            case ScorerType::FlatLITE: return "flat";
            case ScorerType::SepLITE: return "sep";
        }
        return "?";
    }
};

}  // namespace lite
