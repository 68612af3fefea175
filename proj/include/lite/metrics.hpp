#pragma once
// Re-ranking metrics. Candidates are ordered by score descending with a
// stable sort, so ties keep their input order.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "lite/error.hpp"

namespace lite {

inline constexpr std::size_t kMetricCutoff = 10;

/// Candidate positions sorted by descending score; ties keep input order.
inline std::vector<std::size_t> rank_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

/// One query's candidates: scores, graded relevance (0 = irrelevant), and
/// optionally the full judged relevance list used for the ideal DCG. When
/// `judged` is empty the candidates' own grades define the ideal.
struct QueryRanking {
    std::vector<double> scores;
    std::vector<double> relevance;
    std::vector<double> judged;

    std::vector<double> ranked_relevance() const {
        if (scores.size() != relevance.size()) {
            throw ShapeError("QueryRanking: " + std::to_string(scores.size()) + " scores but " +
                             std::to_string(relevance.size()) + " relevance labels");
        }
        std::vector<double> ranked;
        ranked.reserve(scores.size());
        for (auto idx : rank_order(scores)) ranked.push_back(relevance[idx]);
        return ranked;
    }
};

inline double reciprocal_rank(std::span<const double> ranked_relevance,
                              std::size_t cutoff = kMetricCutoff) {
    const std::size_t n = std::min(cutoff, ranked_relevance.size());
    for (std::size_t r = 0; r < n; ++r) {
        if (ranked_relevance[r] > 0.0) return 1.0 / static_cast<double>(r + 1);
    }
    return 0.0;
}

inline double dcg(std::span<const double> ranked_relevance, std::size_t cutoff = kMetricCutoff) {
    const std::size_t n = std::min(cutoff, ranked_relevance.size());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double rel = ranked_relevance[r];
        if (rel < 0.0) throw ContractError("dcg: negative relevance grade");
        total += (std::exp2(rel) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    }
    return total;
}

/// DCG normalized by the DCG of `ideal` sorted descending; 0 when the ideal is 0.
inline double ndcg(std::span<const double> ranked_relevance, std::span<const double> ideal,
                   std::size_t cutoff = kMetricCutoff) {
    std::vector<double> best(ideal.begin(), ideal.end());
    std::sort(best.begin(), best.end(), std::greater<>());
    const double idcg = dcg(best, cutoff);
    if (idcg <= 0.0) return 0.0;
    return dcg(ranked_relevance, cutoff) / idcg;
}

inline double mrr_at_10(std::span<const QueryRanking> queries) {
    if (queries.empty()) throw ContractError("mrr_at_10: empty query set");
    double total = 0.0;
    for (const auto& q : queries) {
        if (q.scores.empty()) throw ContractError("mrr_at_10: query without candidates");
        total += reciprocal_rank(q.ranked_relevance());
    }
    return total / static_cast<double>(queries.size());
}

inline double ndcg_at_10(std::span<const QueryRanking> queries) {
    if (queries.empty()) throw ContractError("ndcg_at_10: empty query set");
    double total = 0.0;
    for (const auto& q : queries) {
        const auto ranked = q.ranked_relevance();
        total += ndcg(ranked, q.judged.empty() ? std::span<const double>(q.relevance)
                                               : std::span<const double>(q.judged));
    }
    return total / static_cast<double>(queries.size());
}

}  // namespace lite
