#pragma once
// Re-ranking pipeline: score K candidates for a query against the index,
// write/read run files, evaluate against qrels, and benchmark scorers.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lite/error.hpp"
#include "lite/head.hpp"
#include "lite/index.hpp"
#include "lite/metrics.hpp"
#include "lite/scorers.hpp"
#include "lite/tensor.hpp"
#include "lite/train.hpp"

namespace lite {

struct RerankRequest {
    std::uint64_t query_id = 0;
    Matrix query;                        // P x L1 query tokens
    std::vector<std::uint64_t> candidates;
};

struct RankedDoc {
    std::uint64_t doc_id = 0;
    double score = 0.0;

    friend bool operator==(const RankedDoc&, const RankedDoc&) = default;
};

/// Sorts by descending score; equal scores keep candidate order.
inline std::vector<RankedDoc> sort_ranked(std::vector<RankedDoc> docs) {
    std::stable_sort(docs.begin(), docs.end(),
                     [](const RankedDoc& a, const RankedDoc& b) { return a.score > b.score; });
    return docs;
}

/// Scores every candidate and returns them best-first. Scoring fans out over
/// `workers` threads; results are merged in candidate order before the stable
/// sort, so output does not depend on the worker count.
inline std::vector<RankedDoc> rerank(const RerankRequest& req, const DocumentIndex& index,
                                     const ScorerKind& kind, const Head& head = {},
                                     std::size_t workers = 1, OpCounter* counter = nullptr) {
    if (req.candidates.empty()) throw ContractError("rerank: request has no candidates");
    std::vector<std::size_t> positions;
    positions.reserve(req.candidates.size());
    for (auto id : req.candidates) {
        const auto pos = index.position(id);
        if (!pos) {
            throw NotFoundError("rerank: query " + std::to_string(req.query_id) +
                                " candidate doc_id " + std::to_string(id) + " not in index");
        }
        positions.push_back(*pos);
    }
    const Matrix q = index.reduce_query(req.query);
    if (kind.needs_head() && std::holds_alternative<std::monostate>(head)) {
        throw ContractError("rerank: scorer '" + kind.name() + "' requires a head checkpoint");
    }

    std::vector<RankedDoc> out(req.candidates.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            out[k] = {req.candidates[k], score(kind, q, index.load_at(positions[k]), head, counter)};
        }
    };

    const std::size_t n = out.size();
    const std::size_t threads = std::clamp<std::size_t>(workers, 1, n);
    if (threads == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        const std::size_t chunk = (n + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(n, b + chunk);
            pool.emplace_back([&, t, b, e] {
                try {
                    work(b, e);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }
    return sort_ranked(std::move(out));
}

// ---------------------------------------------------------------------------
// Text formats

struct RunEntry {
    std::string query_id;
    std::string doc_id;
    std::size_t rank = 0;
    double score = 0.0;
};

/// query_id TAB doc_id TAB rank TAB score, one line per candidate.
inline void write_run(std::ostream& out, std::span<const RunEntry> entries) {
    for (const auto& e : entries) {
        out << e.query_id << '\t' << e.doc_id << '\t' << e.rank << '\t'
            << std::setprecision(17) << e.score << '\n';
    }
}

inline std::vector<RunEntry> parse_run(std::istream& in, const std::string& name = "run") {
    std::vector<RunEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto where = name + ":" + std::to_string(lineno);
        const auto f = detail::split(line, '\t');
        if (f.size() != 4) throw FormatError(where + ": expected 4 tab-separated fields");
        out.push_back({f[0], f[1], static_cast<std::size_t>(detail::parse_id(f[2], where)),
                       detail::parse_double(f[3], where)});
    }
    return out;
}

/// query_id -> doc_id -> graded relevance.
using Qrels = std::map<std::string, std::map<std::string, double>>;

/// query_id TAB doc_id TAB relevance.
inline Qrels parse_qrels(std::istream& in, const std::string& name = "qrels") {
    Qrels out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto where = name + ":" + std::to_string(lineno);
        const auto f = detail::split(line, '\t');
        if (f.size() != 3) throw FormatError(where + ": expected 3 tab-separated fields");
        const double rel = detail::parse_double(f[2], where);
        if (rel < 0.0) throw FormatError(where + ": negative relevance");
        out[f[0]][f[1]] = rel;
    }
    return out;
}

/// query_id TAB doc_id, one candidate per line, order preserved within a query.
inline std::vector<std::pair<std::uint64_t, std::vector<std::uint64_t>>> parse_candidates(
    std::istream& in, const std::string& name = "candidates") {
    std::vector<std::pair<std::uint64_t, std::vector<std::uint64_t>>> out;
    std::map<std::uint64_t, std::size_t> slot;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto where = name + ":" + std::to_string(lineno);
        const auto f = detail::split(line, '\t');
        if (f.size() != 2) throw FormatError(where + ": expected query_id TAB doc_id");
        const auto q = detail::parse_id(f[0], where);
        const auto d = detail::parse_id(f[1], where);
        auto [it, fresh] = slot.try_emplace(q, out.size());
        if (fresh) out.push_back({q, {}});
        out[it->second].second.push_back(d);
    }
    return out;
}

template <typename Parse>
auto read_text(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return parse(in, path.filename().string());
}

// ---------------------------------------------------------------------------
// Evaluation

struct QueryMetrics {
    std::string query_id;
    double mrr10 = 0.0;
    double ndcg10 = 0.0;
};

struct EvalReport {
    std::vector<QueryMetrics> per_query;  // sorted by query_id
    double mrr10 = 0.0;
    double ndcg10 = 0.0;
};

/// Orders each query's entries by rank and scores them against qrels.
/// Unjudged documents count as irrelevant; the ideal DCG uses all judgments.
inline EvalReport evaluate(std::span<const RunEntry> run, const Qrels& qrels) {
    std::map<std::string, std::vector<const RunEntry*>> by_query;
    for (const auto& e : run) by_query[e.query_id].push_back(&e);
    if (by_query.empty()) throw ContractError("evaluate: empty run");

    std::vector<std::string> missing;
    for (const auto& [qid, _] : by_query)
        if (!qrels.count(qid)) missing.push_back(qid);
    if (!missing.empty()) {
        std::string msg = "evaluate: no qrels for query_ids:";
        for (const auto& q : missing) msg += " " + q;
        throw ContractError(msg);
    }

    EvalReport rep;
    for (auto& [qid, entries] : by_query) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
        const auto& judged = qrels.at(qid);
        std::vector<double> ranked;
        for (const auto* e : entries) {
            auto it = judged.find(e->doc_id);
            ranked.push_back(it == judged.end() ? 0.0 : it->second);
        }
        std::vector<double> ideal;
        for (const auto& [_, rel] : judged) ideal.push_back(rel);
        rep.per_query.push_back({qid, reciprocal_rank(ranked), ndcg(ranked, ideal)});
        rep.mrr10 += rep.per_query.back().mrr10;
        rep.ndcg10 += rep.per_query.back().ndcg10;
    }
    rep.mrr10 /= static_cast<double>(rep.per_query.size());
    rep.ndcg10 /= static_cast<double>(rep.per_query.size());
    return rep;
}

inline std::string format_eval(const EvalReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    for (const auto& q : rep.per_query) {
        os << q.query_id << "\tMRR@10\t" << q.mrr10 << "\tnDCG@10\t" << q.ndcg10 << "\n";
    }
    os << "all\tMRR@10\t" << rep.mrr10 << "\tnDCG@10\t" << rep.ndcg10 << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchConfig {
    ScorerKind kind;
    Head head;
};

struct BenchReport {
    std::string scorer;
    std::size_t candidates = 0;  // K
    std::size_t query_tokens = 0;  // L1
    std::size_t doc_tokens = 0;    // L2'
    double median_ms_per_query = 0.0;
    std::uint64_t dot_products = 0;           // analytic, per query
    std::uint64_t dot_products_measured = 0;  // instrumented, per query
    std::uint64_t mlp_flops = 0;              // per query, excluding dot products
    std::uint64_t index_payload_bytes = 0;
};

inline std::uint64_t analytic_dot_products(const ScorerKind& kind, std::size_t k, std::size_t l1,
                                           std::size_t l2) {
    return kind.late_interaction() ? std::uint64_t{k} * l1 * l2 : std::uint64_t{k};
}

struct BenchOptions {
    std::size_t num_queries = 10;
    std::size_t repetitions = 3;
    std::size_t warmup = 1;
    std::size_t candidates = 100;
    std::size_t query_tokens = 30;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
};

/// Times each scorer over random queries against the first K indexed docs.
/// Wall-clock is reported, never asserted; counts are exact.
inline std::vector<BenchReport> bench(const DocumentIndex& index,
                                      std::span<const BenchConfig> configs,
                                      const BenchOptions& opt) {
    if (index.size() == 0) throw ContractError("bench: index is empty");
    if (opt.num_queries == 0 || opt.repetitions == 0) {
        throw ContractError("bench: need at least one query and one repetition");
    }
    const auto& h = index.header();
    const std::size_t k = std::min<std::size_t>(opt.candidates, index.size());
    std::vector<std::uint64_t> cands(index.doc_ids().begin(),
                                     index.doc_ids().begin() + static_cast<std::ptrdiff_t>(k));

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(h.token_dim)));
    std::vector<RerankRequest> queries;
    for (std::size_t qi = 0; qi < opt.num_queries; ++qi) {
        Matrix q(h.token_dim, opt.query_tokens);
        for (double& x : q.data()) x = gauss(rng);
        queries.push_back({qi, std::move(q), cands});
    }

    std::vector<BenchReport> out;
    for (const auto& cfg : configs) {
        BenchReport rep;
        rep.scorer = cfg.kind.name();
        rep.candidates = k;
        rep.query_tokens = opt.query_tokens;
        rep.doc_tokens = h.tokens_per_doc;
        rep.dot_products = analytic_dot_products(cfg.kind, k, opt.query_tokens, h.tokens_per_doc);
        rep.mlp_flops = k * head_flops(cfg.kind, cfg.head, opt.query_tokens, h.tokens_per_doc);
        rep.index_payload_bytes = payload_bytes(h);

        OpCounter counter;
        rerank(queries.front(), index, cfg.kind, cfg.head, opt.workers, &counter);
        rep.dot_products_measured = counter.dots();

        for (std::size_t w = 0; w < opt.warmup; ++w)
            for (const auto& q : queries) rerank(q, index, cfg.kind, cfg.head, opt.workers);

        std::vector<double> per_query_ms;
        for (std::size_t r = 0; r < opt.repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            for (const auto& q : queries) rerank(q, index, cfg.kind, cfg.head, opt.workers);
            const auto t1 = std::chrono::steady_clock::now();
            per_query_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                                   static_cast<double>(queries.size()));
        }
        std::sort(per_query_ms.begin(), per_query_ms.end());
        const std::size_t mid = per_query_ms.size() / 2;
        rep.median_ms_per_query = per_query_ms.size() % 2
                                      ? per_query_ms[mid]
                                      : 0.5 * (per_query_ms[mid - 1] + per_query_ms[mid]);
        out.push_back(std::move(rep));
    }
    return out;
}

inline std::string format_bench(std::span<const BenchReport> reports) {
    std::ostringstream os;
    os << "scorer\tK\tL1\tL2\tms_per_query\tdot_products\tdot_products_measured\tmlp_flops\t"
          "index_payload_bytes\n";
    for (const auto& r : reports) {
        os << r.scorer << '\t' << r.candidates << '\t' << r.query_tokens << '\t' << r.doc_tokens
           << '\t' << std::fixed << std::setprecision(3) << r.median_ms_per_query << '\t'
           << r.dot_products << '\t' << r.dot_products_measured << '\t' << r.mlp_flops << '\t'
           << r.index_payload_bytes << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Synthetic embeddings

/// `count` documents with ids first_id.. and N(0, 1/P) entries.
inline std::vector<IndexedDoc> synthetic_embeddings(std::size_t count, std::size_t dim,
                                                    std::size_t tokens, std::uint64_t seed,
                                                    std::uint64_t first_id = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    std::vector<IndexedDoc> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Matrix m(dim, tokens);
        for (double& x : m.data()) x = gauss(rng);
        out.push_back({first_id + i, std::move(m)});
    }
    return out;
}

}  // namespace lite
