// lite: command-line front end for building indexes, re-ranking, training
// scorer heads, benchmarking and the dual-encoder rank-bound verifier.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lite/lite.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_build_index(const std::string& in, const std::string& out, std::size_t avg_pool,
                    const std::string& token_proj, const std::string& dim_proj) {
    const auto docs = lite::read_embeddings(in);
    lite::ReductionSpec spec;
    spec.avg_pool = avg_pool;
    if (!token_proj.empty()) {
        auto p = lite::load_projection(token_proj);
        if (p.side != lite::ProjectionSide::Tokens) throw lite::ContractError("--token-proj: checkpoint is a dim projection");
        spec.token_proj = std::move(p.matrix);
    }
    if (!dim_proj.empty()) {
        auto p = lite::load_projection(dim_proj);
        if (p.side != lite::ProjectionSide::Dims) throw lite::ContractError("--dim-proj: checkpoint is a token projection");
        spec.dim_proj = std::move(p.matrix);
    }
    const auto h = lite::build_index(docs, spec, out);
    std::cout << "docs " << h.doc_count << " token_dim " << h.token_dim << " tokens_per_doc "
              << h.tokens_per_doc << " storage_bytes " << lite::storage_bytes(h)
              << " payload_bytes " << lite::payload_bytes(h) << "\n";
    return 0;
}

int cmd_rerank(const std::string& index_path, const std::string& queries_path,
               const std::string& cands_path, const std::string& scorer,
               const std::string& head_path, const std::string& out_path, std::size_t workers) {
    const auto index = lite::DocumentIndex::open(index_path);
    const auto queries = lite::DocumentIndex::open(queries_path);
    const auto kind = lite::ScorerKind::parse(scorer);
    lite::Head head;
    if (!head_path.empty()) head = lite::load_head(head_path);
    const auto cands = lite::read_text(cands_path, [](std::istream& in, const std::string& n) {
        return lite::parse_candidates(in, n);
    });

    std::ofstream out(out_path);
    if (!out) throw lite::IoError("cannot open '" + out_path + "' for writing");
    for (const auto& [qid, docs] : cands) {
        lite::RerankRequest req{qid, queries.load_doc(qid), docs};
        const auto ranked = lite::rerank(req, index, kind, head, workers);
        std::vector<lite::RunEntry> entries;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            entries.push_back({std::to_string(qid), std::to_string(ranked[r].doc_id), r + 1,
                               ranked[r].score});
        }
        lite::write_run(out, entries);
    }
    if (!out) throw lite::IoError("write failed for '" + out_path + "'");
    return 0;
}

struct TrainArgs {
    std::string data, index, queries, scorer = "sep", loss = "kl", out, loss_out;
    std::uint64_t seed = 0;
    std::size_t steps = 1000, batch = 32, m1 = 360, m2 = 2400;
    double lr = 1e-3, weight_decay = 0.01;
};

int cmd_train(const TrainArgs& a) {
    const auto docs = lite::DocumentIndex::open(a.index);
    const auto queries = a.queries.empty() ? docs : lite::DocumentIndex::open(a.queries);
    const auto records = lite::read_train_file(a.data);
    if (records.empty()) throw lite::ContractError("train: no records in " + a.data);
    const auto examples = lite::resolve_examples(records, queries, docs);

    const auto kind = lite::ScorerKind::parse(a.scorer);
    if (!kind.needs_head()) throw lite::ContractError("train: scorer must be knrm, flat or sep");
    lite::HeadDims dims{examples.front().sims.front().rows(), examples.front().sims.front().cols(),
                        a.m1, a.m2};
    lite::TrainConfig cfg;
    cfg.loss = lite::parse_loss(a.loss);
    cfg.steps = a.steps;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    cfg.adamw.lr = a.lr;
    cfg.adamw.weight_decay = a.weight_decay;

    const auto result = lite::train_head(examples, lite::init_head(kind, dims, a.seed), cfg);
    lite::save_head(result.head, a.out);
    const std::string curve = a.loss_out.empty() ? a.out + ".loss" : a.loss_out;
    std::ofstream lc(curve);
    for (std::size_t s = 0; s < result.losses.size(); ++s) {
        lc << s << '\t' << std::setprecision(17) << result.losses[s] << '\n';
    }
    std::cout << "steps " << result.losses.size() << " first_loss "
              << (result.losses.empty() ? 0.0 : result.losses.front()) << " final_loss "
              << (result.losses.empty() ? 0.0 : result.losses.back()) << " checkpoint " << a.out
              << " loss_curve " << curve << "\n";
    return 0;
}

int cmd_bench(const std::string& index_path, const std::string& scorers, std::size_t queries,
              std::size_t reps, std::size_t k, std::size_t l1, std::size_t m1, std::size_t m2,
              std::size_t workers, std::uint64_t seed) {
    const auto index = lite::DocumentIndex::open(index_path);
    std::vector<lite::BenchConfig> configs;
    for (const auto& name : split_list(scorers)) {
        const auto kind = lite::ScorerKind::parse(name);
        lite::HeadDims dims{l1, index.header().tokens_per_doc, m1, m2};
        configs.push_back({kind, lite::init_head(kind, dims, seed)});
    }
    lite::BenchOptions opt;
    opt.num_queries = queries;
    opt.repetitions = reps;
    opt.candidates = k;
    opt.query_tokens = l1;
    opt.workers = workers;
    opt.seed = seed;
    std::cout << lite::format_bench(lite::bench(index, configs, opt));
    std::cout << "# mlp_flops per query: sep = 2(m2*L2+L2*m2)*L1 + 2(m1*L1+L1*m1)*L2 + 2*L1*L2"
                 " + L1*(7*m2+7*L2) + L2*(7*m1+7*L1); flat = 2*m*L1*L2 + 4*m;"
                 " knrm = K*L1*(5*L2+1) + 2*K; colbert/topk = L1*L2; all times K\n";
    return 0;
}

int cmd_evaluate(const std::string& run_path, const std::string& qrels_path) {
    const auto run = lite::read_text(run_path, [](std::istream& in, const std::string& n) {
        return lite::parse_run(in, n);
    });
    const auto qrels = lite::read_text(qrels_path, [](std::istream& in, const std::string& n) {
        return lite::parse_qrels(in, n);
    });
    std::cout << lite::format_eval(lite::evaluate(run, qrels));
    return 0;
}

int cmd_verify_theory(std::size_t p, std::size_t l, long o) {
    std::optional<std::size_t> rank;
    if (o >= 0) rank = static_cast<std::size_t>(o);
    const auto rep = lite::theory::verify_theorem2(p, l, rank);
    std::cout << lite::theory::format_report(rep);
    return rep.pass() ? 0 : 1;
}

int cmd_synth(const std::string& out, std::size_t count, std::size_t dim, std::size_t tokens,
              std::uint64_t seed, std::uint64_t first_id) {
    const auto docs = lite::synthetic_embeddings(count, dim, tokens, seed, first_id);
    const auto h = lite::write_embeddings(docs, out);
    std::cout << "wrote " << h.doc_count << " x " << h.token_dim << "x" << h.tokens_per_doc
              << " embeddings to " << out << "\n";
    return 0;
}

int cmd_init_proj(const std::string& out, const std::string& side, std::size_t rows,
                  std::size_t cols, std::uint64_t seed) {
    lite::Projection p;
    if (side == "tokens") {
        p.side = lite::ProjectionSide::Tokens;
    } else if (side == "dims") {
        p.side = lite::ProjectionSide::Dims;
    } else {
        throw lite::ContractError("--side must be tokens or dims");
    }
    p.matrix = lite::Matrix(rows, cols);
    std::mt19937_64 rng(seed);
    // Fan-in is the reduced axis: L2 for token projections, P for dim projections.
    const std::size_t fan_in = p.side == lite::ProjectionSide::Tokens ? rows : cols;
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fan_in)),
                                                1.0 / std::sqrt(double(fan_in)));
    for (double& x : p.matrix.data()) x = dist(rng);
    lite::save_projection(p, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lite: late-interaction scorers, index and evaluation tools"};
    app.require_subcommand(1);

    std::string in, out, token_proj, dim_proj;
    std::size_t avg_pool = 1;
    auto* build = app.add_subcommand("build-index", "Build a document index from an embeddings file");
    build->add_option("--in", in, "Embeddings file")->required();
    build->add_option("--out", out, "Index file to write")->required();
    auto* pool_opt = build->add_option("--avg-pool", avg_pool, "Average adjacent token columns");
    auto* tok_opt = build->add_option("--token-proj", token_proj, "Token projection checkpoint (L2 x L2')");
    auto* dim_opt = build->add_option("--dim-proj", dim_proj, "Dim projection checkpoint (P' x P)");
    pool_opt->excludes(tok_opt)->excludes(dim_opt);

    std::string index_path, queries_path, cands_path, scorer = "colbert", head_path;
    std::size_t workers = 1;
    auto* rr = app.add_subcommand("rerank", "Re-rank candidate documents per query");
    rr->add_option("--index", index_path)->required();
    rr->add_option("--queries", queries_path, "Query embeddings file")->required();
    rr->add_option("--candidates", cands_path, "TSV: query_id TAB doc_id")->required();
    rr->add_option("--scorer", scorer, "de, colbert, topk:K, knrm, flat, sep")->required();
    rr->add_option("--head", head_path, "Head checkpoint for knrm/flat/sep");
    rr->add_option("--out", out, "Run file to write")->required();
    rr->add_option("--workers", workers, "Scoring threads per query");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a scorer head on frozen embeddings");
    tr->add_option("--data", ta.data, "TSV: qid TAB pos TAB negs TAB teacher_scores")->required();
    tr->add_option("--index", ta.index)->required();
    tr->add_option("--queries", ta.queries, "Query embeddings (default: resolve through --index)");
    tr->add_option("--scorer", ta.scorer, "knrm, flat or sep")->required();
    tr->add_option("--loss", ta.loss, "kl, margin-mse, xent or mse")->required();
    tr->add_option("--seed", ta.seed);
    tr->add_option("--out", ta.out, "Checkpoint to write")->required();
    tr->add_option("--loss-out", ta.loss_out, "Per-step loss curve (default <out>.loss)");
    tr->add_option("--steps", ta.steps);
    tr->add_option("--batch", ta.batch);
    tr->add_option("--lr", ta.lr);
    tr->add_option("--weight-decay", ta.weight_decay);
    tr->add_option("--m1", ta.m1, "sep column MLP width / flat hidden width");
    tr->add_option("--m2", ta.m2, "sep row MLP width");

    std::string scorers = "de,colbert,knrm,sep";
    std::size_t bq = 10, breps = 3, bk = 100, bl1 = 30, bm1 = 360, bm2 = 2400;
    std::uint64_t bseed = 0;
    auto* bn = app.add_subcommand("bench", "Latency, dot-product and FLOP report per scorer");
    bn->add_option("--index", index_path)->required();
    bn->add_option("--scorers", scorers, "Comma-separated scorer list");
    bn->add_option("--queries", bq, "Random queries per repetition");
    bn->add_option("--reps", breps, "Timed repetitions (after one warmup)");
    bn->add_option("--k", bk, "Candidates per query");
    bn->add_option("--l1", bl1, "Query tokens");
    bn->add_option("--m1", bm1);
    bn->add_option("--m2", bm2);
    bn->add_option("--workers", workers);
    bn->add_option("--seed", bseed);

    std::string run_path, qrels_path;
    auto* ev = app.add_subcommand("evaluate", "MRR@10 and nDCG@10 of a run file");
    ev->add_option("--run", run_path)->required();
    ev->add_option("--qrels", qrels_path, "TSV: query_id TAB doc_id TAB relevance")->required();

    std::size_t tp = 2, tl = 2;
    long to = -1;
    auto* vt = app.add_subcommand("verify-theory", "Check the dual-encoder rank bound numerically");
    vt->add_option("--p", tp)->required();
    vt->add_option("--l", tl)->required();
    vt->add_option("--o", to, "Embedding dimension to report (default P*L-1)");

    std::size_t count = 100, dim = 32, tokens = 8;
    std::uint64_t sseed = 0, first_id = 0;
    auto* sy = app.add_subcommand("synth", "Write random token embeddings");
    sy->add_option("--out", out)->required();
    sy->add_option("--count", count);
    sy->add_option("--dim", dim);
    sy->add_option("--tokens", tokens);
    sy->add_option("--seed", sseed);
    sy->add_option("--first-id", first_id);

    std::string side = "tokens";
    std::size_t prow = 1, pcol = 1;
    auto* ip = app.add_subcommand("init-proj", "Write a random projection checkpoint");
    ip->add_option("--out", out)->required();
    ip->add_option("--side", side, "tokens (L2 x L2') or dims (P' x P)")->required();
    ip->add_option("--rows", prow)->required();
    ip->add_option("--cols", pcol)->required();
    ip->add_option("--seed", sseed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*build) return cmd_build_index(in, out, avg_pool, token_proj, dim_proj);
        if (*rr) return cmd_rerank(index_path, queries_path, cands_path, scorer, head_path, out, workers);
        if (*tr) return cmd_train(ta);
        if (*bn) return cmd_bench(index_path, scorers, bq, breps, bk, bl1, bm1, bm2, workers, bseed);
        if (*ev) return cmd_evaluate(run_path, qrels_path);
        if (*vt) return cmd_verify_theory(tp, tl, to);
        if (*sy) return cmd_synth(out, count, dim, tokens, sseed, first_id);
        if (*ip) return cmd_init_proj(out, side, prow, pcol, sseed);
    } catch (const lite::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
