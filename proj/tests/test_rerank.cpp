#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "lite/rerank.hpp"
#include "lite/train.hpp"
#include "oracles.hpp"

using lite::Matrix;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "lite_test_rerank";
    fs::create_directories(dir);
    return dir / name;
}

lite::DocumentIndex make_index(const std::vector<lite::IndexedDoc>& docs, const std::string& name) {
    const auto path = tmp(name);
    lite::build_index(docs, lite::ReductionSpec::none(), path);
    return lite::DocumentIndex::open(path);
}

std::vector<lite::RunEntry> to_run(const std::string& qid, const std::vector<lite::RankedDoc>& r) {
    std::vector<lite::RunEntry> out;
    for (std::size_t i = 0; i < r.size(); ++i)
        out.push_back({qid, std::to_string(r[i].doc_id), i + 1, r[i].score});
    return out;
}

}  // namespace

TEST(Rerank, SingleCandidate) {
    const auto idx = make_index(lite::synthetic_embeddings(3, 4, 5, 1), "single.idx");
    lite::RerankRequest req{7, Matrix(4, 2, 0.5), {1}};
    const auto out = lite::rerank(req, idx, lite::ScorerKind::colbert());
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].doc_id, 1u);
}

TEST(Rerank, HandColbertOrdering) {
    // Q = I (2 tokens in 2 dims); ColBERT score = sum of per-dimension maxima.
    std::vector<lite::IndexedDoc> docs{
        {10, Matrix{{1, 0}, {0, 1}}},      // 1 + 1 = 2
        {20, Matrix{{3, 0}, {0, 0.5}}},    // 3 + 0.5 = 3.5
        {30, Matrix{{0.25, 0}, {0, 0.5}}}  // 0.75
    };
    const auto idx = make_index(docs, "hand.idx");
    lite::RerankRequest req{1, Matrix::identity(2), {10, 20, 30}};
    const auto out = lite::rerank(req, idx, lite::ScorerKind::colbert());
    EXPECT_EQ(out, (std::vector<lite::RankedDoc>{{20, 3.5}, {10, 2.0}, {30, 0.75}}));
}

TEST(Rerank, TiesKeepCandidateOrder) {
    std::vector<lite::IndexedDoc> docs{{1, Matrix(2, 2, 1.0)}, {2, Matrix(2, 2, 1.0)}, {3, Matrix(2, 2, 1.0)}};
    const auto idx = make_index(docs, "ties.idx");
    lite::RerankRequest req{1, Matrix::identity(2), {3, 1, 2}};
    const auto out = lite::rerank(req, idx, lite::ScorerKind::colbert(), {}, 3);
    EXPECT_EQ(out[0].doc_id, 3u);
    EXPECT_EQ(out[1].doc_id, 1u);
    EXPECT_EQ(out[2].doc_id, 2u);
}

TEST(Rerank, MatchesIndependentScoresAndIsWorkerInvariant) {
    const auto docs = lite::synthetic_embeddings(40, 8, 12, 2);
    const auto idx = make_index(docs, "many.idx");
    std::mt19937_64 rng(3);
    const auto q = oracle::random_matrix(8, 5, rng);
    std::vector<std::uint64_t> cands;
    for (std::uint64_t i = 0; i < 40; i += 3) cands.push_back(i);
    lite::RerankRequest req{1, q, cands};

    const lite::Head sep = lite::SepLiteParams::init({5, 12, 6, 7}, 4);
    for (auto [kind, head] : std::vector<std::pair<lite::ScorerKind, lite::Head>>{
             {lite::ScorerKind::de(), {}},
             {lite::ScorerKind::colbert(), {}},
             {lite::ScorerKind::topk(3), {}},
             {lite::ScorerKind::knrm(), lite::KnrmParams::defaults()},
             {lite::ScorerKind::sep_lite(), sep}}) {
        const auto base = lite::rerank(req, idx, kind, head, 1);
        for (std::size_t w : {2u, 4u, 16u}) EXPECT_EQ(lite::rerank(req, idx, kind, head, w), base);

        std::vector<lite::RankedDoc> expected;
        for (auto id : cands) expected.push_back({id, lite::score(kind, q, idx.load_doc(id), head)});
        EXPECT_EQ(base, lite::sort_ranked(expected)) << kind.name();
    }
}

TEST(Rerank, OrderInvariantUnderIncreasingAffineMap) {
    std::vector<lite::RankedDoc> docs;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> d(-20, 20);
    for (std::uint64_t i = 0; i < 30; ++i) docs.push_back({i, static_cast<double>(d(rng))});
    auto moved = docs;
    for (auto& r : moved) r.score = 2.0 * r.score + 1.0;
    const auto a = lite::sort_ranked(docs), b = lite::sort_ranked(moved);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].doc_id, b[i].doc_id);
}

TEST(Rerank, Errors) {
    const auto idx = make_index(lite::synthetic_embeddings(3, 4, 5, 1), "err.idx");
    lite::RerankRequest missing{9, Matrix(4, 2), {0, 77}};
    try {
        lite::rerank(missing, idx, lite::ScorerKind::colbert());
        FAIL() << "expected NotFoundError";
    } catch (const lite::NotFoundError& e) {
        EXPECT_NE(std::string(e.what()).find("77"), std::string::npos);
    }
    EXPECT_THROW(lite::rerank({1, Matrix(4, 2), {}}, idx, lite::ScorerKind::colbert()),
                 lite::ContractError);
    EXPECT_THROW(lite::rerank({1, Matrix(4, 2), {0}}, idx, lite::ScorerKind::knrm()),
                 lite::ContractError);
    EXPECT_THROW(lite::rerank({1, Matrix(3, 2), {0}}, idx, lite::ScorerKind::colbert()),
                 lite::ShapeError);
}

TEST(TextFormats, RunRoundTrip) {
    std::vector<lite::RunEntry> run{{"q1", "d3", 1, 0.1 + 0.2}, {"q1", "d9", 2, -1e-300}};
    std::stringstream ss;
    lite::write_run(ss, run);
    const auto back = lite::parse_run(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].score, 0.1 + 0.2);
    EXPECT_EQ(back[1].score, -1e-300);
    EXPECT_EQ(back[1].doc_id, "d9");
    EXPECT_EQ(back[1].rank, 2u);
}

TEST(TextFormats, ParseErrorsNameTheLine) {
    std::istringstream bad("q1\td1\t1\t0.5\nq1\td2\tx\t0.2\n");
    try {
        lite::parse_run(bad, "run.tsv");
        FAIL();
    } catch (const lite::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("run.tsv:2"), std::string::npos) << e.what();
    }
    std::istringstream qrels("q1\td1\t-1\n");
    EXPECT_THROW(lite::parse_qrels(qrels), lite::FormatError);
    std::istringstream cands("1\t2\t3\n");
    EXPECT_THROW(lite::parse_candidates(cands), lite::FormatError);
}

TEST(TextFormats, CandidatesGroupByQuery) {
    std::istringstream in("# header\n5\t1\n6\t2\n5\t3\n\n6\t1\n");
    const auto c = lite::parse_candidates(in);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0].first, 5u);
    EXPECT_EQ(c[0].second, (std::vector<std::uint64_t>{1, 3}));
    EXPECT_EQ(c[1].second, (std::vector<std::uint64_t>{2, 1}));
}

TEST(Evaluate, Examples) {
    lite::Qrels qrels{{"a", {{"1", 1.0}}}, {"b", {{"5", 1.0}}}};
    const auto perfect = to_run("a", {{1, 3.0}, {2, 2.0}});
    auto rep = lite::evaluate(perfect, {{"a", {{"1", 1.0}}}});
    EXPECT_EQ(rep.mrr10, 1.0);
    EXPECT_EQ(rep.ndcg10, 1.0);

    const auto none = to_run("a", {{2, 3.0}, {3, 2.0}});
    rep = lite::evaluate(none, qrels);
    EXPECT_EQ(rep.mrr10, 0.0);
    EXPECT_EQ(rep.ndcg10, 0.0);

    // Query a: relevant at rank 1; query b: relevant at rank 3.
    auto run = to_run("a", {{1, 3.0}, {2, 2.0}});
    const auto b = to_run("b", {{4, 3.0}, {6, 2.0}, {5, 1.0}});
    run.insert(run.end(), b.begin(), b.end());
    rep = lite::evaluate(run, qrels);
    EXPECT_DOUBLE_EQ(rep.mrr10, (1.0 + 1.0 / 3.0) / 2.0);
    EXPECT_NEAR(rep.ndcg10, (1.0 + 0.5) / 2.0, 1e-15);
    ASSERT_EQ(rep.per_query.size(), 2u);
    EXPECT_EQ(rep.per_query[1].query_id, "b");
}

TEST(Evaluate, MissingQrelsListsQueries) {
    const auto run = to_run("zz", {{1, 1.0}});
    try {
        lite::evaluate(run, {{"a", {{"1", 1.0}}}});
        FAIL();
    } catch (const lite::ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
    }
}

TEST(Bench, DotProductCountsMatchAnalytic) {
    for (std::size_t l2 : {50u, 200u}) {
        const auto path = tmp("bench" + std::to_string(l2) + ".idx");
        lite::build_index(lite::synthetic_embeddings(100, 4, l2, 1), lite::ReductionSpec::none(), path);
        const auto idx = lite::DocumentIndex::open(path);
        lite::BenchOptions opt;
        opt.num_queries = 1;
        opt.repetitions = 1;
        opt.warmup = 0;
        std::vector<lite::BenchConfig> cfgs{{lite::ScorerKind::de(), {}},
                                            {lite::ScorerKind::colbert(), {}},
                                            {lite::ScorerKind::knrm(), lite::KnrmParams::defaults()}};
        const auto reps = lite::bench(idx, cfgs, opt);
        EXPECT_EQ(reps[0].dot_products, 100u);
        EXPECT_EQ(reps[0].dot_products_measured, 100u);
        for (std::size_t i : {1u, 2u}) {
            EXPECT_EQ(reps[i].dot_products, 100u * 30u * l2);
            EXPECT_EQ(reps[i].dot_products_measured, reps[i].dot_products);
        }
        EXPECT_EQ(reps[0].index_payload_bytes, 100u * 4u * 4u * l2);
    }
}

TEST(Train, ZeroLearningRateKeepsParameters) {
    std::mt19937_64 rng(1);
    std::vector<lite::TrainExample> data;
    for (int i = 0; i < 4; ++i)
        data.push_back({{oracle::random_matrix(3, 4, rng), oracle::random_matrix(3, 4, rng)}, {1.0, 0.0}});
    const lite::Head init = lite::SepLiteParams::init({3, 4, 5, 6}, 2);
    lite::TrainConfig cfg;
    cfg.steps = 5;
    cfg.adamw.lr = 0.0;
    cfg.adamw.weight_decay = 0.0;
    const auto res = lite::train_head(data, init, cfg);
    EXPECT_EQ(lite::serialize_head(res.head), lite::serialize_head(init));
    ASSERT_EQ(res.losses.size(), 5u);
    EXPECT_EQ(res.losses.front(), res.losses.back());
}

TEST(Train, MarginMseLearnsALinearTeacher) {
    // Teacher is a flat head the student shares the architecture of.
    std::mt19937_64 rng(2);
    const auto teacher = lite::FlatLiteParams::init(2, 3, 4, 7);
    std::vector<lite::TrainExample> data;
    for (int i = 0; i < 32; ++i) {
        lite::TrainExample ex;
        for (int c = 0; c < 3; ++c) {
            ex.sims.push_back(oracle::random_matrix(2, 3, rng));
            ex.teacher.push_back(lite::flat_lite_score(ex.sims.back(), teacher));
        }
        data.push_back(std::move(ex));
    }
    lite::TrainConfig cfg;
    cfg.loss = lite::LossKind::MarginMSE;
    cfg.steps = 3000;
    cfg.adamw.lr = 1e-2;
    cfg.adamw.weight_decay = 0.0;
    const auto res = lite::train_head(data, lite::FlatLiteParams::init(2, 3, 16, 1), cfg);
    EXPECT_GT(res.losses.front(), 1e-2);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    EXPECT_LT(lite::batch_loss_and_grad(res.head, cfg.loss, data, all, nullptr), 1e-3);
}

TEST(Train, KlTrainingReducesLoss) {
    std::mt19937_64 rng(3);
    std::vector<lite::TrainExample> data;
    for (int i = 0; i < 16; ++i) {
        lite::TrainExample ex;
        auto pos = oracle::random_matrix(3, 4, rng, 0.0, 1.0);
        ex.sims = {pos, oracle::random_matrix(3, 4, rng, -1.0, 0.0)};
        ex.teacher = {2.0, -2.0};
        data.push_back(std::move(ex));
    }
    lite::TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 4;
    cfg.adamw.lr = 1e-2;
    const auto res = lite::train_head(data, lite::init_knrm(0), cfg);
    EXPECT_LT(res.losses.back(), res.losses.front());
}

TEST(Train, RejectsBadInputs) {
    lite::TrainConfig cfg;
    EXPECT_THROW(lite::train_head({}, lite::KnrmParams::defaults(), cfg), lite::ContractError);
    std::vector<lite::TrainExample> data{{{Matrix(2, 2)}, {1.0}}};
    EXPECT_THROW(lite::train_head(data, lite::KnrmParams::defaults(), cfg), lite::ContractError);
    std::vector<lite::TrainExample> ok{{{Matrix(2, 2), Matrix(2, 2)}, {1.0, 0.0}}};
    EXPECT_THROW(lite::train_head(ok, lite::Head{}, cfg), lite::ContractError);
    EXPECT_THROW(lite::parse_loss("hinge"), lite::ContractError);
}

TEST(TrainFile, ParseAndLineNumbers) {
    std::istringstream good("# q pos negs teacher\n1\t2\t3,4\t0.5,0.1,0.2\n5\t6\t7\n");
    const auto recs = lite::parse_train_file(good);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].doc_ids, (std::vector<std::uint64_t>{2, 3, 4}));
    EXPECT_EQ(recs[0].teacher.size(), 3u);
    EXPECT_EQ(recs[1].line, 3u);

    std::istringstream bad("1\t2\t3\n1\t2\t3\t0.5\n");
    try {
        lite::parse_train_file(bad, "train.tsv");
        FAIL();
    } catch (const lite::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("train.tsv:2"), std::string::npos) << e.what();
    }
    std::istringstream junk("1\tabc\t3\n");
    EXPECT_THROW(lite::parse_train_file(junk), lite::FormatError);
}

TEST(TrainFile, ResolvesThroughIndexes) {
    const auto qidx = make_index(lite::synthetic_embeddings(2, 4, 3, 1, 100), "q.idx");
    const auto didx = make_index(lite::synthetic_embeddings(5, 4, 6, 2), "d.idx");
    std::istringstream in("100\t0\t1,2\t1,0,0\n");
    const auto recs = lite::parse_train_file(in);
    const auto ex = lite::resolve_examples(recs, qidx, didx);
    ASSERT_EQ(ex.size(), 1u);
    ASSERT_EQ(ex[0].sims.size(), 3u);
    EXPECT_EQ(ex[0].sims[1], lite::similarity_matrix(qidx.load_doc(100), didx.load_doc(1)));
    std::istringstream missing("100\t0\t99\n");
    EXPECT_THROW(lite::resolve_examples(lite::parse_train_file(missing), qidx, didx),
                 lite::NotFoundError);
}

TEST(TraceRegression, TaskShapeAndSelectorIsExact) {
    const auto data = lite::trace_regression_task(2, 2);
    ASSERT_EQ(data.size(), 256u);
    for (const auto& ex : data) EXPECT_EQ(ex.sims[0].rows(), 2u);
    const lite::Head flat = lite::FlatLiteParams::init(2, 2, 8, 0);
    EXPECT_GT(lite::regression_mse(flat, data), 0.0);
    EXPECT_THROW(lite::trace_regression_task(3, 3), lite::ContractError);
}
