#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "lite/head.hpp"
#include "lite/scorers.hpp"
#include "oracles.hpp"

using lite::Matrix;

namespace {

const Matrix kS{{1, 2, 0}, {0, 1, 3}};

Matrix permute_cols(const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, perm[j]);
    return out;
}

}  // namespace

TEST(SimilarityMatrix, Examples) {
    EXPECT_EQ(lite::similarity_matrix(Matrix::identity(2), kS), kS);
    EXPECT_EQ(lite::similarity_matrix(Matrix{{1}, {1}}, Matrix{{2}, {3}}), (Matrix{{5}}));

    Matrix q{{0, 1}, {0, 2}, {0, -1}};
    Matrix d{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    const auto s = lite::similarity_matrix(q, d);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s(0, j), 0.0);
}

TEST(SimilarityMatrix, TransposeSymmetryAndShapeError) {
    std::mt19937_64 rng(1);
    const auto q = oracle::random_matrix(6, 4, rng);
    const auto d = oracle::random_matrix(6, 9, rng);
    EXPECT_EQ(lite::similarity_matrix(q, d).transpose(), lite::similarity_matrix(d, q));
    EXPECT_THROW(lite::similarity_matrix(q, Matrix(5, 2)), lite::ShapeError);
}

TEST(SimilarityMatrix, CounterAddsL1TimesL2) {
    lite::OpCounter c;
    lite::similarity_matrix(Matrix(4, 3), Matrix(4, 7), &c);
    EXPECT_EQ(c.dots(), 21u);
}

TEST(DeScore, Examples) {
    EXPECT_EQ(lite::de_score(std::vector<double>{1, 0, 0}, std::vector<double>{1, 0, 0}), 1.0);
    EXPECT_EQ(lite::de_score(std::vector<double>{1, 0}, std::vector<double>{0, 5}), 0.0);
    EXPECT_EQ(lite::de_score(std::vector<double>{1, 2}, std::vector<double>{3, 4}), 11.0);
    EXPECT_THROW(lite::de_score(std::vector<double>{1, 2}, std::vector<double>{3}), lite::ShapeError);
}

TEST(ColbertScore, Examples) {
    EXPECT_EQ(lite::colbert_score(kS), 5.0);
    EXPECT_EQ(lite::colbert_score(Matrix{{-2.5}}), -2.5);
    std::vector<std::size_t> perm{2, 0, 1};
    EXPECT_EQ(lite::colbert_score(permute_cols(kS, perm)), 5.0);
}

TEST(ColbertTopK, Examples) {
    EXPECT_EQ(lite::colbert_topk_score(kS, 1), 5.0);
    EXPECT_EQ(lite::colbert_topk_score(kS, 2), 7.0);
    EXPECT_EQ(lite::colbert_topk_score(kS, 3), 7.0);  // all entries sum to 7
    EXPECT_THROW(lite::colbert_topk_score(kS, 0), lite::ContractError);
    EXPECT_THROW(lite::colbert_topk_score(kS, 4), lite::ContractError);
    EXPECT_DOUBLE_EQ(lite::colbert_topk_score(kS, 2, lite::TopKAggregate::Mean), 3.5);
}

TEST(ColbertTopK, KEqualsL2IsFullSum) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto s = oracle::random_matrix(3, 5, rng);
        double total = 0.0;
        for (double x : s.data()) total += x;
        EXPECT_NEAR(lite::colbert_topk_score(s, 5), total, 1e-12);
    }
}

TEST(ColbertTopK, MonotoneInKForNonnegativeS) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto s = oracle::random_matrix(4, 8, rng, 0.0, 1.0);
        double prev = -1.0;
        for (std::size_t k = 1; k <= 8; ++k) {
            const double v = lite::colbert_topk_score(s, k);
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(Knrm, DefaultConfig) {
    const auto p = lite::KnrmParams::defaults();
    ASSERT_EQ(p.kernels(), 11u);
    EXPECT_DOUBLE_EQ(p.mus[0], 0.9);
    EXPECT_NEAR(p.mus[9], -0.9, 1e-15);
    EXPECT_EQ(p.sigmas[0], 0.1);
    EXPECT_EQ(p.mus[10], 1.0);
    EXPECT_EQ(p.sigmas[10], 1e-3);
}

TEST(Knrm, HandFeatures) {
    const auto p = lite::KnrmParams::defaults();
    const auto phi = lite::knrm_features(Matrix{{1.0}}, p);
    EXPECT_EQ(phi[10], 0.0);                // exp(0) = 1, log 1 = 0
    EXPECT_NEAR(phi[0], -0.5, 1e-15);       // exp(-0.01/0.02) = exp(-0.5)
    auto unit = p;
    std::fill(unit.w.begin(), unit.w.end(), 0.0);
    unit.w[0] = 1.0;
    EXPECT_EQ(lite::knrm_score(Matrix{{1.0}}, unit), phi[0]);
}

TEST(Knrm, LogFloorKeepsScoreFinite) {
    const auto p = lite::KnrmParams::defaults();
    // 50 is far outside every kernel: each kernel sum underflows to 0.
    const auto phi = lite::knrm_features(Matrix{{50.0}}, p);
    for (double f : phi) EXPECT_DOUBLE_EQ(f, std::log(1e-10));
}

TEST(Knrm, InvalidParams) {
    auto p = lite::KnrmParams::defaults();
    p.sigmas[3] = 0.0;
    EXPECT_THROW(lite::knrm_score(kS, p), lite::ContractError);
    p = lite::KnrmParams::defaults();
    p.w.pop_back();
    EXPECT_THROW(lite::knrm_score(kS, p), lite::ContractError);
}

TEST(Scorers, PermutationInvarianceOfColbertAndKnrm) {
    std::mt19937_64 rng(4);
    const auto p = lite::KnrmParams::defaults();
    for (int t = 0; t < 200; ++t) {
        const auto q = oracle::random_matrix(8, 5, rng);
        const auto d = oracle::random_matrix(8, 7, rng);
        std::vector<std::size_t> pd(7), pq(5);
        std::iota(pd.begin(), pd.end(), 0);
        std::iota(pq.begin(), pq.end(), 0);
        std::shuffle(pd.begin(), pd.end(), rng);
        std::shuffle(pq.begin(), pq.end(), rng);
        const auto s = lite::similarity_matrix(q, d);
        const auto s_perm = lite::similarity_matrix(permute_cols(q, pq), permute_cols(d, pd));
        EXPECT_EQ(lite::colbert_score(s_perm), [&] {
            // Row order changes summation order; compare against rows summed in permuted order.
            double total = 0.0;
            for (std::size_t i : pq) {
                auto r = s.row(i);
                total += *std::max_element(r.begin(), r.end());
            }
            return total;
        }());
        EXPECT_EQ(lite::knrm_score(permute_cols(s, pd), p), lite::knrm_score(s, p));
    }
}

TEST(ScorerKind, Parse) {
    EXPECT_EQ(lite::ScorerKind::parse("topk:3").k, 3u);
    EXPECT_EQ(lite::ScorerKind::parse("topk-mean:2").topk_agg, lite::TopKAggregate::Mean);
    EXPECT_EQ(lite::ScorerKind::parse("sep").type, lite::ScorerType::SepLITE);
    EXPECT_THROW(lite::ScorerKind::parse("topk:0"), lite::ContractError);
    EXPECT_THROW(lite::ScorerKind::parse("bm25"), lite::ContractError);
    for (const char* n : {"de", "colbert", "topk:4", "knrm", "flat", "sep"})
        EXPECT_EQ(lite::ScorerKind::parse(n).name(), n);
}

TEST(ScoreDispatch, Examples) {
    EXPECT_EQ(lite::score(lite::ScorerKind::colbert(), Matrix::identity(2), kS), 5.0);
    EXPECT_EQ(lite::score(lite::ScorerKind::de(), Matrix{{1}, {2}}, Matrix{{3}, {4}}), 11.0);

    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const auto q = oracle::random_matrix(6, 4, rng);
        const auto d = oracle::random_matrix(6, 9, rng);
        EXPECT_EQ(lite::score(lite::ScorerKind::topk(1), q, d),
                  lite::score(lite::ScorerKind::colbert(), q, d));
    }
}

TEST(ScoreDispatch, DeMeanPoolsTokens) {
    const Matrix q{{1, 3}, {0, 2}};  // mean (2, 1)
    const Matrix d{{4}, {-1}};
    EXPECT_EQ(lite::score(lite::ScorerKind::de(), q, d), 7.0);
}

TEST(ScoreDispatch, Errors) {
    EXPECT_THROW(lite::score(lite::ScorerKind::knrm(), Matrix(2, 2), Matrix(2, 2)),
                 lite::ContractError);
    EXPECT_THROW(lite::score(lite::ScorerKind::sep_lite(), Matrix(2, 2), Matrix(2, 2),
                             lite::KnrmParams::defaults()),
                 lite::ContractError);
    EXPECT_THROW(lite::score(lite::ScorerKind::colbert(), Matrix(2, 2), Matrix(3, 2)),
                 lite::ShapeError);
    EXPECT_THROW(lite::score(lite::ScorerKind::de(), Matrix(2, 2), Matrix(3, 2)), lite::ShapeError);
}

TEST(ScoreDispatch, DeCountsOneDotPerDocument) {
    lite::OpCounter c;
    lite::score(lite::ScorerKind::de(), Matrix(4, 30), Matrix(4, 200), {}, &c);
    EXPECT_EQ(c.dots(), 1u);
    lite::score(lite::ScorerKind::colbert(), Matrix(4, 30), Matrix(4, 200), {}, &c);
    EXPECT_EQ(c.dots(), 1u + 30u * 200u);
}
