#pragma once
// Learnable LITE heads over the similarity matrix S (L1 x L2):
//
//   flattened LITE:  score = a^T relu(W vec(S) + b)
//   separable LITE:  S'_{i,:}  = LN(relu(W2 LN(relu(W1 S_{i,:} + b1)) + b2))   (shared over rows)
//                    S''_{:,j} = LN(relu(W4 LN(relu(W3 S'_{:,j} + b3)) + b4))  (shared over columns)
//                    score = w^T vec(S'')
//
// vec() is row-major everywhere: entry (i, j) sits at i * L2 + j.
// Each head has an analytic backward pass and a deterministic initializer;
// AdamW (decoupled weight decay) updates any head through its tensor list.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lite/error.hpp"
#include "lite/scorers.hpp"
#include "lite/tensor.hpp"

namespace lite {

namespace detail {

inline void fill_uniform(std::span<double> out, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : out) x = dist(rng);
}

// y = W x + b for W (out x in).
inline void affine(const Matrix& w, std::span<const double> b, std::span<const double> x,
                   std::span<double> y) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto wr = w.row(r);
        double acc = b[r];
        for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// dW += dy x^T, db += dy, dx = W^T dy.
inline void affine_backward(const Matrix& w, std::span<const double> x, std::span<const double> dy,
                            Matrix& dw, std::span<double> db, std::span<double> dx) {
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        db[r] += g;
        auto dwr = dw.row(r);
        auto wr = w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) {
            dwr[c] += g * x[c];
            dx[c] += g * wr[c];
        }
    }
}

inline void check_len(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
    }
}

inline void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + m.shape_str());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Flattened LITE

struct FlatLiteParams {
    std::size_t l1 = 0;
    std::size_t l2 = 0;
    Matrix w;               // m x (l1 * l2)
    std::vector<double> b;  // m
    std::vector<double> a;  // m

    std::size_t hidden() const noexcept { return b.size(); }
    std::size_t input_size() const noexcept { return l1 * l2; }

    static FlatLiteParams zeros(std::size_t l1, std::size_t l2, std::size_t m) {
        if (l1 < 1 || l2 < 1 || m < 1) throw ContractError("FlatLiteParams: dims must be >= 1");
        return {l1, l2, Matrix(m, l1 * l2), std::vector<double>(m, 0.0),
                std::vector<double>(m, 0.0)};
    }

    static FlatLiteParams init(std::size_t l1, std::size_t l2, std::size_t m, std::uint64_t seed) {
        auto p = zeros(l1, l2, m);
        std::mt19937_64 rng(seed);
        detail::fill_uniform(p.w.data(), l1 * l2, rng);
        detail::fill_uniform(p.a, m, rng);
        return p;
    }

    void validate() const {
        detail::check_shape(w, hidden(), input_size(), "FlatLiteParams.W");
        detail::check_len(a, hidden(), "FlatLiteParams.a");
    }

    std::vector<std::span<double>> tensors() { return {w.data(), b, a}; }
    std::vector<std::span<const double>> tensors() const { return {w.data(), b, a}; }
    static std::vector<std::string> tensor_names() { return {"W", "b", "a"}; }
};

struct FlatLiteCache {
    const FlatLiteParams* params = nullptr;
    std::vector<double> z;       // vec(S)
    std::vector<double> hidden;  // W z + b, pre-activation
    double score = 0.0;
};

inline FlatLiteCache flat_lite_forward(const Matrix& s, const FlatLiteParams& p) {
    if (s.rows() != p.l1 || s.cols() != p.l2) {
        throw ShapeError("flat_lite_forward: S is " + s.shape_str() + " but head expects " +
                         std::to_string(p.l1) + "x" + std::to_string(p.l2));
    }
    FlatLiteCache cache;
    cache.params = &p;
    cache.z.assign(s.data().begin(), s.data().end());
    cache.hidden.resize(p.hidden());
    detail::affine(p.w, p.b, cache.z, cache.hidden);
    double score = 0.0;
    for (std::size_t r = 0; r < p.hidden(); ++r) score += p.a[r] * std::max(0.0, cache.hidden[r]);
    cache.score = score;
    return cache;
}

inline double flat_lite_score(const Matrix& s, const FlatLiteParams& p) {
    return flat_lite_forward(s, p).score;
}

struct FlatLiteGrads {
    FlatLiteParams params;  // gradient tensors, parameter-shaped
    Matrix ds;
};

inline FlatLiteGrads flat_lite_backward(const FlatLiteParams& p, const FlatLiteCache& cache,
                                        double upstream) {
    if (cache.params != &p || cache.hidden.size() != p.hidden() ||
        cache.z.size() != p.input_size()) {
        throw ContractError("flat_lite_backward: cache was not produced by a forward on this head");
    }
    FlatLiteGrads g{FlatLiteParams::zeros(p.l1, p.l2, p.hidden()), Matrix(p.l1, p.l2)};
    std::vector<double> dh(p.hidden(), 0.0);
    for (std::size_t r = 0; r < p.hidden(); ++r) {
        const double h = cache.hidden[r];
        g.params.a[r] = upstream * std::max(0.0, h);
        dh[r] = h > 0.0 ? upstream * p.a[r] : 0.0;
    }
    detail::affine_backward(p.w, cache.z, dh, g.params.w, g.params.b, g.ds.data());
    return g;
}

// ---------------------------------------------------------------------------
// Separable LITE

struct SepLiteDims {
    std::size_t l1 = 30;
    std::size_t l2 = 200;
    std::size_t m1 = 360;
    std::size_t m2 = 2400;

    /// Fifty stored document tokens and W1 of shape (768, 50).
    static SepLiteDims small(std::size_t l1 = 30) { return {l1, 50, 360, 768}; }

    friend bool operator==(const SepLiteDims&, const SepLiteDims&) = default;
};

struct SepLiteParams {
    SepLiteDims dims;
    Matrix w1;               // m2 x l2
    std::vector<double> b1;  // m2
    Matrix w2;               // l2 x m2
    std::vector<double> b2;  // l2
    Matrix w3;               // m1 x l1
    std::vector<double> b3;  // m1
    Matrix w4;               // l1 x m1
    std::vector<double> b4;  // l1
    std::vector<double> w;   // l1 * l2
    double eps = kDefaultLnEps;

    static SepLiteParams zeros(const SepLiteDims& d, double eps = kDefaultLnEps) {
        if (d.l1 < 1 || d.l2 < 1 || d.m1 < 1 || d.m2 < 1) {
            throw ContractError("SepLiteParams: dims must be >= 1");
        }
        SepLiteParams p;
        p.dims = d;
        p.w1 = Matrix(d.m2, d.l2);
        p.b1.assign(d.m2, 0.0);
        p.w2 = Matrix(d.l2, d.m2);
        p.b2.assign(d.l2, 0.0);
        p.w3 = Matrix(d.m1, d.l1);
        p.b3.assign(d.m1, 0.0);
        p.w4 = Matrix(d.l1, d.m1);
        p.b4.assign(d.l1, 0.0);
        p.w.assign(d.l1 * d.l2, 0.0);
        p.eps = eps;
        return p;
    }

    static SepLiteParams init(const SepLiteDims& d, std::uint64_t seed,
                              double eps = kDefaultLnEps) {
        auto p = zeros(d, eps);
        std::mt19937_64 rng(seed);
        detail::fill_uniform(p.w1.data(), d.l2, rng);
        detail::fill_uniform(p.w2.data(), d.m2, rng);
        detail::fill_uniform(p.w3.data(), d.l1, rng);
        detail::fill_uniform(p.w4.data(), d.m1, rng);
        detail::fill_uniform(p.w, d.l1 * d.l2, rng);
        return p;
    }

    void validate() const {
        detail::check_shape(w1, dims.m2, dims.l2, "SepLiteParams.W1");
        detail::check_len(b1, dims.m2, "SepLiteParams.b1");
        detail::check_shape(w2, dims.l2, dims.m2, "SepLiteParams.W2");
        detail::check_len(b2, dims.l2, "SepLiteParams.b2");
        detail::check_shape(w3, dims.m1, dims.l1, "SepLiteParams.W3");
        detail::check_len(b3, dims.m1, "SepLiteParams.b3");
        detail::check_shape(w4, dims.l1, dims.m1, "SepLiteParams.W4");
        detail::check_len(b4, dims.l1, "SepLiteParams.b4");
        detail::check_len(w, dims.l1 * dims.l2, "SepLiteParams.w");
    }

    std::vector<std::span<double>> tensors() {
        return {w1.data(), b1, w2.data(), b2, w3.data(), b3, w4.data(), b4, w};
    }
    std::vector<std::span<const double>> tensors() const {
        return {w1.data(), b1, w2.data(), b2, w3.data(), b3, w4.data(), b4, w};
    }
    static std::vector<std::string> tensor_names() {
        return {"W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4", "w"};
    }
};

// Activations of one two-layer LN/ReLU block: x -> h1 -> n1=LN(relu(h1)) -> h2 -> y=LN(relu(h2)).
struct MlpBlockCache {
    std::vector<double> h1, n1, h2, y;
    double denom1 = 0.0;
    double denom2 = 0.0;
};

struct SepLiteCache {
    const SepLiteParams* params = nullptr;
    Matrix s;                         // input
    std::vector<MlpBlockCache> rows;  // one per query token
    Matrix s1;                        // S'
    std::vector<MlpBlockCache> cols;  // one per document token
    Matrix s2;                        // S''
    double score = 0.0;
};

namespace detail {

inline MlpBlockCache mlp_block_forward(std::span<const double> x, const Matrix& wa,
                                       std::span<const double> ba, const Matrix& wb,
                                       std::span<const double> bb, double eps) {
    MlpBlockCache c;
    c.h1.resize(wa.rows());
    affine(wa, ba, x, c.h1);
    std::vector<double> a1 = c.h1;
    relu_inplace(a1);
    c.denom1 = layer_norm_denominator(a1, eps);
    c.n1 = layer_norm(a1, eps);
    c.h2.resize(wb.rows());
    affine(wb, bb, c.n1, c.h2);
    std::vector<double> a2 = c.h2;
    relu_inplace(a2);
    c.denom2 = layer_norm_denominator(a2, eps);
    c.y = layer_norm(a2, eps);
    return c;
}

// Accumulates parameter grads; returns dL/dx.
inline std::vector<double> mlp_block_backward(const MlpBlockCache& c, std::span<const double> x,
                                              std::span<const double> dy, const Matrix& wa,
                                              const Matrix& wb, Matrix& dwa, std::span<double> dba,
                                              Matrix& dwb, std::span<double> dbb) {
    std::vector<double> dh2 = layer_norm_backward(c.y, dy, c.denom2);
    for (std::size_t k = 0; k < dh2.size(); ++k)
        if (!(c.h2[k] > 0.0)) dh2[k] = 0.0;
    std::vector<double> dn1(c.n1.size());
    affine_backward(wb, c.n1, dh2, dwb, dbb, dn1);
    std::vector<double> dh1 = layer_norm_backward(c.n1, dn1, c.denom1);
    for (std::size_t k = 0; k < dh1.size(); ++k)
        if (!(c.h1[k] > 0.0)) dh1[k] = 0.0;
    std::vector<double> dx(x.size());
    affine_backward(wa, x, dh1, dwa, dba, dx);
    return dx;
}

}  // namespace detail

inline SepLiteCache sep_lite_forward(const Matrix& s, const SepLiteParams& p) {
    const auto& d = p.dims;
    if (s.rows() != d.l1 || s.cols() != d.l2) {
        throw ShapeError("sep_lite_forward: S is " + s.shape_str() + " but head expects " +
                         std::to_string(d.l1) + "x" + std::to_string(d.l2));
    }
    SepLiteCache c;
    c.params = &p;
    c.s = s;
    c.s1 = Matrix(d.l1, d.l2);
    c.rows.reserve(d.l1);
    for (std::size_t i = 0; i < d.l1; ++i) {
        c.rows.push_back(detail::mlp_block_forward(s.row(i), p.w1, p.b1, p.w2, p.b2, p.eps));
        std::copy(c.rows.back().y.begin(), c.rows.back().y.end(), c.s1.row(i).begin());
    }
    c.s2 = Matrix(d.l1, d.l2);
    c.cols.reserve(d.l2);
    for (std::size_t j = 0; j < d.l2; ++j) {
        const auto col = c.s1.col(j);
        c.cols.push_back(detail::mlp_block_forward(col, p.w3, p.b3, p.w4, p.b4, p.eps));
        const auto& y = c.cols.back().y;
        for (std::size_t i = 0; i < d.l1; ++i) c.s2(i, j) = y[i];
    }
    c.score = dot(c.s2.data(), p.w);
    return c;
}

inline double sep_lite_score(const Matrix& s, const SepLiteParams& p) {
    return sep_lite_forward(s, p).score;
}

struct SepLiteGrads {
    SepLiteParams params;  // gradient tensors, parameter-shaped
    Matrix ds;
};

inline SepLiteGrads sep_lite_backward(const SepLiteParams& p, const SepLiteCache& c,
                                      double upstream) {
    const auto& d = p.dims;
    if (c.params != &p || c.rows.size() != d.l1 || c.cols.size() != d.l2 ||
        c.s2.rows() != d.l1 || c.s2.cols() != d.l2) {
        throw ContractError("sep_lite_backward: cache was not produced by a forward on this head");
    }
    SepLiteGrads g{SepLiteParams::zeros(d, p.eps), Matrix(d.l1, d.l2)};
    auto& gp = g.params;

    for (std::size_t k = 0; k < gp.w.size(); ++k) gp.w[k] = upstream * c.s2.data()[k];

    Matrix ds1(d.l1, d.l2);
    std::vector<double> dy(d.l1);
    for (std::size_t j = 0; j < d.l2; ++j) {
        for (std::size_t i = 0; i < d.l1; ++i) dy[i] = upstream * p.w[i * d.l2 + j];
        const auto x = c.s1.col(j);
        const auto dx = detail::mlp_block_backward(c.cols[j], x, dy, p.w3, p.w4, gp.w3, gp.b3,
                                                   gp.w4, gp.b4);
        for (std::size_t i = 0; i < d.l1; ++i) ds1(i, j) = dx[i];
    }
    for (std::size_t i = 0; i < d.l1; ++i) {
        const auto dx = detail::mlp_block_backward(c.rows[i], c.s.row(i), ds1.row(i), p.w1, p.w2,
                                                   gp.w1, gp.b1, gp.w2, gp.b2);
        std::copy(dx.begin(), dx.end(), g.ds.row(i).begin());
    }
    return g;
}

// ---------------------------------------------------------------------------
// KNRM as a trainable head: kernels fixed, only w learned.

inline KnrmParams init_knrm(std::uint64_t seed) {
    auto p = KnrmParams::defaults();
    std::mt19937_64 rng(seed);
    detail::fill_uniform(p.w, p.kernels(), rng);
    return p;
}

/// d score / d w = phi(S).
inline std::vector<double> knrm_weight_grad(const Matrix& s, const KnrmParams& p,
                                            double upstream) {
    auto phi = knrm_features(s, p);
    for (double& x : phi) x *= upstream;
    return phi;
}

// ---------------------------------------------------------------------------
// AdamW

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    AdamWConfig config;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamWState(AdamWConfig cfg = {}) : config(cfg) {
        if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 &&
              config.beta2 < 1.0)) {
            throw ContractError("AdamW: betas must lie in [0, 1)");
        }
    }
};

/// One AdamW update: p *= (1 - lr * wd), then the bias-corrected Adam step.
/// Moment buffers are allocated on the first call and shape-checked after.
inline void adamw_step(const std::vector<std::span<double>>& params,
                       const std::vector<std::span<const double>>& grads, AdamWState& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adamw_step: " + std::to_string(params.size()) + " parameter tensors but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || state.m[t].size() != params[t].size()) {
            throw ShapeError("adamw_step: tensor " + std::to_string(t) + " size mismatch");
        }
    }

    const auto& cfg = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] = p[k] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace lite
