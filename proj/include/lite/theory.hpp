#pragma once
// Numerical checks of the dual-encoder approximation limit on the binary
// hypercube universe {0,1}^{P x L}, where the ground-truth score is
// K*(X, Y) = tr(X^T Y).
//
// K* = U U^T with U the 2^{PL} x PL matrix of flattened inputs, so its
// nonzero spectrum equals that of U^T U = 2^{PL-2} (I + J). The best rank-O
// approximation (Eckart-Young) bounds every O-dimensional dual encoder.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lite/error.hpp"
#include "lite/nn.hpp"
#include "lite/scorers.hpp"
#include "lite/tensor.hpp"

namespace lite::theory {

inline constexpr std::size_t kMaxCells = 16;        // P * L cap
inline constexpr std::size_t kExplicitGramCells = 8;  // K* materialized up to 2^8 x 2^8

inline double groundtruth_score(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError("groundtruth_score: X is " + x.shape_str() + ", Y is " + y.shape_str());
    }
    return dot(x.data(), y.data());
}

/// Row `index` of U reshaped to P x L: bit k of index is cell k (row-major).
inline Matrix hypercube_point(std::size_t p, std::size_t l, std::uint64_t index) {
    Matrix m(p, l);
    for (std::size_t k = 0; k < p * l; ++k) m.data()[k] = static_cast<double>((index >> k) & 1u);
    return m;
}

struct TheoryInstance {
    std::size_t p = 0;
    std::size_t l = 0;
    Matrix u;                         // 2^{PL} x PL
    Matrix gram;                      // U^T U
    std::vector<double> gram_eigenvalues;  // descending, PL entries

    std::size_t cells() const noexcept { return p * l; }
    std::uint64_t universe() const noexcept { return std::uint64_t{1} << cells(); }

    /// 2^{PL-2}(PL+1) followed by PL-1 copies of 2^{PL-2}.
    std::vector<double> predicted_eigenvalues() const {
        const double base = std::ldexp(1.0, static_cast<int>(cells()) - 2);
        std::vector<double> out(cells(), base);
        out[0] = base * static_cast<double>(cells() + 1);
        return out;
    }
};

inline void check_cap(std::size_t p, std::size_t l) {
    if (p < 1 || l < 1) throw ContractError("theory: P and L must be >= 1");
    if (p * l > kMaxCells) {
        throw ContractError("theory: P*L = " + std::to_string(p * l) + " exceeds cap " +
                            std::to_string(kMaxCells));
    }
}

inline TheoryInstance build_gram_spectrum(std::size_t p, std::size_t l,
                                          double tol = kDefaultEigTol) {
    check_cap(p, l);
    TheoryInstance inst;
    inst.p = p;
    inst.l = l;
    const std::size_t n = p * l;
    const std::uint64_t rows = std::uint64_t{1} << n;
    inst.u = Matrix(rows, n);
    for (std::uint64_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < n; ++k) inst.u(r, k) = static_cast<double>((r >> k) & 1u);

    inst.gram = Matrix(n, n);
    for (std::uint64_t r = 0; r < rows; ++r) {
        auto row = inst.u.row(r);
        for (std::size_t a = 0; a < n; ++a) {
            if (row[a] == 0.0) continue;
            for (std::size_t b = 0; b < n; ++b) inst.gram(a, b) += row[b];
        }
    }
    inst.gram_eigenvalues = symmetric_eigenvalues(inst.gram, tol);
    return inst;
}

/// Spectrum of K* = U U^T itself, only for PL <= 8.
inline std::vector<double> explicit_kernel_spectrum(const TheoryInstance& inst) {
    if (inst.cells() > kExplicitGramCells) {
        throw ContractError("explicit_kernel_spectrum: K* is only materialized for P*L <= 8");
    }
    const std::uint64_t rows = inst.universe();
    Matrix k(rows, rows);
    for (std::uint64_t a = 0; a < rows; ++a)
        for (std::uint64_t b = 0; b < rows; ++b) k(a, b) = dot(inst.u.row(a), inst.u.row(b));
    return symmetric_eigenvalues(k, 1e-10);
}

/// Eckart-Young optimum: (sum of squared eigenvalues beyond the top O) / 2^{2PL}.
/// This is the least mean squared error of any rank-O score matrix over all
/// query/document pairs, hence of any O-dimensional dual encoder.
inline double best_rank_o_error(const TheoryInstance& inst, std::size_t o) {
    if (o > inst.cells()) {
        throw ContractError("best_rank_o_error: O=" + std::to_string(o) + " outside [0, " +
                            std::to_string(inst.cells()) + "]");
    }
    double tail = 0.0;
    for (std::size_t i = o; i < inst.gram_eigenvalues.size(); ++i)
        tail += inst.gram_eigenvalues[i] * inst.gram_eigenvalues[i];
    return std::ldexp(tail, -2 * static_cast<int>(inst.cells()));
}

/// Piecewise-linear ramp that extends the binary quantizer to [0, 1].
inline double phi_tau(double z, double tau) {
    if (!(tau > 0.0 && tau <= 0.5)) {
        throw ContractError("phi_tau: tau must lie in (0, 1/2]");
    }
    if (z <= 0.5 - tau) return 0.0;
    if (z >= 0.5 + tau) return 1.0;
    return 0.5 + (z - 0.5) / (2.0 * tau);
}

/// Flattened LITE head computing tr(S) exactly for an L x L similarity
/// matrix: hidden units 2i and 2i+1 read S_ii through +1 and -1 selectors and
/// a = (+1, -1), so relu(x) - relu(-x) = x for either sign.
inline FlatLiteParams trace_selector_head(std::size_t l) {
    auto p = FlatLiteParams::zeros(l, l, 2 * l);
    for (std::size_t i = 0; i < l; ++i) {
        p.w(2 * i, i * l + i) = 1.0;
        p.w(2 * i + 1, i * l + i) = -1.0;
        p.a[2 * i] = 1.0;
        p.a[2 * i + 1] = -1.0;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Permutation invariance harness

struct PermutationWitness {
    Matrix s;
    std::vector<std::size_t> permutation;  // column j of the permuted matrix is column perm[j]
    double delta = 0.0;
};

struct PermutationReport {
    std::size_t trials = 0;
    double max_abs_delta = 0.0;
    std::optional<PermutationWitness> witness;  // largest change seen, when nonzero
};

inline Matrix permute_columns(const Matrix& s, std::span<const std::size_t> perm) {
    Matrix out(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) = s(i, perm[j]);
    return out;
}

/// Scores random S (entries U(-1, 1)) and a random column permutation of it,
/// recording the largest score change.
inline PermutationReport check_permutation_invariance(
    const std::function<double(const Matrix&)>& scorer, std::size_t rows, std::size_t cols,
    std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    PermutationReport report;
    report.trials = trials;
    std::vector<std::size_t> perm(cols);
    for (std::size_t t = 0; t < trials; ++t) {
        Matrix s(rows, cols);
        for (double& x : s.data()) x = entry(rng);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const double delta = std::abs(scorer(s) - scorer(permute_columns(s, perm)));
        if (delta > report.max_abs_delta) {
            report.max_abs_delta = delta;
            report.witness = PermutationWitness{s, perm, delta};
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Full verification report

struct Theorem2Report {
    std::size_t p = 0;
    std::size_t l = 0;
    std::size_t o = 0;
    std::vector<double> eigenvalues;
    std::vector<double> predicted;
    double max_eig_rel_error = 0.0;
    std::vector<double> rank_errors;  // best_rank_o_error for O = 0..PL
    double rank_o_error = 0.0;        // at the requested O
    double floor_error = 0.0;         // at O = PL - 1
    std::optional<double> explicit_spectrum_error;  // K* vs U^T U nonzero spectrum, PL <= 8
    double lite_trace_max_error = 0.0;
    std::size_t lite_trace_pairs = 0;
    bool spectrum_pass = false;
    bool floor_pass = false;
    bool lite_pass = false;

    bool pass() const noexcept { return spectrum_pass && floor_pass && lite_pass; }
};

inline constexpr double kSpectrumRelTol = 1e-9;
inline constexpr double kFloorAbsTol = 1e-9;
inline constexpr double kLiteTraceTol = 1e-12;

inline Theorem2Report verify_theorem2(std::size_t p, std::size_t l,
                                      std::optional<std::size_t> o = std::nullopt) {
    check_cap(p, l);
    if (l < 2) throw ContractError("verify_theorem2: queries and documents need L >= 2 tokens");
    const auto inst = build_gram_spectrum(p, l);
    Theorem2Report rep;
    rep.p = p;
    rep.l = l;
    rep.o = o.value_or(inst.cells() - 1);
    if (rep.o > inst.cells()) throw ContractError("verify_theorem2: O exceeds P*L");
    rep.eigenvalues = inst.gram_eigenvalues;
    rep.predicted = inst.predicted_eigenvalues();
    for (std::size_t i = 0; i < rep.predicted.size(); ++i) {
        rep.max_eig_rel_error = std::max(
            rep.max_eig_rel_error, std::abs(rep.eigenvalues[i] - rep.predicted[i]) / rep.predicted[i]);
    }
    rep.spectrum_pass = rep.eigenvalues.size() == inst.cells() &&
                        rep.max_eig_rel_error <= kSpectrumRelTol;

    for (std::size_t k = 0; k <= inst.cells(); ++k) rep.rank_errors.push_back(best_rank_o_error(inst, k));
    rep.rank_o_error = rep.rank_errors[rep.o];
    rep.floor_error = rep.rank_errors[inst.cells() - 1];
    rep.floor_pass = std::abs(rep.floor_error - 1.0 / 16.0) <= kFloorAbsTol;

    if (inst.cells() <= kExplicitGramCells) {
        const auto full = explicit_kernel_spectrum(inst);
        double err = 0.0;
        for (std::size_t i = 0; i < full.size(); ++i) {
            const double want = i < rep.eigenvalues.size() ? rep.eigenvalues[i] : 0.0;
            err = std::max(err, std::abs(full[i] - want));
        }
        rep.explicit_spectrum_error = err;
        rep.spectrum_pass = rep.spectrum_pass && err <= 1e-8;
    }

    // S = X^T Y is L x L; the selector head reads its diagonal.
    const auto head = trace_selector_head(l);
    const std::uint64_t n = inst.universe();
    const std::uint64_t stride = n > 64 ? n / 64 + 1 : 1;
    for (std::uint64_t a = 0; a < n; a += stride) {
        for (std::uint64_t b = 0; b < n; b += stride) {
            const auto x = hypercube_point(p, l, a);
            const auto y = hypercube_point(p, l, b);
            const double got = flat_lite_score(similarity_matrix(x, y), head);
            rep.lite_trace_max_error =
                std::max(rep.lite_trace_max_error, std::abs(got - groundtruth_score(x, y)));
            ++rep.lite_trace_pairs;
        }
    }
    rep.lite_pass = rep.lite_trace_max_error < kLiteTraceTol;
    return rep;
}

/// Fixed-format text report; stable across runs for golden-file comparison.
inline std::string format_report(const Theorem2Report& rep) {
    std::ostringstream os;
    os << std::fixed;
    os << "theory P=" << rep.p << " L=" << rep.l << " PL=" << rep.p * rep.l << "\n";
    os << "eigenvalues:";
    for (double e : rep.eigenvalues) os << " " << std::setprecision(9) << e;
    os << "\npredicted:  ";
    for (double e : rep.predicted) os << " " << std::setprecision(9) << e;
    os << "\nmax_eigenvalue_rel_error: " << std::scientific << std::setprecision(3)
       << rep.max_eig_rel_error << std::fixed << "\n";
    if (rep.explicit_spectrum_error) {
        os << "explicit_kernel_spectrum_error: " << std::scientific << std::setprecision(3)
           << *rep.explicit_spectrum_error << std::fixed << "\n";
    }
    for (std::size_t k = 0; k < rep.rank_errors.size(); ++k) {
        os << "rank " << k << " normalized_mse: " << std::setprecision(10) << rep.rank_errors[k] << "\n";
    }
    os << "requested rank " << rep.o << " normalized_mse: " << std::setprecision(10)
       << rep.rank_o_error << "\n";
    os << "de_floor rank " << rep.p * rep.l - 1 << " normalized_mse: " << std::setprecision(10)
       << rep.floor_error << " (bound 0.0625000000)\n";
    os << "flat_lite trace construction: pairs=" << rep.lite_trace_pairs
       << " max_abs_error=" << std::scientific << std::setprecision(3) << rep.lite_trace_max_error
       << std::fixed << "\n";
    os << (rep.spectrum_pass ? "PASS" : "FAIL") << " spectrum\n";
    os << (rep.floor_pass ? "PASS" : "FAIL") << " de_rank_floor\n";
    os << (rep.lite_pass ? "PASS" : "FAIL") << " lite_trace\n";
    os << (rep.pass() ? "PASS" : "FAIL") << " theorem2\n";
    return os.str();
}

}  // namespace lite::theory
