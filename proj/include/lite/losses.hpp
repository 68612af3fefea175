#pragma once
// Per-example training losses over a list of N scores (index 0 = positive),
// each paired with its gradient w.r.t. the student scores.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lite/error.hpp"

namespace lite {

struct LossValue {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d student score
};

namespace detail {

inline void check_pair(std::span<const double> t, std::span<const double> s, const char* what) {
    if (t.size() != s.size()) {
        throw ShapeError(std::string(what) + ": teacher has " + std::to_string(t.size()) +
                         " scores, student has " + std::to_string(s.size()));
    }
    if (s.size() < 2) throw ContractError(std::string(what) + ": need at least 2 scores");
}

}  // namespace detail

inline std::vector<double> log_softmax(std::span<const double> x) {
    const double mx = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
    return out;
}

inline std::vector<double> softmax(std::span<const double> x) {
    auto out = log_softmax(x);
    for (double& v : out) v = std::exp(v);
    return out;
}

/// sum_{i>=1} ((t0 - ti) - (s0 - si))^2; the triplet case is N = 2.
inline LossValue margin_mse_with_grad(std::span<const double> t, std::span<const double> s) {
    detail::check_pair(t, s, "margin_mse");
    LossValue out{0.0, std::vector<double>(s.size(), 0.0)};
    for (std::size_t i = 1; i < s.size(); ++i) {
        const double e = (t[0] - t[i]) - (s[0] - s[i]);
        out.loss += e * e;
        out.grad[0] -= 2.0 * e;
        out.grad[i] += 2.0 * e;
    }
    return out;
}

inline double margin_mse(std::span<const double> t, std::span<const double> s) {
    return margin_mse_with_grad(t, s).loss;
}

/// KL(softmax(t) || softmax(s)).
inline LossValue kl_loss_with_grad(std::span<const double> t, std::span<const double> s) {
    detail::check_pair(t, s, "kl_loss");
    const auto log_pt = log_softmax(t);
    const auto log_ps = log_softmax(s);
    LossValue out{0.0, std::vector<double>(s.size())};
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double pt = std::exp(log_pt[i]);
        if (pt > 0.0) out.loss += pt * (log_pt[i] - log_ps[i]);
        out.grad[i] = std::exp(log_ps[i]) - pt;
    }
    // Rounding can push an exact-zero divergence a few ulps negative.
    out.loss = std::max(0.0, out.loss);
    return out;
}

inline double kl_loss(std::span<const double> t, std::span<const double> s) {
    return kl_loss_with_grad(t, s).loss;
}

/// -log softmax(s)[positive].
inline LossValue cross_entropy_with_grad(std::span<const double> s, std::size_t positive) {
    if (positive >= s.size()) {
        throw ContractError("cross_entropy: positive index " + std::to_string(positive) +
                            " out of range for " + std::to_string(s.size()) + " scores");
    }
    const auto log_p = log_softmax(s);
    LossValue out{-log_p[positive], std::vector<double>(s.size())};
    for (std::size_t i = 0; i < s.size(); ++i) out.grad[i] = std::exp(log_p[i]);
    out.grad[positive] -= 1.0;
    return out;
}

inline double cross_entropy(std::span<const double> s, std::size_t positive) {
    return cross_entropy_with_grad(s, positive).loss;
}

/// Squared error against a regression target, used for synthetic score-fitting tasks.
inline LossValue squared_error_with_grad(double student, double target) {
    const double e = student - target;
    return {e * e, {2.0 * e}};
}

}  // namespace lite
