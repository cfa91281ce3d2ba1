#ifndef MICH_SPECIAL_HPP
#define MICH_SPECIAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mich/errors.hpp"

namespace mich {

// Log-domain unnormalized weights over change-point locations. Entries must be
// finite or -inf (an impossible location); at least one entry must be finite.
using LogWeightVector = std::vector<double>;

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

namespace detail {

// Stirling series tail for ln Gamma, valid once the argument has been shifted
// above 10. Coefficients are B_{2n} / (2n (2n-1)).
inline double log_gamma_stirling(double x) {
    constexpr double half_log_two_pi = 0.91893853320467274178;
    const double r = 1.0 / x;
    const double r2 = r * r;
    double series = r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
        + r2 * (1.0 / 1260.0
        + r2 * (-1.0 / 1680.0
        + r2 * (1.0 / 1188.0
        + r2 * (-691.0 / 360360.0
        + r2 * (1.0 / 156.0
        + r2 * (-3617.0 / 122400.0))))))));
    return (x - 0.5) * std::log(x) - x + half_log_two_pi + series;
}

// Asymptotic digamma tail for x >= 10. Coefficients are B_{2n} / (2n).
inline double digamma_asymptotic(double x) {
    const double r = 1.0 / x;
    const double r2 = r * r;
    double series = r2 * (1.0 / 12.0
        + r2 * (-1.0 / 120.0
        + r2 * (1.0 / 252.0
        + r2 * (-1.0 / 240.0
        + r2 * (1.0 / 132.0
        + r2 * (-691.0 / 32760.0
        + r2 * (1.0 / 12.0)))))));
    return std::log(x) - 0.5 * r - series;
}

}  // namespace detail

// ln Gamma(x) for x > 0 via upward recurrence into the Stirling regime.
inline double log_gamma(double x) {
    if (!(x > 0.0)) throw DomainError("log_gamma: argument must be positive");
    double shift = 0.0;
    while (x < 10.0) {
        shift += std::log(x);
        x += 1.0;
    }
    return detail::log_gamma_stirling(x) - shift;
}

// psi(x) = d/dx ln Gamma(x) for x > 0, same shift-then-expand scheme.
inline double digamma(double x) {
    if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
    double shift = 0.0;
    while (x < 10.0) {
        shift += 1.0 / x;
        x += 1.0;
    }
    return detail::digamma_asymptotic(x) - shift;
}

// log(sum(exp(w))) with the max subtracted first. Requires one finite entry.
inline double log_sum_exp(std::span<const double> w) {
    double m = neg_inf;
    for (double v : w) {
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw DomainError("log_sum_exp: entries must be finite or -inf");
        m = std::max(m, v);
    }
    if (m == neg_inf)
        throw DegenerateWeightsError("log_sum_exp: all weights are zero");
    double s = 0.0;
    for (double v : w) {
        if (v != neg_inf) s += std::exp(v - m);
    }
    return m + std::log(s);
}

struct NormalizedWeights {
    std::vector<double> prob;      // sums to one; exact zeros where w = -inf
    std::vector<double> log_prob;  // log of prob, -inf where prob is zero
    double log_norm;               // log of the original normalizer
};

// Stable softmax of log weights, keeping the normalized log values as well.
inline NormalizedWeights normalize_log_weights_full(std::span<const double> w) {
    const double lse = log_sum_exp(w);
    NormalizedWeights out;
    out.log_norm = lse;
    out.prob.resize(w.size());
    out.log_prob.resize(w.size());
    double total = 0.0;
    for (std::size_t t = 0; t < w.size(); ++t) {
        out.log_prob[t] = (w[t] == neg_inf) ? neg_inf : w[t] - lse;
        out.prob[t] = (w[t] == neg_inf) ? 0.0 : std::exp(out.log_prob[t]);
        total += out.prob[t];
    }
    // renormalize the exponentiated values so the probabilities sum to one
    // beyond what the single lse subtraction guarantees
    for (std::size_t t = 0; t < w.size(); ++t) out.prob[t] /= total;
    const double log_total = std::log(total);
    for (std::size_t t = 0; t < w.size(); ++t) {
        if (out.log_prob[t] != neg_inf) out.log_prob[t] -= log_total;
    }
    return out;
}

inline std::vector<double> normalize_log_weights(std::span<const double> w) {
    return normalize_log_weights_full(w).prob;
}

}  // namespace mich

#endif  // MICH_SPECIAL_HPP
