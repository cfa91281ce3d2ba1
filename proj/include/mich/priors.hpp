#ifndef MICH_PRIORS_HPP
#define MICH_PRIORS_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mich/errors.hpp"
#include "mich/special.hpp"

namespace mich {

enum class PriorKind { uniform, weighted_mean, weighted_var, weighted_meanvar };

struct LocationPrior {
    std::vector<double> pi;
    PriorKind kind = PriorKind::uniform;
    int zero_tail = 0;  // trailing locations with exactly zero probability
};

namespace detail {

inline LocationPrior finish_from_log(std::vector<double> log_pi, PriorKind kind, int zero_tail) {
    LocationPrior out;
    out.pi = normalize_log_weights(log_pi);
    out.kind = kind;
    out.zero_tail = zero_tail;
    return out;
}

}  // namespace detail

inline LocationPrior uniform_prior(std::size_t T) {
    if (T == 0) throw DomainError("uniform_prior: T must be positive");
    LocationPrior out;
    out.pi.assign(T, 1.0 / static_cast<double>(T));
    out.kind = PriorKind::uniform;
    return out;
}

// Location prior that keeps the mean-scp posterior flat under the null model:
// pi_t proportional to (T - t + 1)^{d/2}.
inline LocationPrior weighted_mean_prior(std::size_t T, std::size_t d = 1) {
    if (T == 0 || d == 0) throw DomainError("weighted_mean_prior: T and d must be positive");
    std::vector<double> log_pi(T);
    for (std::size_t t = 0; t < T; ++t)
        log_pi[t] = 0.5 * static_cast<double>(d) * std::log(static_cast<double>(T - t));
    return detail::finish_from_log(std::move(log_pi), PriorKind::weighted_mean, 0);
}

// Null-calibrated prior for the var-scp model. The log increment from t to
// t+1 cancels the expected drift of the null posterior:
//   lnG((T-t+1)/2) - lnG((T-t)/2) + 1/2
//   + ((T-t)/2) psi((T-t)/2) - ((T-t+1)/2) psi((T-t+1)/2).
inline LocationPrior weighted_var_prior(std::size_t T) {
    if (T < 2) throw DomainError("weighted_var_prior: need T >= 2");
    std::vector<double> log_pi(T);
    log_pi[0] = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        const double a = 0.5 * static_cast<double>(T - t + 1);  // (T-t+1)/2 at 1-based t
        const double b = 0.5 * static_cast<double>(T - t);      // (T-t)/2
        const double inc = log_gamma(a) - log_gamma(b) + 0.5
                           + b * digamma(b) - a * digamma(a);
        log_pi[t] = log_pi[t - 1] + inc;
    }
    return detail::finish_from_log(std::move(log_pi), PriorKind::weighted_var, 0);
}

// Null-calibrated prior for the meanvar-scp model: the var-scp increment with
// shifted digamma arguments plus the d=1 mean-scp increment. The recurrence is
// undefined at t = T-1 (a chi-square with zero degrees of freedom), so the
// last location gets probability zero.
inline LocationPrior weighted_meanvar_prior(std::size_t T) {
    if (T < 2) throw DomainError("weighted_meanvar_prior: need T >= 2");
    std::vector<double> log_pi(T, neg_inf);
    log_pi[0] = 0.0;
    for (std::size_t t = 1; t + 1 < T; ++t) {
        const double a = 0.5 * static_cast<double>(T - t + 1);
        const double b = 0.5 * static_cast<double>(T - t);
        const double c = 0.5 * static_cast<double>(T - t - 1);
        const double inc = 0.5 + 0.5 * std::log((2.0 * b) / (2.0 * a))
                           + log_gamma(a) - log_gamma(b)
                           + b * digamma(c) - a * digamma(b);
        log_pi[t] = log_pi[t - 1] + inc;
    }
    return detail::finish_from_log(std::move(log_pi), PriorKind::weighted_meanvar, 1);
}

inline LocationPrior make_prior(PriorKind kind, std::size_t T, std::size_t d = 1) {
    switch (kind) {
        case PriorKind::uniform: return uniform_prior(T);
        case PriorKind::weighted_mean: return weighted_mean_prior(T, d);
        case PriorKind::weighted_var: return weighted_var_prior(T);
        case PriorKind::weighted_meanvar: return weighted_meanvar_prior(T);
    }
    throw DomainError("make_prior: unknown prior kind");
}

inline std::vector<double> log_prior(const LocationPrior& p) {
    std::vector<double> lp(p.pi.size());
    for (std::size_t t = 0; t < p.pi.size(); ++t)
        lp[t] = p.pi[t] > 0.0 ? std::log(p.pi[t]) : neg_inf;
    return lp;
}

}  // namespace mich

#endif  // MICH_PRIORS_HPP
