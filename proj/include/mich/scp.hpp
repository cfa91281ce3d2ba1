#ifndef MICH_SCP_HPP
#define MICH_SCP_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mich/errors.hpp"
#include "mich/special.hpp"

namespace mich {

// Prior hyperparameters shared by the single change-point models. The location
// prior pi may be left empty when a caller supplies log-domain priors directly.
struct PriorSpec {
    double omega0 = 1e-3;
    double u0 = 1e-3;
    double v0 = 1e-3;
    std::vector<double> pi;
};

struct MeanScpPosterior {
    std::vector<double> b_bar;      // posterior jump mean given tau = t
    std::vector<double> omega_bar;  // posterior jump precision given tau = t
    std::vector<double> pi_bar;     // posterior location probabilities
    std::vector<double> log_pi_bar;
};

struct VarScpPosterior {
    std::vector<double> u_bar;  // u0 + (T - t + 1)/2
    std::vector<double> v_bar;
    std::vector<double> pi_bar;
    std::vector<double> log_pi_bar;
};

struct MeanVarScpPosterior {
    std::vector<double> b_bar;
    std::vector<double> omega_bar;
    std::vector<double> u_bar;
    std::vector<double> v_bar;
    std::vector<double> pi_bar;
    std::vector<double> log_pi_bar;
    long clamped = 0;  // count of rate parameters rescued from cancellation
};

struct PoissonScpPosterior {
    std::vector<double> u_bar;
    std::vector<double> v_bar;
    std::vector<double> pi_bar;
    std::vector<double> log_pi_bar;
};

namespace detail {

inline void check_series(std::span<const double> y, const char* who) {
    if (y.empty()) throw DomainError(std::string(who) + ": series must be non-empty");
    for (double v : y)
        if (!std::isfinite(v)) throw DomainError(std::string(who) + ": non-finite observation");
}

inline std::vector<double> to_log(std::span<const double> pi) {
    std::vector<double> lp(pi.size());
    for (std::size_t t = 0; t < pi.size(); ++t)
        lp[t] = pi[t] > 0.0 ? std::log(pi[t]) : neg_inf;
    return lp;
}

}  // namespace detail

// Gaussian mean change at tau with known per-time precisions lambda_t and jump
// prior N(0, 1/omega0). One right-to-left pass accumulates the suffix sums.
inline MeanScpPosterior mean_scp(std::span<const double> y,
                                 std::span<const double> lambda,
                                 double omega0,
                                 std::span<const double> log_pi) {
    detail::check_series(y, "mean_scp");
    const std::size_t T = y.size();
    if (lambda.size() != T || log_pi.size() != T)
        throw DomainError("mean_scp: length mismatch");
    if (!(omega0 > 0.0)) throw DomainError("mean_scp: omega0 must be positive");

    MeanScpPosterior post;
    post.b_bar.resize(T);
    post.omega_bar.resize(T);
    std::vector<double> logw(T);
    double ls = 0.0, ys = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        ls += lambda[i];
        ys += lambda[i] * y[i];
        post.omega_bar[i] = omega0 + ls;
        post.b_bar[i] = ys / post.omega_bar[i];
        logw[i] = log_pi[i]
                  - 0.5 * std::log(post.omega_bar[i])
                  + 0.5 * post.omega_bar[i] * post.b_bar[i] * post.b_bar[i];
    }
    auto nw = normalize_log_weights_full(logw);
    post.pi_bar = std::move(nw.prob);
    post.log_pi_bar = std::move(nw.log_prob);
    return post;
}

inline MeanScpPosterior mean_scp(std::span<const double> y,
                                 std::span<const double> lambda,
                                 const PriorSpec& prior) {
    return mean_scp(y, lambda, prior.omega0, detail::to_log(prior.pi));
}

// Variance change at tau with known scale trend omega_t and jump prior
// Gamma(u0, v_t). The rate prior is per-time so the backfitting engine can
// pass its variance-corrected values. lgamma_u, when non-empty, must hold
// lgamma(u0 + (T-t+1)/2); the engine caches it across sweeps.
inline VarScpPosterior var_scp(std::span<const double> y,
                               std::span<const double> omega,
                               double u0,
                               std::span<const double> v,
                               std::span<const double> log_pi,
                               std::span<const double> lgamma_u = {}) {
    detail::check_series(y, "var_scp");
    const std::size_t T = y.size();
    if (omega.size() != T || v.size() != T || log_pi.size() != T)
        throw DomainError("var_scp: length mismatch");
    if (!(u0 > 0.0)) throw DomainError("var_scp: u0 must be positive");
    for (double vt : v)
        if (!(vt > 0.0)) throw DomainError("var_scp: rate prior must be positive");

    VarScpPosterior post;
    post.u_bar.resize(T);
    post.v_bar.resize(T);
    std::vector<double> logw(T);
    double rs = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        rs += omega[i] * y[i] * y[i];
        post.u_bar[i] = u0 + 0.5 * static_cast<double>(T - i);
        post.v_bar[i] = v[i] + 0.5 * rs;
        const double lg = lgamma_u.empty() ? log_gamma(post.u_bar[i]) : lgamma_u[i];
        logw[i] = log_pi[i] + lg - post.u_bar[i] * std::log(post.v_bar[i]);
    }
    double fs = 0.0;  // prefix of omega * y^2 enters from t = 2 on
    for (std::size_t i = 1; i < T; ++i) {
        fs += omega[i - 1] * y[i - 1] * y[i - 1];
        logw[i] -= 0.5 * fs;
    }
    auto nw = normalize_log_weights_full(logw);
    post.pi_bar = std::move(nw.prob);
    post.log_pi_bar = std::move(nw.log_prob);
    return post;
}

inline VarScpPosterior var_scp(std::span<const double> y,
                               std::span<const double> omega,
                               const PriorSpec& prior) {
    std::vector<double> v(y.size(), prior.v0);
    return var_scp(y, omega, prior.u0, v, detail::to_log(prior.pi));
}

// Simultaneous mean and variance change with Normal-Gamma(0, omega0, u0, v_t)
// jump prior. v_bar is a residual sum of squares plus v_t in exact arithmetic;
// if cancellation drives it non-positive it is clamped and counted.
inline MeanVarScpPosterior meanvar_scp(std::span<const double> y,
                                       std::span<const double> lambda,
                                       double omega0,
                                       double u0,
                                       std::span<const double> v,
                                       std::span<const double> log_pi,
                                       std::span<const double> lgamma_u = {}) {
    detail::check_series(y, "meanvar_scp");
    const std::size_t T = y.size();
    if (lambda.size() != T || v.size() != T || log_pi.size() != T)
        throw DomainError("meanvar_scp: length mismatch");
    if (!(omega0 > 0.0) || !(u0 > 0.0))
        throw DomainError("meanvar_scp: omega0 and u0 must be positive");
    for (double vt : v)
        if (!(vt > 0.0)) throw DomainError("meanvar_scp: rate prior must be positive");

    MeanVarScpPosterior post;
    post.b_bar.resize(T);
    post.omega_bar.resize(T);
    post.u_bar.resize(T);
    post.v_bar.resize(T);
    std::vector<double> logw(T);
    double ls = 0.0, ys = 0.0, rs = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        ls += lambda[i];
        ys += lambda[i] * y[i];
        rs += lambda[i] * y[i] * y[i];
        post.omega_bar[i] = omega0 + ls;
        post.b_bar[i] = ys / post.omega_bar[i];
        post.u_bar[i] = u0 + 0.5 * static_cast<double>(T - i);
        double vb = v[i] + 0.5 * (rs - post.omega_bar[i] * post.b_bar[i] * post.b_bar[i]);
        if (!(vb > 0.0)) {
            vb = v[i] * 1e-12;
            ++post.clamped;
        }
        post.v_bar[i] = vb;
        const double lg = lgamma_u.empty() ? log_gamma(post.u_bar[i]) : lgamma_u[i];
        logw[i] = log_pi[i] + lg - post.u_bar[i] * std::log(post.v_bar[i])
                  - 0.5 * std::log(post.omega_bar[i]);
    }
    double fs = 0.0;
    for (std::size_t i = 1; i < T; ++i) {
        fs += lambda[i - 1] * y[i - 1] * y[i - 1];
        logw[i] -= 0.5 * fs;
    }
    auto nw = normalize_log_weights_full(logw);
    post.pi_bar = std::move(nw.prob);
    post.log_pi_bar = std::move(nw.log_prob);
    return post;
}

inline MeanVarScpPosterior meanvar_scp(std::span<const double> y,
                                       std::span<const double> lambda,
                                       const PriorSpec& prior) {
    std::vector<double> v(y.size(), prior.v0);
    return meanvar_scp(y, lambda, prior.omega0, prior.u0, v, detail::to_log(prior.pi));
}

// Poisson rate change with known trend omega_t and jump prior Gamma(u0, v0).
inline PoissonScpPosterior poisson_scp(std::span<const double> y,
                                       std::span<const double> omega,
                                       double u0,
                                       double v0,
                                       std::span<const double> log_pi,
                                       std::span<const double> lgamma_u = {}) {
    detail::check_series(y, "poisson_scp");
    const std::size_t T = y.size();
    if (omega.size() != T || log_pi.size() != T)
        throw DomainError("poisson_scp: length mismatch");
    if (!(u0 > 0.0) || !(v0 > 0.0))
        throw DomainError("poisson_scp: u0 and v0 must be positive");
    for (double c : y)
        if (c < 0.0 || c != std::floor(c))
            throw DomainError("poisson_scp: observations must be nonnegative integers");

    PoissonScpPosterior post;
    post.u_bar.resize(T);
    post.v_bar.resize(T);
    std::vector<double> logw(T);
    double cs = 0.0, ws = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        cs += y[i];
        ws += omega[i];
        post.u_bar[i] = u0 + cs;
        post.v_bar[i] = v0 + ws;
        const double lg = lgamma_u.empty() ? log_gamma(post.u_bar[i]) : lgamma_u[i];
        logw[i] = log_pi[i] + lg - post.u_bar[i] * std::log(post.v_bar[i]);
    }
    double fs = 0.0;
    for (std::size_t i = 1; i < T; ++i) {
        fs += omega[i - 1];
        logw[i] -= fs;
    }
    auto nw = normalize_log_weights_full(logw);
    post.pi_bar = std::move(nw.prob);
    post.log_pi_bar = std::move(nw.log_prob);
    return post;
}

inline PoissonScpPosterior poisson_scp(std::span<const double> y,
                                       std::span<const double> omega,
                                       const PriorSpec& prior) {
    return poisson_scp(y, omega, prior.u0, prior.v0, detail::to_log(prior.pi));
}

// ---- posterior moment summaries -------------------------------------------
//
// A component's mean contribution is b 1{t >= tau} and its precision factor is
// s^{1{t >= tau}}, so every per-time moment is a prefix accumulation over the
// location posterior.

// E[mu_t]
inline std::vector<double> mean_moment(std::span<const double> b_bar,
                                       std::span<const double> pi_bar) {
    std::vector<double> out(b_bar.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < b_bar.size(); ++t) {
        acc += b_bar[t] * pi_bar[t];
        out[t] = acc;
    }
    return out;
}

// E[mu_t^2] for a mean-only component
inline std::vector<double> mean_square_moment(std::span<const double> b_bar,
                                              std::span<const double> omega_bar,
                                              std::span<const double> pi_bar) {
    std::vector<double> out(b_bar.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < b_bar.size(); ++t) {
        acc += (b_bar[t] * b_bar[t] + 1.0 / omega_bar[t]) * pi_bar[t];
        out[t] = acc;
    }
    return out;
}

// E[lambda_t] / omega_t: the expected precision factor of a var or meanvar
// component. Locations after t contribute the pre-change factor of one.
inline std::vector<double> precision_moment(std::span<const double> u_bar,
                                            std::span<const double> v_bar,
                                            std::span<const double> pi_bar) {
    std::vector<double> out(u_bar.size());
    double fwd = 0.0, rest = 1.0;
    for (std::size_t t = 0; t < u_bar.size(); ++t) {
        rest -= pi_bar[t];
        fwd += (u_bar[t] / v_bar[t]) * pi_bar[t];
        out[t] = fwd + std::max(rest, 0.0);
    }
    return out;
}

// E[lambda_t mu_t] / omega_t for a meanvar component
inline std::vector<double> mean_precision_moment(std::span<const double> b_bar,
                                                 std::span<const double> u_bar,
                                                 std::span<const double> v_bar,
                                                 std::span<const double> pi_bar) {
    std::vector<double> out(b_bar.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < b_bar.size(); ++t) {
        acc += b_bar[t] * (u_bar[t] / v_bar[t]) * pi_bar[t];
        out[t] = acc;
    }
    return out;
}

// E[lambda_t mu_t^2] / omega_t for a meanvar component
inline std::vector<double> mean_square_precision_moment(std::span<const double> b_bar,
                                                        std::span<const double> omega_bar,
                                                        std::span<const double> u_bar,
                                                        std::span<const double> v_bar,
                                                        std::span<const double> pi_bar) {
    std::vector<double> out(b_bar.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < b_bar.size(); ++t) {
        acc += (b_bar[t] * b_bar[t] * (u_bar[t] / v_bar[t]) + 1.0 / omega_bar[t]) * pi_bar[t];
        out[t] = acc;
    }
    return out;
}

// Var(mu_t) for a mean-only component; clipped at zero against roundoff.
inline std::vector<double> mean_variance(std::span<const double> b_bar,
                                         std::span<const double> omega_bar,
                                         std::span<const double> pi_bar) {
    auto m1 = mean_moment(b_bar, pi_bar);
    auto m2 = mean_square_moment(b_bar, omega_bar, pi_bar);
    std::vector<double> out(b_bar.size());
    for (std::size_t t = 0; t < b_bar.size(); ++t)
        out[t] = std::max(m2[t] - m1[t] * m1[t], 0.0);
    return out;
}

}  // namespace mich

#endif  // MICH_SCP_HPP
