#ifndef MICH_ENGINE_POISSON_HPP
#define MICH_ENGINE_POISSON_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mich/engine.hpp"
#include "mich/scp.hpp"

namespace mich {

// Backfitting for multiple rate changes in a Poisson sequence. The L
// components multiply into the rate, so each coordinate update is a
// poisson-scp fit with the other components' expected rates as the trend.
// The model supplies no closed-form objective in terms of the Gaussian F, so
// convergence is monitored with the mean-field ELBO of the Poisson-Gamma
// model (expected log likelihood with E[log s] = psi(u) - log v, minus the
// Gamma and categorical KL terms, dropping the log y! constant).
inline MichFit backfit_poisson(std::span<const double> y, const MichConfig& cfg,
                               const std::optional<MichFit>& init = std::nullopt) {
    detail::check_series(y, "backfit_poisson");
    const std::size_t T = y.size();
    if (cfg.K != 0 || cfg.J != 0)
        throw DomainError("backfit_poisson: only rate (L) components are supported");
    for (double c : y)
        if (c < 0.0 || c != std::floor(c))
            throw DomainError("backfit_poisson: observations must be nonnegative integers");

    MichFit fit;
    fit.cfg = cfg;
    fit.mu0 = 0.0;

    double total_count = 0.0;
    for (double c : y) total_count += c;
    fit.lambda0 = cfg.estimate_intercept
                      ? std::max(total_count / static_cast<double>(T), 1e-12)
                      : cfg.lambda0;

    auto lp = detail::default_log_prior(ComponentClass::poisson_rate, T, cfg);
    int have = 0;
    if (init) {
        fit.lambda0 = init->lambda0;
        for (const Component& comp : init->components) {
            if (comp.cls == ComponentClass::poisson_rate && have < cfg.L) {
                fit.components.push_back(comp);
                detail::refresh_moments(fit.components.back(), fit.diagnostics);
                ++have;
            }
        }
    }
    for (; have < cfg.L; ++have) {
        Component c;
        c.cls = ComponentClass::poisson_rate;
        c.log_prior = lp;
        auto nw = normalize_log_weights_full(lp);
        c.pi_bar = std::move(nw.prob);
        c.log_pi_bar = std::move(nw.log_prob);
        c.u_bar.resize(T);
        double cs = 0.0;
        for (std::size_t i = T; i-- > 0;) {
            cs += y[i];
            c.u_bar[i] = cfg.prior.u0 + cs;
        }
        c.v_bar = c.u_bar;  // unit expected rate factor
        detail::refresh_moments(c, fit.diagnostics);
        fit.components.push_back(std::move(c));
    }

    // posterior shapes are shared: u_bar depends only on the counts
    std::vector<double> lgamma_u(T), digamma_u(T);
    {
        double cs = 0.0;
        for (std::size_t i = T; i-- > 0;) {
            cs += y[i];
            lgamma_u[i] = log_gamma(cfg.prior.u0 + cs);
            digamma_u[i] = digamma(cfg.prior.u0 + cs);
        }
    }

    const double u0 = cfg.prior.u0;
    const double v0 = cfg.prior.v0;
    const double lgamma_u0 = log_gamma(u0);
    const double log_v0 = std::log(v0);

    std::vector<double> rate(T);  // lambda0 * prod_l E[lambda_lt]
    auto rebuild_rate = [&] {
        for (std::size_t t = 0; t < T; ++t) rate[t] = fit.lambda0;
        for (const Component& c : fit.components)
            for (std::size_t t = 0; t < T; ++t)
                rate[t] *= detail::floored(c.lambda[t], fit.diagnostics.clamped_lambda);
    };

    for (long iter = 0; iter < cfg.max_iters; ++iter) {
        rebuild_rate();
        for (Component& c : fit.components) {
            for (std::size_t t = 0; t < T; ++t)
                rate[t] /= detail::floored(c.lambda[t], fit.diagnostics.clamped_lambda);
            auto post = poisson_scp(y, rate, u0, v0, c.log_prior, lgamma_u);
            c.u_bar = std::move(post.u_bar);
            c.v_bar = std::move(post.v_bar);
            c.pi_bar = std::move(post.pi_bar);
            c.log_pi_bar = std::move(post.log_pi_bar);
            detail::refresh_moments(c, fit.diagnostics);
            for (std::size_t t = 0; t < T; ++t) rate[t] *= c.lambda[t];
        }
        if (cfg.estimate_intercept) {
            double base = 0.0;
            for (std::size_t t = 0; t < T; ++t) base += rate[t] / fit.lambda0;
            const double lambda0_new = std::max(total_count / base, 1e-12);
            for (std::size_t t = 0; t < T; ++t) rate[t] *= lambda0_new / fit.lambda0;
            fit.lambda0 = lambda0_new;
        }

        // ELBO analogue
        const double log_lambda0 = std::log(fit.lambda0);
        double F = 0.0;
        for (std::size_t t = 0; t < T; ++t) F += y[t] * log_lambda0 - rate[t];
        for (const Component& c : fit.components) {
            double elog_prefix = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double p = c.pi_bar[t];
                const double log_v = std::log(c.v_bar[t]);
                elog_prefix += p * (digamma_u[t] - log_v);
                F += y[t] * elog_prefix;
                F -= p * (u0 * (log_v - log_v0) - lgamma_u[t] + lgamma_u0 +
                          (c.u_bar[t] - u0) * digamma_u[t] -
                          (c.v_bar[t] - v0) * c.u_bar[t] / c.v_bar[t]);
                F -= detail::xlogx_ratio(p, c.log_pi_bar[t], c.log_prior[t]);
            }
        }
        if (!std::isfinite(F))
            throw NumericalError("backfit_poisson: ELBO is not finite",
                                 static_cast<int>(iter + 1));
        fit.elbo_trace.push_back(F);
        fit.iterations = static_cast<int>(iter + 1);
        const std::size_t n = fit.elbo_trace.size();
        if (n >= 2) {
            const double gain = F - fit.elbo_trace[n - 2];
            if (gain < 1e-12 || gain < cfg.tol * std::abs(fit.elbo_trace[n - 2])) {
                fit.converged = true;
                break;
            }
        }
    }
    return fit;
}

}  // namespace mich

#endif  // MICH_ENGINE_POISSON_HPP
