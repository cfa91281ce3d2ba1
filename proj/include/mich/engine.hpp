#ifndef MICH_ENGINE_HPP
#define MICH_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mich/errors.hpp"
#include "mich/priors.hpp"
#include "mich/scp.hpp"
#include "mich/special.hpp"

namespace mich {

enum class Model { gaussian, multivariate_mean, poisson };

enum class ComponentClass { mean, var, meanvar, poisson_rate };

struct MichConfig {
    int L = 0;  // mean-only components
    int K = 0;  // variance-only components
    int J = 0;  // joint mean and variance components
    PriorSpec prior;  // omega0, u0, v0; pi (when set) overrides the location priors
    bool uniform_locations = false;  // use the uniform prior instead of the weighted ones
    double tol = 1e-5;
    long max_iters = 10000;
    bool estimate_intercept = true;
    bool reverse_restart = true;
    Model model = Model::gaussian;
    double mu0 = 0.0;     // starting values; fixed when estimate_intercept is off
    double lambda0 = 1.0;

    int total() const { return L + K + J; }
};

struct Diagnostics {
    long clamped_v = 0;       // meanvar rate parameters rescued from cancellation
    long clamped_lambda = 0;  // expected precisions floored at 1e-300
    int merges = 0;
    int restarts = 0;
};

// One fitted component: the SCP posterior on its partial residual plus the
// cached per-time moments the backfitting state is assembled from.
struct Component {
    ComponentClass cls;
    std::vector<double> log_prior;  // original location prior, log domain

    std::vector<double> b_bar, omega_bar, u_bar, v_bar, pi_bar, log_pi_bar;

    std::vector<double> mu;       // E[mu_t] (mean) or E[lam mu]/E[lam] (meanvar)
    std::vector<double> var_cor;  // this component's share of delta_t
    std::vector<double> lambda;   // E[lambda_t] factor (var, meanvar)
    std::vector<double> mu_lambda, mu2_lambda;  // meanvar prefix moments
};

struct MichFit {
    MichConfig cfg;
    std::vector<Component> components;  // update order: joint, mean, var
    double mu0 = 0.0;
    double lambda0 = 1.0;
    std::vector<double> elbo_trace;
    int iterations = 0;
    bool converged = false;
    Diagnostics diagnostics;

    double elbo() const { return elbo_trace.empty() ? neg_inf : elbo_trace.back(); }
};

// r_tilde, lambda_bar, delta: the running terms every coordinate update reads.
struct ResidualState {
    std::vector<double> r_tilde;
    std::vector<double> lambda_bar;
    std::vector<double> delta;
};

namespace detail {

constexpr double lambda_floor = 1e-300;

inline double floored(double x, long& count) {
    if (x < lambda_floor) {
        ++count;
        return lambda_floor;
    }
    return x;
}

// Refresh a component's cached moments from its posterior parameters.
inline void refresh_moments(Component& c, Diagnostics& diag) {
    const std::size_t T = c.pi_bar.size();
    switch (c.cls) {
        case ComponentClass::mean: {
            c.mu = mean_moment(c.b_bar, c.pi_bar);
            auto mu2 = mean_square_moment(c.b_bar, c.omega_bar, c.pi_bar);
            c.var_cor.resize(T);
            for (std::size_t t = 0; t < T; ++t)
                c.var_cor[t] = std::max(mu2[t] - c.mu[t] * c.mu[t], 0.0);
            break;
        }
        case ComponentClass::var: {
            c.lambda = precision_moment(c.u_bar, c.v_bar, c.pi_bar);
            break;
        }
        case ComponentClass::meanvar: {
            c.mu_lambda = mean_precision_moment(c.b_bar, c.u_bar, c.v_bar, c.pi_bar);
            c.mu2_lambda = mean_square_precision_moment(c.b_bar, c.omega_bar, c.u_bar,
                                                        c.v_bar, c.pi_bar);
            c.lambda = precision_moment(c.u_bar, c.v_bar, c.pi_bar);
            c.mu.resize(T);
            c.var_cor.resize(T);
            for (std::size_t t = 0; t < T; ++t) {
                const double lam = floored(c.lambda[t], diag.clamped_lambda);
                c.mu[t] = c.mu_lambda[t] / lam;
                c.var_cor[t] =
                    std::max(c.mu2_lambda[t] / lam - c.mu[t] * c.mu[t], 0.0);
            }
            break;
        }
        case ComponentClass::poisson_rate:
            c.lambda = precision_moment(c.u_bar, c.v_bar, c.pi_bar);
            break;
    }
}

// A component carrying no evidence: zero jump, prior location probabilities,
// and a unit expected precision factor (v_bar matched to u_bar).
inline Component null_component(ComponentClass cls, std::size_t T, const PriorSpec& prior,
                                std::vector<double> log_prior, Diagnostics& diag) {
    Component c;
    c.cls = cls;
    c.log_prior = std::move(log_prior);
    auto nw = normalize_log_weights_full(c.log_prior);
    c.pi_bar = std::move(nw.prob);
    c.log_pi_bar = std::move(nw.log_prob);
    const bool has_mean = cls == ComponentClass::mean || cls == ComponentClass::meanvar;
    const bool has_scale = cls != ComponentClass::mean;
    if (has_mean) {
        c.b_bar.assign(T, 0.0);
        c.omega_bar.resize(T);
        for (std::size_t t = 0; t < T; ++t)
            c.omega_bar[t] = prior.omega0 + static_cast<double>(T - t);
    }
    if (has_scale) {
        c.u_bar.resize(T);
        for (std::size_t t = 0; t < T; ++t)
            c.u_bar[t] = prior.u0 + 0.5 * static_cast<double>(T - t);
        c.v_bar = c.u_bar;
    }
    refresh_moments(c, diag);
    return c;
}

inline std::vector<double> default_log_prior(ComponentClass cls, std::size_t T,
                                             const MichConfig& cfg) {
    if (!cfg.prior.pi.empty()) {
        if (cfg.prior.pi.size() != T) throw DomainError("backfit: prior length mismatch");
        LocationPrior p;
        p.pi = cfg.prior.pi;
        return log_prior(p);
    }
    if (cfg.uniform_locations || T == 1) return log_prior(uniform_prior(T));
    switch (cls) {
        case ComponentClass::mean: return log_prior(weighted_mean_prior(T));
        case ComponentClass::var: return log_prior(weighted_var_prior(T));
        case ComponentClass::meanvar: return log_prior(weighted_meanvar_prior(T));
        case ComponentClass::poisson_rate: return log_prior(uniform_prior(T));
    }
    throw DomainError("backfit: unknown component class");
}

inline double xlogx_ratio(double p, double log_p, double log_prior) {
    // pi_bar * log(pi_bar / pi); zero-probability locations contribute nothing
    if (p <= 0.0) return 0.0;
    return p * (log_p - log_prior);
}

}  // namespace detail

// Assemble r_tilde, lambda_bar, delta from scratch.
inline ResidualState compute_residual_state(const MichFit& fit, std::span<const double> y) {
    const std::size_t T = y.size();
    ResidualState s;
    s.r_tilde.assign(y.begin(), y.end());
    s.lambda_bar.assign(T, fit.lambda0);
    s.delta.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) s.r_tilde[t] -= fit.mu0;
    for (const Component& c : fit.components) {
        if (c.cls == ComponentClass::mean || c.cls == ComponentClass::meanvar) {
            for (std::size_t t = 0; t < T; ++t) {
                s.r_tilde[t] -= c.mu[t];
                s.delta[t] += c.var_cor[t];
            }
        }
        if (c.cls == ComponentClass::var || c.cls == ComponentClass::meanvar) {
            for (std::size_t t = 0; t < T; ++t) s.lambda_bar[t] *= c.lambda[t];
        }
    }
    return s;
}

// Variance-corrected rate and location priors for a var or meanvar update.
// The state passed in must already exclude the target component, so
// state.delta is the full delta for a var component and delta_{-j} for a
// joint one.
inline std::pair<std::vector<double>, std::vector<double>> corrected_priors(
    const ResidualState& state, double v0, std::span<const double> log_prior) {
    const std::size_t T = state.delta.size();
    std::vector<double> v_tilde(T), log_pi_tilde(T);
    double suffix = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        suffix += state.lambda_bar[i] * state.delta[i];
        v_tilde[i] = v0 + 0.5 * suffix;
    }
    double prefix = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        log_pi_tilde[i] = log_prior[i] - 0.5 * prefix;
        prefix += state.lambda_bar[i] * state.delta[i];
    }
    return {std::move(v_tilde), std::move(log_pi_tilde)};
}

// The objective F: expected complete-data log likelihood under q minus the
// KL divergence of every component block from its prior, dropping only the
// -(T/2) log(2 pi) constant. lgamma/digamma of the posterior shapes are
// passed in since they are shared by all var and meanvar components.
inline double compute_elbo(const MichFit& fit, std::span<const double> y,
                           const ResidualState& state,
                           std::span<const double> lgamma_u,
                           std::span<const double> digamma_u) {
    const std::size_t T = y.size();
    const double omega0 = fit.cfg.prior.omega0;
    const double u0 = fit.cfg.prior.u0;
    const double v0 = fit.cfg.prior.v0;
    const double lgamma_u0 = log_gamma(u0);
    const double log_omega0 = std::log(omega0);
    const double log_v0 = std::log(v0);

    double F = 0.5 * static_cast<double>(T) * std::log(fit.lambda0);
    for (std::size_t t = 0; t < T; ++t)
        F -= 0.5 * state.lambda_bar[t] *
             (state.r_tilde[t] * state.r_tilde[t] + state.delta[t]);

    for (const Component& c : fit.components) {
        for (std::size_t t = 0; t < T; ++t) {
            const double p = c.pi_bar[t];
            if (c.cls == ComponentClass::var || c.cls == ComponentClass::meanvar) {
                const double log_v = std::log(c.v_bar[t]);
                // E[log lambda_it] part of the likelihood
                F += 0.5 * static_cast<double>(T - t) * p * (digamma_u[t] - log_v);
                // Gamma block of the KL
                F -= p * (u0 * (log_v - log_v0) - lgamma_u[t] + lgamma_u0 +
                          (c.u_bar[t] - u0) * digamma_u[t] -
                          (c.v_bar[t] - v0) * c.u_bar[t] / c.v_bar[t]);
            }
            if (c.cls == ComponentClass::mean) {
                F -= p * (0.5 * (std::log(c.omega_bar[t]) - log_omega0) -
                          0.5 * (1.0 - omega0 * (1.0 / c.omega_bar[t] +
                                                 c.b_bar[t] * c.b_bar[t])));
            } else if (c.cls == ComponentClass::meanvar) {
                F -= p * (0.5 * (std::log(c.omega_bar[t]) - log_omega0) - 0.5 +
                          0.5 * omega0 / c.omega_bar[t] +
                          0.5 * omega0 * c.u_bar[t] * c.b_bar[t] * c.b_bar[t] / c.v_bar[t]);
            }
            F -= detail::xlogx_ratio(p, c.log_pi_bar[t], c.log_prior[t]);
        }
    }
    return F;
}

inline double compute_elbo(const MichFit& fit, std::span<const double> y,
                           const ResidualState& state) {
    const std::size_t T = y.size();
    std::vector<double> lgamma_u(T), digamma_u(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double u = fit.cfg.prior.u0 + 0.5 * static_cast<double>(T - t);
        lgamma_u[t] = log_gamma(u);
        digamma_u[t] = digamma(u);
    }
    return compute_elbo(fit, y, state, lgamma_u, digamma_u);
}

namespace detail {

inline void remove_mean_like(const Component& c, ResidualState& s) {
    for (std::size_t t = 0; t < s.r_tilde.size(); ++t) {
        s.r_tilde[t] += c.mu[t];
        s.delta[t] = std::max(s.delta[t] - c.var_cor[t], 0.0);
    }
}

inline void add_mean_like(const Component& c, ResidualState& s) {
    for (std::size_t t = 0; t < s.r_tilde.size(); ++t) {
        s.r_tilde[t] -= c.mu[t];
        s.delta[t] += c.var_cor[t];
    }
}

inline void remove_scale(const Component& c, ResidualState& s, Diagnostics& diag) {
    for (std::size_t t = 0; t < s.lambda_bar.size(); ++t)
        s.lambda_bar[t] /= floored(c.lambda[t], diag.clamped_lambda);
}

inline void add_scale(const Component& c, ResidualState& s) {
    for (std::size_t t = 0; t < s.lambda_bar.size(); ++t)
        s.lambda_bar[t] *= c.lambda[t];
}

}  // namespace detail

// One full coordinate sweep, updating joint components first, then mean,
// then variance, each against the partial residual state. lgamma_u carries
// the cached lgamma(u0 + (T-t+1)/2) values.
inline void backfit_sweep(MichFit& fit, ResidualState& s,
                          std::span<const double> lgamma_u) {
    const double omega0 = fit.cfg.prior.omega0;
    const double u0 = fit.cfg.prior.u0;
    const double v0 = fit.cfg.prior.v0;
    for (Component& c : fit.components) {
        switch (c.cls) {
            case ComponentClass::meanvar: {
                detail::remove_mean_like(c, s);
                detail::remove_scale(c, s, fit.diagnostics);
                auto [v_tilde, log_pi_tilde] = corrected_priors(s, v0, c.log_prior);
                auto post = meanvar_scp(s.r_tilde, s.lambda_bar, omega0, u0,
                                        v_tilde, log_pi_tilde, lgamma_u);
                fit.diagnostics.clamped_v += post.clamped;
                c.b_bar = std::move(post.b_bar);
                c.omega_bar = std::move(post.omega_bar);
                c.u_bar = std::move(post.u_bar);
                c.v_bar = std::move(post.v_bar);
                c.pi_bar = std::move(post.pi_bar);
                c.log_pi_bar = std::move(post.log_pi_bar);
                detail::refresh_moments(c, fit.diagnostics);
                detail::add_mean_like(c, s);
                detail::add_scale(c, s);
                break;
            }
            case ComponentClass::mean: {
                detail::remove_mean_like(c, s);
                auto post = mean_scp(s.r_tilde, s.lambda_bar, omega0, c.log_prior);
                c.b_bar = std::move(post.b_bar);
                c.omega_bar = std::move(post.omega_bar);
                c.pi_bar = std::move(post.pi_bar);
                c.log_pi_bar = std::move(post.log_pi_bar);
                detail::refresh_moments(c, fit.diagnostics);
                detail::add_mean_like(c, s);
                break;
            }
            case ComponentClass::var: {
                detail::remove_scale(c, s, fit.diagnostics);
                auto [v_tilde, log_pi_tilde] = corrected_priors(s, v0, c.log_prior);
                auto post =
                    var_scp(s.r_tilde, s.lambda_bar, u0, v_tilde, log_pi_tilde, lgamma_u);
                c.u_bar = std::move(post.u_bar);
                c.v_bar = std::move(post.v_bar);
                c.pi_bar = std::move(post.pi_bar);
                c.log_pi_bar = std::move(post.log_pi_bar);
                detail::refresh_moments(c, fit.diagnostics);
                detail::add_scale(c, s);
                break;
            }
            case ComponentClass::poisson_rate:
                throw DomainError("backfit_sweep: poisson components need backfit_poisson");
        }
    }
}

// Closed-form maximizers of the ELBO over the intercept and initial precision.
// lambda0 is kept inside a wide bracket so zero-variance inputs cannot run it
// off to infinity.
inline void eb_update(MichFit& fit, ResidualState& s) {
    const std::size_t T = s.r_tilde.size();
    double wsum = 0.0, wr = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const double l0 = s.lambda_bar[t] / fit.lambda0;
        wsum += l0;
        wr += l0 * (s.r_tilde[t] + fit.mu0);
    }
    const double mu0_new = wr / wsum;
    double q = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const double l0 = s.lambda_bar[t] / fit.lambda0;
        const double r0 = s.r_tilde[t] + fit.mu0 - mu0_new;
        q += l0 * (r0 * r0 + s.delta[t]);
    }
    const double lambda0_new =
        std::clamp(static_cast<double>(T) / q, 1e-15, 1e15);
    for (std::size_t t = 0; t < T; ++t) {
        s.r_tilde[t] += fit.mu0 - mu0_new;
        s.lambda_bar[t] *= lambda0_new / fit.lambda0;
    }
    fit.mu0 = mu0_new;
    fit.lambda0 = lambda0_new;
}

// Variational backfitting for the Gaussian univariate model. `init`, when
// given, supplies warm-start components (its counts may differ from cfg; null
// components are appended per class to make up the difference).
inline MichFit backfit(std::span<const double> y, const MichConfig& cfg,
                       const std::optional<MichFit>& init = std::nullopt) {
    detail::check_series(y, "backfit");
    const std::size_t T = y.size();
    if (cfg.L < 0 || cfg.K < 0 || cfg.J < 0)
        throw DomainError("backfit: component counts must be nonnegative");
    if (!(cfg.tol > 0.0)) throw DomainError("backfit: tol must be positive");

    MichFit fit;
    fit.cfg = cfg;
    fit.mu0 = cfg.mu0;
    fit.lambda0 = cfg.lambda0;
    bool degenerate = false;
    if (cfg.estimate_intercept) {
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(T);
        double ss = 0.0;
        for (double v : y) ss += (v - mean) * (v - mean);
        degenerate = ss == 0.0;
        if (!init || degenerate) {
            // start the nuisance parameters at their null-model estimates so
            // the components never see the raw level of the series
            fit.mu0 = mean;
            fit.lambda0 = degenerate
                              ? 1.0
                              : std::clamp(static_cast<double>(T) / ss, 1e-15, 1e15);
        }
    }

    // assemble components in update order, reusing warm-start posteriors
    const ComponentClass order[3] = {ComponentClass::meanvar, ComponentClass::mean,
                                     ComponentClass::var};
    const int want[3] = {cfg.J, cfg.L, cfg.K};
    for (int c = 0; c < 3; ++c) {
        int have = 0;
        if (init && !degenerate) {
            for (const Component& comp : init->components) {
                if (comp.cls == order[c] && have < want[c]) {
                    fit.components.push_back(comp);
                    detail::refresh_moments(fit.components.back(), fit.diagnostics);
                    ++have;
                }
            }
        }
        for (; have < want[c]; ++have)
            fit.components.push_back(detail::null_component(
                order[c], T, cfg.prior, detail::default_log_prior(order[c], T, cfg),
                fit.diagnostics));
    }
    if (init && !degenerate) {
        fit.mu0 = init->mu0;
        fit.lambda0 = init->lambda0;
    }

    // posterior shapes are data-independent; share their special functions
    std::vector<double> lgamma_u(T), digamma_u(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double u = cfg.prior.u0 + 0.5 * static_cast<double>(T - t);
        lgamma_u[t] = log_gamma(u);
        digamma_u[t] = digamma(u);
    }

    if (degenerate) {
        // a constant series carries no residual variation; keep every
        // component at its diffuse null state instead of letting the scale
        // blow up toward a point mass at t = 1
        ResidualState s = compute_residual_state(fit, y);
        fit.elbo_trace.push_back(compute_elbo(fit, y, s, lgamma_u, digamma_u));
        fit.iterations = 0;
        fit.converged = true;
        return fit;
    }

    for (long iter = 0; iter < cfg.max_iters; ++iter) {
        // rebuild from scratch each sweep so incremental drift cannot accumulate
        ResidualState s = compute_residual_state(fit, y);
        backfit_sweep(fit, s, lgamma_u);
        if (cfg.estimate_intercept) eb_update(fit, s);
        const double F = compute_elbo(fit, y, s, lgamma_u, digamma_u);
        if (!std::isfinite(F))
            throw NumericalError("backfit: ELBO is not finite", static_cast<int>(iter + 1));
        fit.elbo_trace.push_back(F);
        fit.iterations = static_cast<int>(iter + 1);
        const std::size_t n = fit.elbo_trace.size();
        if (n >= 2) {
            const double prev = fit.elbo_trace[n - 2];
            const double gain = F - prev;
            if (gain < 1e-12 || gain < cfg.tol * std::abs(prev)) {
                fit.converged = true;
                break;
            }
        }
    }
    return fit;
}

// Map a fit of the reversed series into a warm start for the forward series.
// A change active from reversed time tau onward covers original times up to
// T - tau + 1, i.e. the complementary segment starting at T - tau + 2, so the
// index map is t -> T - t + 2 with location 1 fixed. Jumps flip sign and
// scale jumps invert; the intercept and initial precision move to the other
// end of the series.
inline MichFit map_reversed_fit(const MichFit& rev, std::size_t T) {
    MichFit out = rev;
    out.elbo_trace.clear();
    out.iterations = 0;
    out.converged = false;
    // sigma(0) = 0, sigma(t) = T + 1 - t  (zero-based indices)
    auto sigma = [T](std::size_t t) { return t == 0 ? 0 : T + 1 - t - 1; };
    double total_jump = 0.0;
    double end_scale = 1.0;
    for (std::size_t ci = 0; ci < rev.components.size(); ++ci) {
        const Component& c = rev.components[ci];
        Component& m = out.components[ci];
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t st = sigma(t);
            m.pi_bar[st] = c.pi_bar[t];
            m.log_pi_bar[st] = c.log_pi_bar[t];
            if (!c.b_bar.empty()) {
                m.b_bar[st] = -c.b_bar[t];
                m.omega_bar[st] = c.omega_bar[t];
            }
            if (!c.u_bar.empty()) {
                m.u_bar[st] = c.u_bar[t];
                // expected scale jump inverts when the segment flips
                m.v_bar[st] = c.u_bar[t] * c.u_bar[t] / c.v_bar[t];
            }
        }
        if (!c.b_bar.empty()) {
            for (std::size_t t = 0; t < T; ++t) total_jump += c.b_bar[t] * c.pi_bar[t];
        }
        if (!c.u_bar.empty()) {
            auto lam = precision_moment(c.u_bar, c.v_bar, c.pi_bar);
            end_scale *= lam[T - 1];
        }
        detail::refresh_moments(m, out.diagnostics);
    }
    out.mu0 = rev.mu0 + total_jump;
    out.lambda0 = rev.lambda0 * end_scale;
    return out;
}

// Fit forward and, independently, on the reversed series; the reversed fit is
// mapped back and used to re-initialize a forward run. Keeps whichever fit
// ends with the larger ELBO.
inline MichFit reverse_restart_fit(std::span<const double> y, const MichConfig& cfg) {
    MichFit forward = backfit(y, cfg);
    if (!cfg.reverse_restart) return forward;
    std::vector<double> rev(y.rbegin(), y.rend());
    MichFit rfit = backfit(rev, cfg);
    MichFit restart = backfit(y, cfg, map_reversed_fit(rfit, y.size()));
    if (restart.elbo() > forward.elbo()) {
        restart.diagnostics.restarts = 1;
        return restart;
    }
    return forward;
}

}  // namespace mich

#endif  // MICH_ENGINE_HPP
