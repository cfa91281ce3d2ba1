#ifndef MICH_ENGINE_MULTIVARIATE_HPP
#define MICH_ENGINE_MULTIVARIATE_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mich/engine.hpp"
#include "mich/priors.hpp"
#include "mich/scp_multivariate.hpp"

namespace mich {

struct MultiComponent {
    MultiMeanScpPosterior post;
    Eigen::MatrixXd mu_rot;  // E[mu_t] rows, rotated coordinates
    std::vector<double> log_prior;
};

struct MultiMichFit {
    MichConfig cfg;
    PrecisionSpectral prec;
    std::vector<MultiComponent> components;
    Eigen::VectorXd mu0;  // original coordinates
    std::vector<double> elbo_trace;
    int iterations = 0;
    bool converged = false;
    Diagnostics diagnostics;

    double elbo() const { return elbo_trace.empty() ? neg_inf : elbo_trace.back(); }
    Eigen::MatrixXd component_b_bar(std::size_t i) const {
        return components[i].post.b_bar(prec);
    }
};

namespace detail {

inline double multi_elbo(const MultiMichFit& fit, const Eigen::MatrixXd& resid_rot) {
    const std::size_t T = static_cast<std::size_t>(resid_rot.rows());
    const int d = fit.prec.dim();
    const double omega0 = fit.cfg.prior.omega0;

    double F = 0.5 * static_cast<double>(T) * fit.prec.log_det;
    for (std::size_t t = 0; t < T; ++t)
        for (int k = 0; k < d; ++k)
            F -= 0.5 * fit.prec.evals[k] * resid_rot(t, k) * resid_rot(t, k);

    for (const MultiComponent& c : fit.components) {
        // E||Lambda^1/2 mu_lt||^2 - ||Lambda^1/2 mu_bar_lt||^2 accumulates the
        // posterior variance of the component's mean path
        double prefix = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double p = c.post.pi_bar[t];
            double bb = 0.0, tr = 0.0, kl_quad = 0.0, tr_inv = 0.0, log_det = 0.0;
            for (int k = 0; k < d; ++k) {
                const double om = omega0 + c.post.S[t] * fit.prec.evals[k];
                const double b = c.post.b_rot(t, k);
                bb += fit.prec.evals[k] * b * b;
                tr += fit.prec.evals[k] / om;
                kl_quad += b * b;
                tr_inv += 1.0 / om;
                log_det += std::log(om);
            }
            prefix += p * (bb + tr);
            double mu_quad = 0.0;
            for (int k = 0; k < d; ++k)
                mu_quad += fit.prec.evals[k] * c.mu_rot(t, k) * c.mu_rot(t, k);
            F -= 0.5 * (prefix - mu_quad);
            // KL of the jump block plus the categorical block
            F -= p * 0.5 * (log_det - d * std::log(omega0) - d +
                            omega0 * (tr_inv + kl_quad));
            F -= xlogx_ratio(p, c.post.log_pi_bar[t], c.log_prior[t]);
        }
    }
    return F;
}

}  // namespace detail

// Backfitting for multivariate mean changes with a constant precision matrix,
// estimated from first differences when not supplied. Only mean (L)
// components are allowed.
inline MultiMichFit backfit_multivariate(
    const Eigen::MatrixXd& y, const MichConfig& cfg,
    const std::optional<Eigen::MatrixXd>& Lambda = std::nullopt,
    const std::optional<MultiMichFit>& init = std::nullopt) {
    const std::size_t T = static_cast<std::size_t>(y.rows());
    const int d = static_cast<int>(y.cols());
    if (T == 0 || d == 0) throw DomainError("backfit_multivariate: empty input");
    if (!y.allFinite()) throw DomainError("backfit_multivariate: non-finite observation");
    if (cfg.K != 0 || cfg.J != 0)
        throw DomainError("backfit_multivariate: only mean (L) components are supported");

    MultiMichFit fit;
    fit.cfg = cfg;
    if (init) {
        fit.prec = init->prec;
    } else {
        fit.prec = decompose_precision(Lambda ? *Lambda : estimate_precision(y));
    }

    const Eigen::MatrixXd y_rot = y * fit.prec.Q;

    std::vector<double> lp;
    if (!cfg.prior.pi.empty()) {
        if (cfg.prior.pi.size() != T)
            throw DomainError("backfit_multivariate: prior length mismatch");
        LocationPrior p;
        p.pi = cfg.prior.pi;
        lp = log_prior(p);
    } else if (cfg.uniform_locations || T == 1) {
        lp = log_prior(uniform_prior(T));
    } else {
        lp = log_prior(weighted_mean_prior(T, static_cast<std::size_t>(d)));
    }

    Eigen::VectorXd mu0_rot = Eigen::VectorXd::Zero(d);
    if (cfg.estimate_intercept && !init)
        mu0_rot = y_rot.colwise().mean().transpose();
    int have = 0;
    if (init) {
        mu0_rot = fit.prec.Q.transpose() * init->mu0;
        for (const MultiComponent& c : init->components) {
            if (have >= cfg.L) break;
            fit.components.push_back(c);
            fit.components.back().mu_rot =
                multi_mean_moment(c.post.b_rot, c.post.pi_bar);
            ++have;
        }
    }
    for (; have < cfg.L; ++have) {
        MultiComponent c;
        c.log_prior = lp;
        auto nw = normalize_log_weights_full(lp);
        c.post.omega0 = cfg.prior.omega0;
        c.post.pi_bar = std::move(nw.prob);
        c.post.log_pi_bar = std::move(nw.log_prob);
        c.post.b_rot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), d);
        c.post.S.resize(T);
        for (std::size_t t = 0; t < T; ++t) c.post.S[t] = static_cast<double>(T - t);
        c.mu_rot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), d);
        fit.components.push_back(std::move(c));
    }

    // rotated residual y - mu0 - sum_l E[mu_lt]
    Eigen::MatrixXd resid = y_rot;
    resid.rowwise() -= mu0_rot.transpose();
    for (const MultiComponent& c : fit.components) resid -= c.mu_rot;

    for (long iter = 0; iter < cfg.max_iters; ++iter) {
        for (MultiComponent& c : fit.components) {
            resid += c.mu_rot;
            c.post = multi_mean_scp_rotated(resid, fit.prec, {}, cfg.prior.omega0,
                                            c.log_prior);
            c.mu_rot = multi_mean_moment(c.post.b_rot, c.post.pi_bar);
            resid -= c.mu_rot;
        }
        if (cfg.estimate_intercept) {
            // with constant Lambda the evidence-maximizing intercept is the
            // plain average of the residual plus the current intercept
            Eigen::RowVectorXd shift = resid.colwise().mean();
            resid.rowwise() -= shift;
            mu0_rot += shift.transpose();
        }
        const double F = detail::multi_elbo(fit, resid);
        if (!std::isfinite(F))
            throw NumericalError("backfit_multivariate: ELBO is not finite",
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
    fit.mu0 = fit.prec.Q * mu0_rot;
    return fit;
}

// Reversed-series restart for the multivariate model, with the same index map
// as the univariate engine.
inline MultiMichFit reverse_restart_multivariate(
    const Eigen::MatrixXd& y, const MichConfig& cfg,
    const std::optional<Eigen::MatrixXd>& Lambda = std::nullopt) {
    MultiMichFit forward = backfit_multivariate(y, cfg, Lambda);
    if (!cfg.reverse_restart) return forward;
    const std::size_t T = static_cast<std::size_t>(y.rows());
    Eigen::MatrixXd rev = y.colwise().reverse();
    MultiMichFit rfit = backfit_multivariate(rev, cfg, Lambda);

    MultiMichFit warm = rfit;
    warm.elbo_trace.clear();
    auto sigma = [T](std::size_t t) { return t == 0 ? std::size_t{0} : T - t; };
    Eigen::RowVectorXd total_jump = Eigen::RowVectorXd::Zero(y.cols());
    for (std::size_t ci = 0; ci < rfit.components.size(); ++ci) {
        const MultiComponent& c = rfit.components[ci];
        MultiComponent& m = warm.components[ci];
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t st = sigma(t);
            m.post.pi_bar[st] = c.post.pi_bar[t];
            m.post.log_pi_bar[st] = c.post.log_pi_bar[t];
            m.post.b_rot.row(static_cast<Eigen::Index>(st)) =
                -c.post.b_rot.row(static_cast<Eigen::Index>(t));
            total_jump += c.post.pi_bar[t] * c.post.b_rot.row(static_cast<Eigen::Index>(t));
        }
        m.mu_rot = multi_mean_moment(m.post.b_rot, m.post.pi_bar);
    }
    warm.mu0 = rfit.mu0 + rfit.prec.Q * total_jump.transpose();
    MultiMichFit restart = backfit_multivariate(y, cfg, Lambda, warm);
    if (restart.elbo() > forward.elbo()) {
        restart.diagnostics.restarts = 1;
        return restart;
    }
    return forward;
}

}  // namespace mich

#endif  // MICH_ENGINE_MULTIVARIATE_HPP
