#ifndef MICH_SIMULATE_HPP
#define MICH_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mich/errors.hpp"

namespace mich {

enum class NoiseKind { gaussian, student, laplace, ma2 };

struct SimulationSpec {
    std::size_t T = 100;
    int n_changes = 2;       // J* (univariate) or L* (multivariate)
    std::size_t min_space = 15;
    double C = std::sqrt(200.0);
    std::size_t d = 1;
    double p = 1.0;          // proportion of active coordinates (multivariate)
    NoiseKind noise = NoiseKind::gaussian;
    double nu = 4.0;         // student degrees of freedom
    double theta = 0.3;      // MA(2) coefficient
    double rho = 0.0;        // spatial correlation (multivariate)
    bool vanishing = false;  // divide multivariate jumps by sqrt(d0)
    std::uint64_t seed = 1;
};

struct GroundTruth {
    std::vector<std::size_t> tau;       // zero-based change locations
    std::vector<double> mu_segments;    // levels mu_0..mu_J*
    std::vector<double> sigma_segments; // scales s_0..s_J*
    Eigen::MatrixXd mu_segments_multi;  // (J*+1) x d when multivariate
};

namespace detail {

// Change locations uniform on [T] subject to the minimum spacing against the
// padded endpoints tau_0 = 1, tau_{J+1} = T+1. Rejection sampling first, with
// a direct gap construction as the fallback for tight configurations.
inline std::vector<std::size_t> draw_changepoints(std::size_t T, int n, std::size_t space,
                                                  std::mt19937_64& rng) {
    if (n == 0) return {};
    if (static_cast<std::size_t>(n + 1) * space > T)
        throw DomainError("draw_changepoints: spacing condition is infeasible");
    std::uniform_int_distribution<std::size_t> unif(1, T);  // one-based draw
    std::vector<std::size_t> tau(static_cast<std::size_t>(n));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        for (auto& t : tau) t = unif(rng);
        std::sort(tau.begin(), tau.end());
        bool ok = tau.front() >= 1 + space && T + 1 - tau.back() >= space;
        for (std::size_t i = 1; ok && i < tau.size(); ++i)
            ok = tau[i] - tau[i - 1] >= space;
        if (ok) {
            for (auto& t : tau) --t;  // to zero-based
            return tau;
        }
    }
    // stars and bars: gaps g_i = space + e_i with e_0 + ... + e_n = slack, and
    // a uniform composition corresponds to a uniform n-subset of slack + n slots
    const std::size_t slack = T - static_cast<std::size_t>(n + 1) * space;
    const std::size_t slots = slack + static_cast<std::size_t>(n);
    std::vector<std::size_t> bars(static_cast<std::size_t>(n));
    std::vector<bool> used(slots + 1, false);
    std::uniform_int_distribution<std::size_t> pick(1, slots);
    for (auto& b : bars) {
        do { b = pick(rng); } while (used[b]);
        used[b] = true;
    }
    std::sort(bars.begin(), bars.end());
    std::vector<std::size_t> out(static_cast<std::size_t>(n));
    std::size_t prev = 1;  // one-based tau_0
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t e = bars[i] - i - 1;  // stars strictly before bar i
        const std::size_t extra = e - (i == 0 ? 0 : bars[i - 1] - i);
        prev = prev + space + extra;
        out[i] = prev - 1;  // to zero-based
    }
    return out;
}

// Unit-variance noise draw for each family.
class NoiseSource {
public:
    NoiseSource(const SimulationSpec& spec, std::mt19937_64& rng)
        : spec_(spec), rng_(rng) {
        if (spec.noise == NoiseKind::student && !(spec.nu > 2.0))
            throw DomainError("simulate: student noise needs nu > 2");
        if (spec.noise == NoiseKind::ma2) {
            e2_ = normal_(rng_);
            e1_ = normal_(rng_);
        }
    }

    double next() {
        switch (spec_.noise) {
            case NoiseKind::gaussian:
                return normal_(rng_);
            case NoiseKind::student: {
                std::student_t_distribution<double> st(spec_.nu);
                return st(rng_) / std::sqrt(spec_.nu / (spec_.nu - 2.0));
            }
            case NoiseKind::laplace: {
                std::exponential_distribution<double> ex(1.0);
                const double mag = ex(rng_);
                const double sign = normal_(rng_) >= 0.0 ? 1.0 : -1.0;
                return sign * mag / std::sqrt(2.0);
            }
            case NoiseKind::ma2: {
                const double e0 = normal_(rng_);
                const double th = spec_.theta;
                const double v = (e0 + th * e1_ + th * th * e2_) /
                                 std::sqrt(1.0 + th * th + th * th * th * th);
                e2_ = e1_;
                e1_ = e0;
                return v;
            }
        }
        return 0.0;
    }

private:
    const SimulationSpec& spec_;
    std::mt19937_64& rng_;
    std::normal_distribution<double> normal_;
    double e1_ = 0.0, e2_ = 0.0;
};

}  // namespace detail

// Mean level after a change: the step is scaled by the harder of the two
// neighboring segments, so every jump is comparably difficult to localize.
inline double sim1_next_level(double mu_prev, double s_prev, double s_next,
                              double left_gap, double right_gap, bool flip, double C) {
    const double denom =
        std::min(std::sqrt(right_gap) / s_next, std::sqrt(left_gap) / s_prev);
    return mu_prev + (flip ? -1.0 : 1.0) * C / denom;
}

// Univariate mean-variance study: scale jumps s_j = 2^U with U ~ Unif(-2,2),
// mean jumps sized so every change is comparably hard to localize.
inline std::pair<std::vector<double>, GroundTruth> generate_sim1(const SimulationSpec& spec) {
    if (spec.T == 0 || spec.n_changes < 0)
        throw DomainError("generate_sim1: bad specification");
    std::mt19937_64 rng(spec.seed);
    GroundTruth truth;
    truth.tau = detail::draw_changepoints(spec.T, spec.n_changes, spec.min_space, rng);

    const int J = spec.n_changes;
    truth.mu_segments.assign(static_cast<std::size_t>(J) + 1, 0.0);
    truth.sigma_segments.assign(static_cast<std::size_t>(J) + 1, 1.0);
    std::uniform_real_distribution<double> unif_u(-2.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    for (int j = 1; j <= J; ++j) {
        const double U = unif_u(rng);
        const bool xi = coin(rng);
        const double s = std::pow(2.0, U);
        truth.sigma_segments[static_cast<std::size_t>(j)] = s;
        // one-based boundaries with tau_0 = 1, tau_{J+1} = T+1
        const double right = static_cast<double>(
            (j == J ? spec.T + 1 : truth.tau[static_cast<std::size_t>(j)] + 1) -
            (truth.tau[static_cast<std::size_t>(j - 1)] + 1));
        const double left = static_cast<double>(
            (truth.tau[static_cast<std::size_t>(j - 1)] + 1) -
            (j == 1 ? 1 : truth.tau[static_cast<std::size_t>(j - 2)] + 1));
        const double s_prev = truth.sigma_segments[static_cast<std::size_t>(j - 1)];
        truth.mu_segments[static_cast<std::size_t>(j)] = sim1_next_level(
            truth.mu_segments[static_cast<std::size_t>(j - 1)], s_prev, s, left, right, xi,
            spec.C);
    }

    detail::NoiseSource noise(spec, rng);
    std::vector<double> y(spec.T);
    std::size_t seg = 0;
    for (std::size_t t = 0; t < spec.T; ++t) {
        while (seg < truth.tau.size() && t >= truth.tau[seg]) ++seg;
        y[t] = truth.mu_segments[seg] + truth.sigma_segments[seg] * noise.next();
    }
    return {std::move(y), std::move(truth)};
}

// Multivariate mean study: per-coordinate scales s_i = 2^U, an active set of
// floor(p d) coordinates, and jumps scaled by the neighboring segment length
// (optionally also by sqrt(d0) so the signal vanishes as d grows).
inline std::pair<Eigen::MatrixXd, GroundTruth> generate_sim2(const SimulationSpec& spec) {
    if (spec.T == 0 || spec.n_changes < 0 || spec.d == 0 || !(spec.p > 0.0 && spec.p <= 1.0))
        throw DomainError("generate_sim2: bad specification");
    std::mt19937_64 rng(spec.seed);
    GroundTruth truth;
    truth.tau = detail::draw_changepoints(spec.T, spec.n_changes, spec.min_space, rng);

    const std::size_t d = spec.d;
    std::uniform_real_distribution<double> unif_u(-2.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    Eigen::VectorXd s(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) s[static_cast<Eigen::Index>(i)] = std::pow(2.0, unif_u(rng));

    const std::size_t d0 =
        static_cast<std::size_t>(std::floor(spec.p * static_cast<double>(d)));
    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    for (std::size_t i = 0; i < d0; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(coords[i], coords[pick(rng)]);
    }
    std::vector<bool> active(d, false);
    for (std::size_t i = 0; i < d0; ++i) active[coords[i]] = true;

    const int L = spec.n_changes;
    truth.mu_segments_multi =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L) + 1, static_cast<Eigen::Index>(d));
    for (int l = 1; l <= L; ++l) {
        const double right = static_cast<double>(
            (l == L ? spec.T + 1 : truth.tau[static_cast<std::size_t>(l)] + 1) -
            (truth.tau[static_cast<std::size_t>(l - 1)] + 1));
        const double left = static_cast<double>(
            (truth.tau[static_cast<std::size_t>(l - 1)] + 1) -
            (l == 1 ? 1 : truth.tau[static_cast<std::size_t>(l - 2)] + 1));
        double denom = std::sqrt(std::min(right, left));
        if (spec.vanishing) denom *= std::sqrt(static_cast<double>(d0));
        for (std::size_t i = 0; i < d; ++i) {
            const bool xi = coin(rng);
            const double jump = active[i]
                                    ? spec.C * (xi ? -1.0 : 1.0) * s[static_cast<Eigen::Index>(i)] / denom
                                    : 0.0;
            truth.mu_segments_multi(l, static_cast<Eigen::Index>(i)) =
                truth.mu_segments_multi(l - 1, static_cast<Eigen::Index>(i)) + jump;
        }
    }

    // Sigma = diag(s_i^2), or rho^|i-j| s_i s_j under spatial correlation
    Eigen::MatrixXd Sigma(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            Sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::pow(spec.rho, std::abs(static_cast<double>(i) - static_cast<double>(j))) *
                s[static_cast<Eigen::Index>(i)] * s[static_cast<Eigen::Index>(j)];
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success)
        throw DomainError("generate_sim2: covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    std::normal_distribution<double> normal;
    Eigen::MatrixXd y(static_cast<Eigen::Index>(spec.T), static_cast<Eigen::Index>(d));
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    std::size_t seg = 0;
    for (std::size_t t = 0; t < spec.T; ++t) {
        while (seg < truth.tau.size() && t >= truth.tau[seg]) ++seg;
        for (std::size_t i = 0; i < d; ++i) z[static_cast<Eigen::Index>(i)] = normal(rng);
        y.row(static_cast<Eigen::Index>(t)) =
            truth.mu_segments_multi.row(static_cast<Eigen::Index>(seg)) +
            (chol * z).transpose();
    }
    return {std::move(y), std::move(truth)};
}

}  // namespace mich

#endif  // MICH_SIMULATE_HPP
