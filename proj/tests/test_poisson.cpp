#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mich/engine_poisson.hpp"
#include "mich/postprocess.hpp"

using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> poisson_series(std::mt19937_64& rng, std::size_t T, double rate1,
                                   double rate2, std::size_t tau) {
    std::vector<double> y(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::poisson_distribution<long> pois(t < tau ? rate1 : rate2);
        y[t] = static_cast<double>(pois(rng));
    }
    return y;
}

}  // namespace

TEST_CASE("single rate component equals poisson_scp") {
    std::mt19937_64 rng(151);
    auto y = poisson_series(rng, 60, 2.0, 6.0, 30);
    mich::MichConfig cfg;
    cfg.L = 1;
    cfg.model = mich::Model::poisson;
    cfg.estimate_intercept = false;
    cfg.lambda0 = 1.0;
    auto fit = mich::backfit_poisson(y, cfg);
    REQUIRE(fit.converged);
    std::vector<double> ones(y.size(), 1.0);
    auto direct = mich::poisson_scp(y, ones, cfg.prior.u0, cfg.prior.v0,
                                    fit.components[0].log_prior);
    for (std::size_t t = 0; t < y.size(); ++t) {
        CHECK_THAT(fit.components[0].u_bar[t], WithinAbs(direct.u_bar[t], 1e-12));
        CHECK_THAT(fit.components[0].v_bar[t], WithinAbs(direct.v_bar[t], 1e-10));
        CHECK_THAT(fit.components[0].pi_bar[t], WithinAbs(direct.pi_bar[t], 1e-10));
    }
}

TEST_CASE("poisson ELBO analogue never decreases") {
    std::mt19937_64 rng(157);
    for (int rep = 0; rep < 30; ++rep) {
        auto y = poisson_series(rng, 120, 1.0 + rep % 4, 5.0, 60);
        mich::MichConfig cfg;
        cfg.L = 2;
        cfg.model = mich::Model::poisson;
        auto fit = mich::backfit_poisson(y, cfg);
        for (std::size_t i = 1; i < fit.elbo_trace.size(); ++i)
            CHECK(fit.elbo_trace[i] >=
                  fit.elbo_trace[i - 1] - 1e-8 * std::abs(fit.elbo_trace[i - 1]));
    }
}

TEST_CASE("all-zero counts floor the rate and stay diffuse") {
    std::vector<double> y(50, 0.0);
    mich::MichConfig cfg;
    cfg.L = 1;
    cfg.model = mich::Model::poisson;
    auto fit = mich::backfit_poisson(y, cfg);
    CHECK(fit.lambda0 == 1e-12);
    auto rep = mich::summarize(fit, y.size(), 0.1, 0.5);
    CHECK(rep.N_hat == 0);
}

TEST_CASE("a strong rate jump is localized") {
    std::mt19937_64 rng(163);
    auto y = poisson_series(rng, 200, 1.0, 5.0, 100);
    mich::MichConfig cfg;
    cfg.L = 1;
    cfg.model = mich::Model::poisson;
    auto fit = mich::backfit_poisson(y, cfg);
    const std::size_t map = mich::map_estimate(fit.components[0].pi_bar);
    CHECK(std::abs(static_cast<double>(map) - 100.0) <= 10.0);
}

TEST_CASE("poisson input validation") {
    mich::MichConfig cfg;
    cfg.L = 1;
    cfg.model = mich::Model::poisson;
    CHECK_THROWS_AS(mich::backfit_poisson(std::vector<double>{1.0, 2.5}, cfg),
                    mich::DomainError);
    cfg.K = 1;
    CHECK_THROWS_AS(mich::backfit_poisson(std::vector<double>{1.0, 2.0}, cfg),
                    mich::DomainError);
}
