#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mich/priors.hpp"

using Catch::Matchers::WithinAbs;

namespace {
constexpr double euler_gamma = 0.57721566490153286061;
// digamma at half integers, from psi(1/2) = -gamma - 2 ln 2 and the recurrence
const double psi_half = -euler_gamma - 2.0 * std::log(2.0);
const double psi_one = -euler_gamma;
const double psi_three_half = psi_half + 2.0;
}  // namespace

TEST_CASE("uniform prior") {
    auto p = mich::uniform_prior(4);
    for (double v : p.pi) CHECK_THAT(v, WithinAbs(0.25, 1e-15));
    CHECK(mich::uniform_prior(1).pi[0] == 1.0);
    CHECK_THROWS_AS(mich::uniform_prior(0), mich::DomainError);
}

TEST_CASE("weighted mean prior closed form") {
    auto p1 = mich::weighted_mean_prior(2, 1);
    const double z = std::sqrt(2.0) + 1.0;
    CHECK_THAT(p1.pi[0], WithinAbs(std::sqrt(2.0) / z, 1e-12));
    CHECK_THAT(p1.pi[1], WithinAbs(1.0 / z, 1e-12));

    auto p2 = mich::weighted_mean_prior(2, 2);
    CHECK_THAT(p2.pi[0], WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(p2.pi[1], WithinAbs(1.0 / 3.0, 1e-12));

    for (std::size_t T : {5, 17, 60}) {
        for (std::size_t d : {1, 3}) {
            auto p = mich::weighted_mean_prior(T, d);
            double sum = 0.0;
            for (std::size_t t = 1; t < T; ++t) CHECK(p.pi[t] <= p.pi[t - 1] + 1e-15);
            for (double v : p.pi) sum += v;
            CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("weighted var prior recurrence, hand unrolled at T = 3") {
    // increments computed here with the C library lgamma and exact digamma values
    const double inc1 = std::lgamma(1.5) - std::lgamma(1.0) + 0.5 + 1.0 * psi_one -
                        1.5 * psi_three_half;
    const double inc2 = std::lgamma(1.0) - std::lgamma(0.5) + 0.5 + 0.5 * psi_half -
                        1.0 * psi_one;
    const double w0 = 1.0, w1 = std::exp(inc1), w2 = std::exp(inc1 + inc2);
    const double z = w0 + w1 + w2;

    auto p = mich::weighted_var_prior(3);
    CHECK_THAT(p.pi[0], WithinAbs(w0 / z, 1e-12));
    CHECK_THAT(p.pi[1], WithinAbs(w1 / z, 1e-12));
    CHECK_THAT(p.pi[2], WithinAbs(w2 / z, 1e-12));
}

TEST_CASE("weighted var prior approaches the mean recurrence deep in the series") {
    const std::size_t T = 500;
    auto p = mich::weighted_var_prior(T);
    const std::size_t t = 100;  // one-based position
    const double inc = std::log(p.pi[t]) - std::log(p.pi[t - 1]);
    const double mean_inc = 0.5 * std::log(static_cast<double>(T - t) /
                                           static_cast<double>(T - t + 1));
    CHECK_THAT(inc, WithinAbs(mean_inc, 1e-3));
}

TEST_CASE("weighted meanvar prior, hand unrolled at T = 4") {
    const double inc1 = 0.5 + 0.5 * std::log(3.0 / 4.0) + std::lgamma(2.0) -
                        std::lgamma(1.5) + 1.5 * psi_one - 2.0 * psi_three_half;
    const double inc2 = 0.5 + 0.5 * std::log(2.0 / 3.0) + std::lgamma(1.5) -
                        std::lgamma(1.0) + 1.0 * psi_half - 1.5 * psi_one;
    const double w0 = 1.0, w1 = std::exp(inc1), w2 = std::exp(inc1 + inc2);
    const double z = w0 + w1 + w2;

    auto p = mich::weighted_meanvar_prior(4);
    CHECK_THAT(p.pi[0], WithinAbs(w0 / z, 1e-12));
    CHECK_THAT(p.pi[1], WithinAbs(w1 / z, 1e-12));
    CHECK_THAT(p.pi[2], WithinAbs(w2 / z, 1e-12));
    CHECK(p.pi[3] == 0.0);
    CHECK(p.zero_tail == 1);
}

TEST_CASE("meanvar prior pins the last location to zero") {
    for (std::size_t T : {2, 3, 10, 101}) {
        auto p = mich::weighted_meanvar_prior(T);
        CHECK(p.pi[T - 1] == 0.0);
        double sum = 0.0;
        for (double v : p.pi) sum += v;
        CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
    }
    auto tiny = mich::weighted_meanvar_prior(2);
    CHECK_THAT(tiny.pi[0], WithinAbs(1.0, 1e-15));
}

TEST_CASE("weighted priors stay within the log T envelope") {
    for (std::size_t T : {10, 50, 400}) {
        const double bound = (1.0 + 0.5 + 2.0) * std::log(static_cast<double>(T));
        for (auto kind : {mich::PriorKind::weighted_mean, mich::PriorKind::weighted_var,
                          mich::PriorKind::weighted_meanvar}) {
            auto p = mich::make_prior(kind, T, 1);
            for (double v : p.pi)
                if (v > 0.0) CHECK(std::abs(std::log(v)) <= bound);
        }
    }
}
