#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mich/special.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double euler_gamma = 0.57721566490153286061;
}

TEST_CASE("log_gamma at known points") {
    CHECK_THAT(mich::log_gamma(1.0), WithinAbs(0.0, 1e-14));
    CHECK_THAT(mich::log_gamma(0.5), WithinAbs(0.5 * std::log(M_PI), 1e-13));
    // Gamma(10) = 9!
    double fact = 1.0;
    for (int k = 2; k <= 9; ++k) fact *= k;
    CHECK_THAT(mich::log_gamma(10.0), WithinRel(std::log(fact), 1e-13));
}

TEST_CASE("log_gamma matches the C library over the working range") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> expo(-3.0, 6.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::pow(10.0, expo(rng));
        const double want = std::lgamma(x);
        // relative tolerance, except near the zeros of ln Gamma at x = 1, 2
        CHECK_THAT(mich::log_gamma(x),
                   WithinAbs(want, 1e-12 * std::max(1.0, std::abs(want))));
    }
}

TEST_CASE("digamma at known points") {
    CHECK_THAT(mich::digamma(1.0), WithinAbs(-euler_gamma, 1e-12));
    CHECK_THAT(mich::digamma(2.0), WithinAbs(1.0 - euler_gamma, 1e-12));
    CHECK_THAT(mich::digamma(0.5), WithinAbs(-euler_gamma - 2.0 * std::log(2.0), 1e-12));
}

TEST_CASE("recurrence identities hold on a random grid") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> expo(-3.0, 6.0);
    std::uniform_real_distribution<double> expo_small(-3.0, 4.0);
    for (int i = 0; i < 500; ++i) {
        const double x = std::pow(10.0, expo(rng));
        CHECK_THAT(mich::digamma(x + 1.0) - mich::digamma(x), WithinAbs(1.0 / x, 1e-10));
        // the subtraction itself loses ~eps * lgamma(x) digits, so the gamma
        // identity is only resolvable below x ~ 1e4
        const double z = std::pow(10.0, expo_small(rng));
        CHECK_THAT(mich::log_gamma(z + 1.0) - mich::log_gamma(z),
                   WithinAbs(std::log(z), 1e-10 * std::max(1.0, std::abs(std::log(z)))));
    }
}

TEST_CASE("domain errors for non-positive arguments") {
    CHECK_THROWS_AS(mich::log_gamma(0.0), mich::DomainError);
    CHECK_THROWS_AS(mich::log_gamma(-1.0), mich::DomainError);
    CHECK_THROWS_AS(mich::digamma(0.0), mich::DomainError);
    CHECK_THROWS_AS(mich::digamma(-2.5), mich::DomainError);
}

TEST_CASE("normalize_log_weights basics") {
    auto p = mich::normalize_log_weights(std::vector<double>{0.0, 0.0});
    CHECK_THAT(p[0], WithinAbs(0.5, 1e-15));
    CHECK_THAT(p[1], WithinAbs(0.5, 1e-15));

    p = mich::normalize_log_weights(std::vector<double>{std::log(3.0), 0.0});
    CHECK_THAT(p[0], WithinAbs(0.75, 1e-14));
    CHECK_THAT(p[1], WithinAbs(0.25, 1e-14));

    // shifted far from zero; the oracle subtracts the shift by hand and
    // normalizes the small values directly
    const std::vector<double> big{1000.0, 1000.0 + std::log(2.0)};
    const std::vector<double> small{big[0] - 1000.0, big[1] - 1000.0};
    p = mich::normalize_log_weights(big);
    auto q = mich::normalize_log_weights(small);
    CHECK_THAT(p[0], WithinAbs(q[0], 1e-14));
    CHECK_THAT(p[1], WithinAbs(q[1], 1e-14));
    CHECK_THAT(p[0], WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(p[1], WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("normalize_log_weights is shift invariant") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> shift(-30.0, 30.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> w(20), v(20);
        const double c = shift(rng);
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = normal(rng);
            v[i] = w[i] + c;
        }
        auto a = mich::normalize_log_weights(w);
        auto b = mich::normalize_log_weights(v);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK_THAT(a[i], WithinAbs(b[i], 1e-14));
            sum += a[i];
        }
        CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
    }
    // far-from-zero shifts stay stable up to the input's own rounding
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> w(10), v(10);
        const double c = rep % 2 == 0 ? 650.0 : -650.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = normal(rng);
            v[i] = w[i] + c;
        }
        auto a = mich::normalize_log_weights(w);
        auto b = mich::normalize_log_weights(v);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK_THAT(a[i], WithinAbs(b[i], 1e-12));
    }
}

TEST_CASE("normalize handles impossible locations and rejects bad input") {
    auto p = mich::normalize_log_weights(std::vector<double>{mich::neg_inf, 0.0, mich::neg_inf});
    CHECK(p[0] == 0.0);
    CHECK(p[2] == 0.0);
    CHECK_THAT(p[1], WithinAbs(1.0, 1e-15));

    CHECK_THROWS_AS(
        mich::normalize_log_weights(std::vector<double>{mich::neg_inf, mich::neg_inf}),
        mich::DegenerateWeightsError);
    CHECK_THROWS_AS(mich::normalize_log_weights(std::vector<double>{0.0, std::nan("")}),
                    mich::DomainError);
}
