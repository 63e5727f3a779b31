#include <doctest.h>

#include <cmath>
#include <random>

#include "coarsemom/gauss.hpp"
#include "coarsemom/rng.hpp"
#include "ref_oracles.hpp"

using namespace coarsemom;

TEST_CASE("std_pdf closed-form values and symmetry") {
    CHECK(std_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(std_pdf(1.0) == doctest::Approx(0.2419707245191434).epsilon(1e-12));
    CHECK(std_pdf(-1.0) == std_pdf(1.0));
    CHECK(std_pdf(kInf) == 0.0);
    CHECK(std_pdf(3.5) > 0.0);
}

TEST_CASE("std_cdf against independent series/continued-fraction oracle") {
    CHECK(std_cdf(0.0) == 0.5);
    CHECK(std_cdf(-kInf) == 0.0);
    CHECK(std_cdf(kInf) == 1.0);
    CHECK(std_cdf(1.96) == doctest::Approx(0.9750021048517796).epsilon(1e-12));
    for (double z = -37.0; z <= 37.0; z += 0.403) {
        CHECK(std::fabs(std_cdf(z) - refo::cdf(z)) <= 1e-12);
        CHECK(std::fabs(std_ccdf(z) - (1.0 - refo::cdf(z))) <= 1e-12);
    }
    // monotone
    double prev = 0.0;
    for (double z = -10.0; z <= 10.0; z += 0.01) {
        CHECK(std_cdf(z) >= prev);
        prev = std_cdf(z);
    }
}

TEST_CASE("std_quantile round trips and domain errors") {
    CHECK(std_quantile(0.5) == 0.0);
    CHECK(std_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK(std_quantile(std_cdf(1.0)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(std_quantile(0.0), std::domain_error);
    CHECK_THROWS_AS(std_quantile(1.0), std::domain_error);
    CHECK_THROWS_AS(std_quantile(-0.3), std::domain_error);

    std::mt19937_64 gen(12345);
    std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
    for (int t = 0; t < 1000; ++t) {
        const double p = unif(gen);
        CHECK(std::fabs(std_cdf(std_quantile(p)) - p) <= 1e-9);
    }
}

TEST_CASE("trunc_mean closed forms") {
    CHECK(trunc_mean({-1.7, 1.7}, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(trunc_mean({-kInf, 0.0}, 0.0) == doctest::Approx(-0.7978845608028654).epsilon(1e-12));
    const double expect = (std_pdf(0.0) - std_pdf(1.0)) / (std_cdf(1.0) - std_cdf(0.0));
    CHECK(trunc_mean({0.0, 1.0}, 0.0) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(expect == doctest::Approx(0.4598622292864266).epsilon(1e-12));
    CHECK(trunc_mean({-kInf, kInf}, 3.0) == 0.0);
}

TEST_CASE("trunc_mean law of iterated expectations over a full partition") {
    const double grid[] = {-2.3, -0.7, 0.1, 1.9};
    for (double shift : {-3.0, -0.4, 0.0, 1.2, 5.0}) {
        double total = 0.0;
        double prev = -kInf;
        for (int j = 0; j <= 4; ++j) {
            const double upper = j < 4 ? grid[j] : kInf;
            const Interval iv{prev, upper};
            const double mass = interval_mass(prev - shift, upper == kInf ? kInf : upper - shift);
            total += mass * trunc_mean(iv, shift);
            prev = upper;
        }
        CHECK(std::fabs(total) <= 1e-10);
    }
}

TEST_CASE("trunc_mean is strictly decreasing in the shift") {
    // moving the window left along a fixed standard normal lowers the mean
    const Interval iv{-0.5, 2.0};
    double prev = kInf;
    for (int t = 0; t < 100; ++t) {
        const double s = -5.0 + 0.1 * t;
        const double m = trunc_mean(iv, s);
        CHECK(m < prev);
        prev = m;
    }
}

TEST_CASE("trunc_mean deep-tail stability and degeneracy") {
    // one-sided windows stay finite and sane far out in the tail
    const double m = trunc_mean({-kInf, 0.0}, 30.0);  // window (-inf, -30]
    CHECK(m < -30.0);
    CHECK(m > -30.1);
    const double u = trunc_mean({0.0, kInf}, -30.0);  // window (30, inf)
    CHECK(u > 30.0);
    CHECK(u < 30.1);
    CHECK_THROWS_AS(trunc_mean({8.0, 8.1}, -50.0), degenerate_cell_error);
}

TEST_CASE("trunc_mean_dshift matches finite differences and is negative") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> unif(-3.0, 3.0);
    for (int t = 0; t < 200; ++t) {
        double a = unif(gen), b = unif(gen);
        if (a > b) std::swap(a, b);
        if (b - a < 0.05) b = a + 0.05;
        Interval iv{a, b};
        if (t % 3 == 0) iv.lower = -kInf;
        if (t % 5 == 0) iv.upper = kInf;
        if (iv.whole_line()) continue;
        const double s = unif(gen);
        const double h = 1e-6;
        const double fd = (trunc_mean(iv, s + h) - trunc_mean(iv, s - h)) / (2.0 * h);
        const double an = trunc_mean_dshift(iv, s);
        CHECK(an < 0.0);
        CHECK(std::fabs(fd - an) <= 1e-6 * std::max(1.0, std::fabs(an)));
    }
}

TEST_CASE("bvn rectangle probabilities: closed forms") {
    CHECK(bvn_rect_prob({-kInf, 0.0}, {-kInf, 0.0}, 0.0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(bvn_rect_prob({-kInf, 0.0}, {-kInf, 0.0}, 0.5) ==
          doctest::Approx(0.25 + std::asin(0.5) / (2.0 * M_PI)).epsilon(1e-12));
    CHECK(bvn_rect_prob({-kInf, kInf}, {-kInf, 0.0}, 0.9) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(bvn_rect_prob({-1.0, 1.0}, {-1.0, 1.0}, 1.0), std::domain_error);
    CHECK_THROWS_AS(bvn_rect_prob({-1.0, 1.0}, {-1.0, 1.0}, -1.2), std::domain_error);
}

TEST_CASE("bvn rectangle probabilities against quadrature oracle") {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> unif(-2.5, 2.5);
    std::uniform_real_distribution<double> rho_dist(-0.98, 0.98);
    for (int t = 0; t < 150; ++t) {
        double a1 = unif(gen), b1 = unif(gen);
        double a2 = unif(gen), b2 = unif(gen);
        if (a1 > b1) std::swap(a1, b1);
        if (a2 > b2) std::swap(a2, b2);
        b1 += 0.01;
        b2 += 0.01;
        const double rho = rho_dist(gen);
        Interval x{a1, b1}, y{a2, b2};
        if (t % 4 == 0) x.lower = -kInf;
        if (t % 5 == 0) y.upper = kInf;
        const double got = bvn_rect_prob(x, y, rho);
        const double want = refo::bvn_rect(x.lower, x.upper, y.lower, y.upper, rho);
        CHECK(std::fabs(got - want) <= 1e-8);
    }
}

TEST_CASE("bvn rectangle probabilities against dense monte carlo") {
    struct Rect {
        Interval x, y;
        double rho;
    };
    const Rect rects[] = {
        {{-0.8, 0.9}, {-1.2, 0.4}, 0.6},
        {{-kInf, 0.3}, {-0.5, kInf}, -0.75},
        {{0.1, 2.0}, {0.2, 1.5}, 0.95},
    };
    const long n = 2000000;
    for (const Rect& r : rects) {
        const double mix = std::sqrt(1.0 - r.rho * r.rho);
        long hits = 0;
        coarsemom::CounterRng rng(2718, 1);
        for (long i = 0; i < n; ++i) {
            const double z1 = rng.normal(static_cast<std::uint64_t>(2 * i));
            const double z2 = r.rho * z1 + mix * rng.normal(static_cast<std::uint64_t>(2 * i + 1));
            if (z1 > r.x.lower && z1 <= r.x.upper && z2 > r.y.lower && z2 <= r.y.upper) ++hits;
        }
        const double p = bvn_rect_prob(r.x, r.y, r.rho);
        const double se = std::sqrt(p * (1.0 - p) / double(n));
        CHECK(std::fabs(double(hits) / double(n) - p) <= 4.0 * se);
    }
}

TEST_CASE("bvn rectangle probabilities sum to one over a product partition") {
    const double g1[] = {-1.3, -0.2, 0.4, 2.1};
    const double g2[] = {-0.8, 0.5};
    for (double rho : {-0.95, -0.5, 0.0, 0.3, 0.85, 0.97}) {
        double total = 0.0;
        double lo1 = -kInf;
        for (int i = 0; i <= 4; ++i) {
            const double hi1 = i < 4 ? g1[i] : kInf;
            double lo2 = -kInf;
            for (int j = 0; j <= 2; ++j) {
                const double hi2 = j < 2 ? g2[j] : kInf;
                total += bvn_rect_prob({lo1, hi1}, {lo2, hi2}, rho);
                lo2 = hi2;
            }
            lo1 = hi1;
        }
        CHECK(std::fabs(total - 1.0) <= 1e-8);
    }
}

TEST_CASE("bvn cdf marginalizes correctly") {
    for (double rho : {-0.7, 0.0, 0.6, 0.95}) {
        for (double x : {-1.5, 0.0, 0.8}) {
            CHECK(std::fabs(bvn_cdf(x, kInf, rho) - std_cdf(x)) <= 1e-12);
            CHECK(std::fabs(bvn_cdf(kInf, x, rho) - std_cdf(x)) <= 1e-12);
        }
    }
}
