#include <doctest.h>

#include <cmath>
#include <vector>

#include "coarsemom/parallel.hpp"
#include "coarsemom/rng.hpp"

using namespace coarsemom;

TEST_CASE("counter rng is a pure function of (seed, stream, counter)") {
    CounterRng a(42, 3);
    CounterRng b(42, 3);
    for (std::uint64_t i = 0; i < 100; ++i) CHECK(a.uniform(i) == b.uniform(i));
    CounterRng c(42, 4);
    CounterRng d(43, 3);
    CHECK(a.uniform(0) != c.uniform(0));
    CHECK(a.uniform(0) != d.uniform(0));
}

TEST_CASE("counter rng normal moments") {
    CounterRng rng(7, 0);
    const long n = 1000000;
    double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = rng.normal(static_cast<std::uint64_t>(i));
        sum += z;
        sum2 += z * z;
        sum3 += z * z * z;
    }
    // 4 sigma bands at n = 1e6
    CHECK(std::fabs(sum / n) < 4.0 / std::sqrt(double(n)));
    CHECK(std::fabs(sum2 / n - 1.0) < 4.0 * std::sqrt(2.0 / double(n)));
    CHECK(std::fabs(sum3 / n) < 4.0 * std::sqrt(15.0 / double(n)));
}

TEST_CASE("counter rng pick is in range and roughly uniform") {
    CounterRng rng(11, 2);
    std::vector<long> counts(3, 0);
    const long n = 300000;
    for (long i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.pick(i, 3))];
    for (long c : counts) {
        CHECK(c > 0);
        CHECK(std::fabs(double(c) / n - 1.0 / 3.0) < 0.01);
    }
}

TEST_CASE("parallel_reduce is bit-stable and matches serial sums") {
    const long n = 100003;
    std::vector<double> values(n);
    CounterRng rng(5, 9);
    for (long i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = rng.normal(i);

    struct Acc {
        double sum = 0.0;
    };
    auto run = [&]() {
        return parallel_reduce<Acc>(
                   n,
                   [&](long b, long e, Acc& acc) {
                       for (long i = b; i < e; ++i) acc.sum += values[static_cast<std::size_t>(i)];
                   },
                   [](Acc& into, const Acc& part) { into.sum += part.sum; })
            .sum;
    };
    const double first = run();
    for (int t = 0; t < 3; ++t) CHECK(run() == first);

    // identical to the chunk-ordered serial reduction
    double serial = 0.0;
    for (long c = 0; c * kChunkSize < n; ++c) {
        double part = 0.0;
        for (long i = c * kChunkSize; i < std::min(n, (c + 1) * kChunkSize); ++i)
            part += values[static_cast<std::size_t>(i)];
        serial += part;
    }
    CHECK(first == serial);
}

TEST_CASE("parallel_reduce propagates worker exceptions") {
    CHECK_THROWS_AS(parallel_for(100000,
                                 [&](long b, long) {
                                     if (b >= 2048) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}
