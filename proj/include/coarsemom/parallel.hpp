#pragma once

// Deterministic chunked reductions. Work is split into fixed-size chunks,
// each chunk is summed sequentially, and chunk partials are combined in
// chunk order -- results are bit-stable regardless of thread count.
// COARSEMOM_THREADS caps the worker pool.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace coarsemom {

inline int max_threads() {
    if (const char* env = std::getenv("COARSEMOM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline constexpr long kChunkSize = 2048;

// Acc must be default-constructible; body(begin, end, acc) accumulates a
// half-open index range; combine(total, part) folds partials in chunk order.
// Exceptions thrown by workers are rethrown on the calling thread.
template <typename Acc, typename Body, typename Combine>
Acc parallel_reduce(long n, Body body, Combine combine) {
    const long n_chunks = (n + kChunkSize - 1) / kChunkSize;
    if (n_chunks <= 0) return Acc{};

    const int n_threads = static_cast<int>(std::min<long>(max_threads(), n_chunks));
    std::vector<Acc> partials(static_cast<std::size_t>(n_chunks));

    if (n_threads <= 1) {
        for (long c = 0; c < n_chunks; ++c)
            body(c * kChunkSize, std::min(n, (c + 1) * kChunkSize), partials[static_cast<std::size_t>(c)]);
    } else {
        std::exception_ptr error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back([&, t]() {
                try {
                    for (long c = t; c < n_chunks; c += n_threads)
                        body(c * kChunkSize, std::min(n, (c + 1) * kChunkSize),
                             partials[static_cast<std::size_t>(c)]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }

    Acc total{};
    for (long c = 0; c < n_chunks; ++c) combine(total, partials[static_cast<std::size_t>(c)]);
    return total;
}

// Plain parallel loop over [0, n) in chunks; no reduction.
template <typename Body>
void parallel_for(long n, Body body) {
    struct Empty {};
    parallel_reduce<Empty>(
        n, [&](long b, long e, Empty&) { body(b, e); }, [](Empty&, const Empty&) {});
}

} // namespace coarsemom
