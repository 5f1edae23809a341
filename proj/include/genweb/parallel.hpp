#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace genweb {

inline int default_workers() {
    if (const char* env = std::getenv("GENWEB_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return w;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Replica-parallel reduction with a fixed chunk layout. Chunks are merged in
/// index order, so the result is byte-identical for any worker count.
template <class Acc, class PerReplica>
Acc parallel_reduce(std::int64_t replicas, int workers, PerReplica fn,
                    std::int64_t chunk = 256) {
    if (workers <= 0) workers = default_workers();
    const std::int64_t nchunks = (replicas + chunk - 1) / chunk;
    std::vector<Acc> partial(static_cast<std::size_t>(nchunks));
    std::atomic<std::int64_t> next{0};

    auto body = [&]() {
        for (;;) {
            std::int64_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            Acc acc;
            const std::int64_t lo = c * chunk;
            const std::int64_t hi = std::min(replicas, lo + chunk);
            for (std::int64_t r = lo; r < hi; ++r) fn(r, acc);
            partial[static_cast<std::size_t>(c)] = std::move(acc);
        }
    };

    if (workers == 1 || nchunks <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        int nthreads = static_cast<int>(std::min<std::int64_t>(workers, nchunks));
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }

    Acc total;
    for (auto& p : partial) total.merge(p);
    return total;
}

}  // namespace genweb
