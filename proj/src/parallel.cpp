#include "homog/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace homog {

namespace {
std::atomic<int> g_workers{0};
thread_local bool t_inside_parallel = false;

int detect_workers() {
    if (const char* env = std::getenv("HOMOG_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}
}  // namespace

int worker_count() {
    int w = g_workers.load(std::memory_order_relaxed);
    if (w <= 0) {
        w = detect_workers();
        g_workers.store(w, std::memory_order_relaxed);
    }
    return w;
}

void set_worker_count(int n) { g_workers.store(n > 0 ? n : 1, std::memory_order_relaxed); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int w = worker_count();
    if (w <= 1 || n < 2 || t_inside_parallel) {
        fn(0, n);
        return;
    }
    const int threads = static_cast<int>(std::min<std::int64_t>(w, n));
    const std::int64_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        const std::int64_t b = t * chunk;
        const std::int64_t e = std::min<std::int64_t>(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] {
            t_inside_parallel = true;
            fn(b, e);
            t_inside_parallel = false;
        });
    }
    for (auto& th : pool) th.join();
}

namespace {
constexpr std::int64_t kChunk = 4096;
}

double det_dot(const double* a, const double* b, std::int64_t n) {
    const std::int64_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);
    parallel_for(nchunks, [&](std::int64_t cb, std::int64_t ce) {
        for (std::int64_t c = cb; c < ce; ++c) {
            const std::int64_t lo = c * kChunk;
            const std::int64_t hi = std::min(n, lo + kChunk);
            double s = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) s += a[i] * b[i];
            partial[static_cast<std::size_t>(c)] = s;
        }
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_sum(const double* a, std::int64_t n) {
    const std::int64_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);
    parallel_for(nchunks, [&](std::int64_t cb, std::int64_t ce) {
        for (std::int64_t c = cb; c < ce; ++c) {
            const std::int64_t lo = c * kChunk;
            const std::int64_t hi = std::min(n, lo + kChunk);
            double s = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) s += a[i];
            partial[static_cast<std::size_t>(c)] = s;
        }
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace homog
