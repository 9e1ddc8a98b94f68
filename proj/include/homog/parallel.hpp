// Minimal worker-pool parallelism. Reductions use fixed chunk boundaries so
// results are bitwise identical for any worker count.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace homog {

// Global worker count: HOMOG_WORKERS env var, overridable via set_worker_count.
int worker_count();
void set_worker_count(int n);

// Runs fn(begin, end) over [0, n) split into contiguous ranges, one per worker.
// Nested calls run serially.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

// Deterministic dot product / sums: fixed 4096-element chunks accumulated in
// index order, independent of the worker count.
double det_dot(const double* a, const double* b, std::int64_t n);
double det_sum(const double* a, std::int64_t n);

}  // namespace homog
