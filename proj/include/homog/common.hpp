// Shared error types and small helpers used across the library.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace homog {

// Exit-code contract of the CLI: 2 config/usage, 3 data inconsistency, 4 solver failure.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec3& a, int d) { return std::sqrt(dot(a, a, d)); }

inline Vec3 unit_vector(int axis) {
    Vec3 v{0.0, 0.0, 0.0};
    v[axis] = 1.0;
    return v;
}

inline bool nearly_equal(double a, double b, double rel = 1e-12) {
    const double scale = std::max({std::abs(a), std::abs(b), 1.0});
    return std::abs(a - b) <= rel * scale;
}

}  // namespace homog
