// Small dense d x d tensors (d <= 3) for per-cell coefficients, with the
// ellipticity checks used by every realized field: |A0 xi| <= |xi| and
// xi . A0 xi >= lambda |xi|^2.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "homog/common.hpp"

namespace homog {

struct Tensor {
    int d = 2;
    std::array<double, 9> a{};  // row-major d x d

    static Tensor identity(int d) {
        Tensor t;
        t.d = d;
        for (int i = 0; i < d; ++i) t(i, i) = 1.0;
        return t;
    }
    static Tensor isotropic(int d, double value) {
        Tensor t = identity(d);
        for (int i = 0; i < d; ++i) t(i, i) = value;
        return t;
    }

    double& operator()(int i, int j) { return a[i * 3 + j]; }
    double operator()(int i, int j) const { return a[i * 3 + j]; }

    Tensor transposed() const {
        Tensor t;
        t.d = d;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) t(i, j) = (*this)(j, i);
        return t;
    }

    Vec3 apply(const Vec3& x) const {
        Vec3 y{0.0, 0.0, 0.0};
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) y[i] += (*this)(i, j) * x[j];
        return y;
    }

    bool is_isotropic(double tol = 0.0) const {
        const double v = (*this)(0, 0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const double want = (i == j) ? v : 0.0;
                if (std::abs((*this)(i, j) - want) > tol) return false;
            }
        return true;
    }
    bool is_diagonal(double tol = 0.0) const {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (i != j && std::abs((*this)(i, j)) > tol) return false;
        return true;
    }
};

// Eigenvalues of a symmetric d x d matrix, ascending. Closed forms for d<=2,
// the trigonometric Cardano solution for d=3.
inline std::array<double, 3> symmetric_eigenvalues(const Tensor& s) {
    std::array<double, 3> ev{0.0, 0.0, 0.0};
    if (s.d == 1) {
        ev[0] = s(0, 0);
    } else if (s.d == 2) {
        const double tr = s(0, 0) + s(1, 1);
        const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        ev[0] = tr / 2.0 - disc;
        ev[1] = tr / 2.0 + disc;
    } else {
        const double p1 = s(0, 1) * s(0, 1) + s(0, 2) * s(0, 2) + s(1, 2) * s(1, 2);
        const double q = (s(0, 0) + s(1, 1) + s(2, 2)) / 3.0;
        const double p2 = (s(0, 0) - q) * (s(0, 0) - q) + (s(1, 1) - q) * (s(1, 1) - q) +
                          (s(2, 2) - q) * (s(2, 2) - q) + 2.0 * p1;
        const double p = std::sqrt(std::max(0.0, p2 / 6.0));
        if (p < 1e-300) {
            ev = {q, q, q};
        } else {
            // r = det((S - q I)/p) / 2, clamped into [-1,1]
            Tensor b = s;
            for (int i = 0; i < 3; ++i) b(i, i) -= q;
            double det = 0.0;
            det += b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1));
            det -= b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0));
            det += b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
            const double r = std::clamp(det / (2.0 * p * p * p), -1.0, 1.0);
            const double phi = std::acos(r) / 3.0;
            ev[2] = q + 2.0 * p * std::cos(phi);
            ev[0] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
            ev[1] = 3.0 * q - ev[0] - ev[2];
        }
    }
    std::sort(ev.begin(), ev.begin() + s.d);
    return ev;
}

inline double min_symmetric_part_eigenvalue(const Tensor& t) {
    Tensor s;
    s.d = t.d;
    for (int i = 0; i < t.d; ++i)
        for (int j = 0; j < t.d; ++j) s(i, j) = 0.5 * (t(i, j) + t(j, i));
    return symmetric_eigenvalues(s)[0];
}

inline double operator_norm(const Tensor& t) {
    // largest singular value: sqrt(max eig of A^T A)
    Tensor g;
    g.d = t.d;
    for (int i = 0; i < t.d; ++i)
        for (int j = 0; j < t.d; ++j) {
            double s = 0.0;
            for (int k = 0; k < t.d; ++k) s += t(k, i) * t(k, j);
            g(i, j) = s;
        }
    const auto ev = symmetric_eigenvalues(g);
    return std::sqrt(std::max(0.0, ev[t.d - 1]));
}

// Membership in Omega_0: bounded (op norm <= 1) and elliptic (sym part >= lambda).
inline bool is_admissible_tensor(const Tensor& t, double lambda, double slack = 1e-12) {
    return operator_norm(t) <= 1.0 + slack && min_symmetric_part_eigenvalue(t) >= lambda - slack;
}

}  // namespace homog
