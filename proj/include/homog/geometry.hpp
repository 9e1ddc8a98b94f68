// Axis-aligned boxes and the structured cell-centered grid layout shared by
// coefficient fields, grid functions and face fields.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "homog/common.hpp"

namespace homog {

struct Box {
    int d = 2;
    Vec3 lo{0.0, 0.0, 0.0};
    Vec3 hi{0.0, 0.0, 0.0};

    static Box centered(int d, double radius) {
        Box b;
        b.d = d;
        for (int i = 0; i < d; ++i) {
            b.lo[i] = -radius;
            b.hi[i] = radius;
        }
        return b;
    }

    double edge(int axis) const { return hi[axis] - lo[axis]; }
    double volume() const {
        double v = 1.0;
        for (int i = 0; i < d; ++i) v *= edge(i);
        return v;
    }
    bool finite() const {
        for (int i = 0; i < d; ++i)
            if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || hi[i] < lo[i]) return false;
        return true;
    }
    bool contains(const Vec3& x) const {
        for (int i = 0; i < d; ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
    Box grown(double margin) const {
        Box b = *this;
        for (int i = 0; i < d; ++i) {
            b.lo[i] -= margin;
            b.hi[i] += margin;
        }
        return b;
    }
};

struct MultiIndex {
    std::array<int, 3> i{0, 0, 0};
    int& operator[](int k) { return i[k]; }
    int operator[](int k) const { return i[k]; }
};

// Cell-centered grid: n[a] cells along axis a, spacing h, cell (i,j,k) has
// center lo + h*(i+1/2, j+1/2, k+1/2). Flat order: axis 0 fastest.
struct GridLayout {
    int d = 2;
    Box box;
    double h = 0.25;
    std::array<std::int64_t, 3> n{1, 1, 1};

    static GridLayout make(const Box& box, double h) {
        if (!box.finite()) throw ConfigError("grid: box is not finite");
        if (!(h > 0.0)) throw ConfigError("grid: spacing must be positive");
        GridLayout g;
        g.d = box.d;
        g.box = box;
        g.h = h;
        for (int a = 0; a < box.d; ++a) {
            const double cells = box.edge(a) / h;
            const auto rounded = static_cast<std::int64_t>(std::llround(cells));
            if (rounded < 1 || std::abs(cells - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, cells))
                throw ConfigError("grid: spacing does not divide box edge along axis " + std::to_string(a));
            g.n[a] = rounded;
        }
        return g;
    }

    std::int64_t cells() const {
        std::int64_t c = 1;
        for (int a = 0; a < d; ++a) c *= n[a];
        return c;
    }
    double cell_volume() const { return std::pow(h, d); }

    std::int64_t flat(const MultiIndex& m) const {
        std::int64_t f = m[d - 1];
        for (int a = d - 2; a >= 0; --a) f = f * n[a] + m[a];
        return f;
    }
    MultiIndex unflat(std::int64_t f) const {
        MultiIndex m;
        for (int a = 0; a < d; ++a) {
            m[a] = static_cast<int>(f % n[a]);
            f /= n[a];
        }
        return m;
    }
    Vec3 center(const MultiIndex& m) const {
        Vec3 x{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) x[a] = box.lo[a] + h * (m[a] + 0.5);
        return x;
    }
    // Cell whose closed cube contains x (clamped to the grid).
    MultiIndex cell_at(const Vec3& x) const {
        MultiIndex m;
        for (int a = 0; a < d; ++a) {
            auto i = static_cast<std::int64_t>(std::floor((x[a] - box.lo[a]) / h));
            if (i < 0) i = 0;
            if (i >= n[a]) i = n[a] - 1;
            m[a] = static_cast<int>(i);
        }
        return m;
    }
    bool same_shape(const GridLayout& o) const {
        return d == o.d && n == o.n && nearly_equal(h, o.h) &&
               nearly_equal(box.lo[0], o.box.lo[0]) && nearly_equal(box.hi[0], o.box.hi[0]);
    }

    // Number of faces orthogonal to `axis` (n+1 along that axis).
    std::int64_t faces(int axis) const {
        std::int64_t c = 1;
        for (int a = 0; a < d; ++a) c *= (a == axis) ? n[a] + 1 : n[a];
        return c;
    }
};

}  // namespace homog
