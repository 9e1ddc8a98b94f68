// Grid calculus: gradients, divergence, summation by parts, masks, dumps.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "homog/grid.hpp"
#include "homog/rng.hpp"

using namespace homog;

namespace {
GridFunction sampled(const GridLayout& g, double (*f)(const Vec3&)) {
    GridFunction u = GridFunction::zeros(g);
    for (std::int64_t c = 0; c < g.cells(); ++c) u.v[static_cast<std::size_t>(c)] = f(g.center(g.unflat(c)));
    return u;
}
}  // namespace

TEST_CASE("gradient: constants and linear profiles") {
    const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.25);
    SUBCASE("constant function has zero interior faces") {
        GridFunction u = GridFunction::zeros(g);
        for (auto& v : u.v) v = 3.5;
        const FaceField gr = gradient(u);
        // interior faces along axis 0
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 1; i < g.n[0]; ++i) {
                MultiIndex m;
                m[0] = i;
                m[1] = j;
                CHECK(gr.comp[0][static_cast<std::size_t>(gr.face_flat(0, m))] ==
                      doctest::Approx(0.0));
            }
    }
    SUBCASE("linear profile x1 gives exact unit interior gradient") {
        const GridFunction u = sampled(g, [](const Vec3& x) { return x[0]; });
        const FaceField gr = gradient(u);
        MultiIndex m;
        m[0] = 4;
        m[1] = 3;
        CHECK(gr.comp[0][static_cast<std::size_t>(gr.face_flat(0, m))] == doctest::Approx(1.0));
        CHECK(gr.comp[1][static_cast<std::size_t>(gr.face_flat(1, m))] == doctest::Approx(0.0));
    }
}

TEST_CASE("summation by parts holds exactly for interior-supported fields") {
    const GridLayout g = GridLayout::make(Box::centered(2, 1.0), 0.25);
    Rng rng(7);
    GridFunction u = GridFunction::zeros(g);
    for (auto& v : u.v) v = rng.next_u01() - 0.5;
    // interior-supported random face field
    FaceField q = FaceField::zeros(g);
    for (int axis = 0; axis < 2; ++axis)
        for (std::int64_t f = 0; f < g.faces(axis); ++f)
            q.comp[axis][static_cast<std::size_t>(f)] = rng.next_u01() - 0.5;
    // zero out boundary faces so the test field is interior-supported
    for (int axis = 0; axis < 2; ++axis) {
        for (std::int64_t f = 0; f < g.faces(axis); ++f) {
            std::int64_t rest = f;
            std::int64_t idx[2];
            for (int a = 0; a < 2; ++a) {
                const std::int64_t na = (a == axis) ? g.n[a] + 1 : g.n[a];
                idx[a] = rest % na;
                rest /= na;
            }
            if (idx[axis] == 0 || idx[axis] == g.n[axis])
                q.comp[axis][static_cast<std::size_t>(f)] = 0.0;
        }
    }
    const FaceField gu = gradient(u);
    const GridFunction divq = divergence(q);
    double lhs = 0.0, rhs = 0.0;
    for (int axis = 0; axis < 2; ++axis)
        for (std::size_t f = 0; f < q.comp[axis].size(); ++f)
            lhs += gu.comp[axis][f] * q.comp[axis][f];
    for (std::size_t c = 0; c < u.v.size(); ++c) rhs += u.v[c] * divq.v[c];
    CHECK(lhs == doctest::Approx(-rhs).epsilon(1e-12));
}

TEST_CASE("cell_gradient: reconstruction exactness") {
    const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.25);
    SUBCASE("constant face field") {
        FaceField q = FaceField::zeros(g);
        for (int axis = 0; axis < 2; ++axis)
            for (auto& v : q.comp[axis]) v = axis == 0 ? 2.0 : -1.0;
        const auto cg = cell_gradient(q);
        CHECK(cg[0][10] == doctest::Approx(2.0));
        CHECK(cg[1][10] == doctest::Approx(-1.0));
    }
    SUBCASE("linear profile recovered in the interior") {
        const GridFunction u = sampled(g, [](const Vec3& x) { return x[0]; });
        const auto cg = cell_gradient(gradient(u));
        MultiIndex m;
        m[0] = 4;
        m[1] = 4;
        CHECK(cg[0][static_cast<std::size_t>(g.flat(m))] == doctest::Approx(1.0));
        CHECK(cg[1][static_cast<std::size_t>(g.flat(m))] == doctest::Approx(0.0));
    }
}

TEST_CASE("averaging mask: normalization, support, slope bound") {
    for (double L : {4.0, 8.0}) {
        const GridLayout g = GridLayout::make(Box::centered(2, L + 2.0), 0.25);
        const AveragingMask mask = AveragingMask::make(g, L);
        // discrete mass exactly 1
        double total = 0.0;
        for (double e : mask.eta) total += e;
        CHECK(total * g.cell_volume() == doctest::Approx(1.0).epsilon(1e-13));
        // support inside B_L, nonnegative
        double max_eta = 0.0;
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            const double e = mask.eta[static_cast<std::size_t>(c)];
            CHECK(e >= 0.0);
            if (r >= L) CHECK(e == 0.0);
            max_eta = std::max(max_eta, e);
        }
        // finite-difference slope bounded by C L^{-d-1} with C independent of L
        double max_slope = 0.0;
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            MultiIndex m = g.unflat(c);
            if (m[0] + 1 >= g.n[0]) continue;
            MultiIndex m2 = m;
            m2[0] += 1;
            max_slope = std::max(max_slope,
                                 std::abs(mask.eta[static_cast<std::size_t>(g.flat(m2))] -
                                          mask.eta[static_cast<std::size_t>(g.flat(m))]) /
                                     g.h);
        }
        CHECK(max_slope <= 4.0 * std::pow(L, -3.0));
    }
}

TEST_CASE("masked_average: normalization, bounds, odd symmetry") {
    const GridLayout g = GridLayout::make(Box::centered(2, 10.0), 0.25);
    const AveragingMask mask = AveragingMask::make(g, 8.0);
    SUBCASE("constant function averages to itself") {
        GridFunction w = GridFunction::zeros(g);
        for (auto& v : w.v) v = 1.0;
        CHECK(masked_average(w, mask) == doctest::Approx(1.0).epsilon(1e-13));
    }
    SUBCASE("mask applied to itself is positive and below its max") {
        GridFunction w;
        w.layout = g;
        w.v = mask.eta;
        const double val = masked_average(w, mask);
        double max_eta = 0.0;
        for (double e : mask.eta) max_eta = std::max(max_eta, e);
        CHECK(val > 0.0);
        CHECK(val <= max_eta);
    }
    SUBCASE("odd function averages to zero") {
        GridFunction w = GridFunction::zeros(g);
        for (std::int64_t c = 0; c < g.cells(); ++c)
            w.v[static_cast<std::size_t>(c)] = g.center(g.unflat(c))[0];
        CHECK(masked_average(w, mask) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("support overflow is rejected") {
        CHECK_THROWS_AS(AveragingMask::make(g, 11.0), ConfigError);
    }
}

TEST_CASE("coefficient field: storage modes, transpose, crop, hash") {
    const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.5);
    std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
        Tensor t = Tensor::isotropic(2, 0.5);
        t(0, 1) = 0.1;
        t(1, 0) = -0.1;
        cells[c] = t;
    }
    const CoefficientField f = CoefficientField::full(g, cells);
    CHECK_FALSE(f.symmetric());
    const CoefficientField ft = f.transposed();
    CHECK(ft.entry_at(3, 0, 1) == doctest::Approx(-0.1));
    CHECK(f.entry_at(3, 0, 1) == doctest::Approx(0.1));

    SUBCASE("crop preserves values and alignment") {
        std::vector<double> scalars(static_cast<std::size_t>(g.cells()));
        for (std::size_t c = 0; c < scalars.size(); ++c) scalars[c] = static_cast<double>(c);
        const CoefficientField iso = CoefficientField::isotropic(g, scalars);
        const CoefficientField sub = iso.crop(Box::centered(2, 1.0));
        CHECK(sub.layout().cells() == 16);
        const Vec3 probe{0.75, -0.75, 0.0};
        CHECK(sub.scalar_at(sub.layout().flat(sub.layout().cell_at(probe))) ==
              doctest::Approx(iso.scalar_at(g.flat(g.cell_at(probe)))));
        CHECK_THROWS_AS(iso.crop(Box::centered(2, 1.1)), ConfigError);
    }
    SUBCASE("content hash distinguishes fields") {
        std::vector<double> a(static_cast<std::size_t>(g.cells()), 1.0);
        std::vector<double> b = a;
        b[7] = 0.25;
        CHECK(CoefficientField::isotropic(g, a).content_hash() !=
              CoefficientField::isotropic(g, b).content_hash());
        CHECK(CoefficientField::isotropic(g, a).content_hash() ==
              CoefficientField::isotropic(g, a).content_hash());
    }
}

TEST_CASE("grid function dumps: binary header and csv") {
    const GridLayout g = GridLayout::make(Box::centered(2, 1.0), 0.5);
    GridFunction u = GridFunction::zeros(g);
    for (std::size_t c = 0; c < u.v.size(); ++c) u.v[c] = static_cast<double>(c) * 0.5;
    const std::string bin = "/tmp/homog_test_grid.bin";
    write_grid_function_binary(u, bin);
    std::ifstream is(bin, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    CHECK(std::string(magic, 4) == "HGD1");
    std::uint32_t kind = 9, d = 0;
    is.read(reinterpret_cast<char*>(&kind), 4);
    is.read(reinterpret_cast<char*>(&d), 4);
    CHECK(kind == 0);
    CHECK(d == 2);
    std::remove(bin.c_str());
}
