// Tensors, grid layout, RNG streams, statistics helpers.
#include <doctest.h>

#include <cmath>
#include <set>

#include "homog/geometry.hpp"
#include "homog/rng.hpp"
#include "homog/stats.hpp"
#include "homog/tensor.hpp"

using namespace homog;

TEST_CASE("symmetric eigenvalues: closed forms") {
    Tensor t = Tensor::identity(2);
    t(0, 0) = 3.0;
    t(1, 1) = 1.0;
    auto ev = symmetric_eigenvalues(t);
    CHECK(ev[0] == doctest::Approx(1.0));
    CHECK(ev[1] == doctest::Approx(3.0));

    Tensor s = Tensor::identity(3);
    s(0, 1) = s(1, 0) = 0.5;
    s(2, 2) = 2.0;
    ev = symmetric_eigenvalues(s);
    CHECK(ev[0] == doctest::Approx(0.5));
    CHECK(ev[1] == doctest::Approx(1.5));
    CHECK(ev[2] == doctest::Approx(2.0));
}

TEST_CASE("admissible tensors: Omega_0 membership") {
    CHECK(is_admissible_tensor(Tensor::identity(2), 1.0));
    CHECK(is_admissible_tensor(Tensor::isotropic(2, 0.25), 0.25));
    CHECK_FALSE(is_admissible_tensor(Tensor::isotropic(2, 1.5), 0.25));  // |A xi| > |xi|
    CHECK_FALSE(is_admissible_tensor(Tensor::isotropic(2, 0.1), 0.25)); // below lambda
    // non-symmetric but admissible: rotation-like with small skew
    Tensor skew = Tensor::isotropic(2, 0.6);
    skew(0, 1) = 0.2;
    skew(1, 0) = -0.2;
    CHECK(is_admissible_tensor(skew, 0.25));
}

TEST_CASE("grid layout: indexing round trip and centers") {
    const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.5);
    CHECK(g.n[0] == 8);
    CHECK(g.cells() == 64);
    for (std::int64_t c = 0; c < g.cells(); ++c) CHECK(g.flat(g.unflat(c)) == c);
    const MultiIndex m = g.cell_at({0.1, 0.1, 0.0});
    const Vec3 x = g.center(m);
    CHECK(std::abs(x[0] - 0.25) < 1e-12);
    CHECK_THROWS_AS(GridLayout::make(Box::centered(2, 1.0), 0.3), ConfigError);
}

TEST_CASE("rng: streams are deterministic and tag-separated") {
    Rng a(derive_stream_key(42, 7, StreamTag::PoissonPoints));
    Rng b(derive_stream_key(42, 7, StreamTag::PoissonPoints));
    Rng c(derive_stream_key(42, 7, StreamTag::Checkerboard));
    bool same = true, differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        same = same && (va == b.next_u64());
        differs = differs || (va != c.next_u64());
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("rng: poisson moments at small and large mean") {
    // |mean - m| <= 4 sqrt(m/n), and the analogous bound for the variance
    for (double m : {4.0, 16.0, 300.0}) {
        Rng rng(derive_stream_key(1234, 0, StreamTag::Generic));
        const int n = 20000;
        std::vector<double> xs(n);
        for (auto& x : xs) x = static_cast<double>(rng.next_poisson(m));
        CHECK(std::abs(mean(xs) - m) <= 4.0 * std::sqrt(m / n));
        CHECK(std::abs(sample_variance(xs) - m) <= 4.0 * m * std::sqrt(2.0 / n) + 0.05 * m);
    }
}

TEST_CASE("stats: jackknife of the mean matches the closed form") {
    // two-sample convention: jackknife variance of the mean = (a-b)^2 / 4
    const std::vector<double> two{3.0, 7.0};
    CHECK(jackknife_variance_of_mean(two) == doctest::Approx((3.0 - 7.0) * (3.0 - 7.0) / 4.0));
    CHECK(jackknife_variance(two, [](const std::vector<double>& xs) { return mean(xs); }) ==
          doctest::Approx(4.0));
}

TEST_CASE("stats: KS test separates distinct distributions and accepts equal ones") {
    Rng rng(99);
    std::vector<double> a(500), b(500), c(500);
    for (auto& x : a) x = rng.next_u01();
    for (auto& x : b) x = rng.next_u01();
    for (auto& x : c) x = rng.next_u01() + 0.4;
    CHECK(ks_two_sample(a, b).p_value > 0.01);
    CHECK(ks_two_sample(a, c).p_value < 0.001);
}

TEST_CASE("fit_loglog_slope: exact power law and guards") {
    std::vector<double> x{1.0, 2.0, 4.0, 8.0};
    std::vector<double> y;
    for (double xi : x) y.push_back(7.0 * std::pow(xi, -2.0));
    const SlopeFit f = fit_loglog_slope(x, y);
    CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(f.stderr_slope == doctest::Approx(0.0));
    CHECK(f.r2 == doctest::Approx(1.0));

    SUBCASE("noisy power law recovers slope") {
        Rng rng(5);
        std::vector<double> xs, ys;
        for (int i = 0; i < 12; ++i) {
            const double xv = std::pow(2.0, i * 0.5);
            xs.push_back(xv);
            ys.push_back(std::pow(xv, -1.0) * (1.0 + 0.01 * (rng.next_u01() - 0.5)));
        }
        const SlopeFit g = fit_loglog_slope(xs, ys);
        CHECK(g.slope == doctest::Approx(-1.0).epsilon(0.05));
    }
    SUBCASE("degenerate abscissa rejected") {
        CHECK_THROWS_WITH_AS(fit_loglog_slope({1.0, 1.0, 2.0}, {1.0, 2.0, 3.0}),
                             doctest::Contains("degenerate abscissa"), DataError);
    }
    SUBCASE("nonpositive values rejected") {
        CHECK_THROWS_AS(fit_loglog_slope({1.0, 2.0, 3.0}, {1.0, -2.0, 3.0}), DataError);
    }
    SUBCASE("fewer than 3 points rejected") {
        CHECK_THROWS_AS(fit_loglog_slope({1.0, 2.0}, {1.0, 2.0}), DataError);
    }
}

TEST_CASE("percentile: linear interpolation") {
    std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    CHECK(percentile(xs, 0.0) == doctest::Approx(1.0));
    CHECK(percentile(xs, 100.0) == doctest::Approx(4.0));
    CHECK(percentile(xs, 50.0) == doctest::Approx(2.5));
}
