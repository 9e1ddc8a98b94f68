// Exact spectral-gap verification on enumerable ensembles, plus the ergodic
// averaging probe.
#include <doctest.h>

#include <cmath>

#include "homog/sgcheck.hpp"
#include "homog/stats.hpp"

using namespace homog;

namespace {
EnumerableEnsemble single_site_binary() {
    EnumerableEnsemble e;
    const GridLayout g = GridLayout::make(Box::centered(1, 2.0), 1.0);
    e.base_field = CoefficientField::isotropic(g, std::vector<double>(4, 1.0));
    e.site_anchors = {{0.0, 0.0, 0.0}};  // occupies [0,1)
    e.values = {Tensor::isotropic(1, 0.25), Tensor::isotropic(1, 1.0)};
    e.probabilities = {0.5, 0.5};
    return e;
}

double site_value(const CoefficientField& f) {
    // A11 at the site center (0.5); maps {0.25, 1} observations
    return f.entry_at(f.layout().flat(f.layout().cell_at({0.5, 0.0, 0.0})), 0, 0);
}
}  // namespace

TEST_CASE("exact variance by enumeration") {
    const EnumerableEnsemble ens = single_site_binary();
    SUBCASE("constant functional has zero variance") {
        EnumeratedFunctional ef(ens, [](const CoefficientField&) { return 3.0; });
        CHECK(ef.exact_variance() == doctest::Approx(0.0));
    }
    SUBCASE("single binary site: Bernoulli variance") {
        // X in {0,1} with prob 1/2 each -> Var = 1/4
        EnumeratedFunctional ef(ens, [](const CoefficientField& f) {
            return site_value(f) == 0.25 ? 0.0 : 1.0;
        });
        CHECK(ef.exact_variance() == doctest::Approx(0.25));
    }
    SUBCASE("two-site sum: Var = 1/2") {
        EnumerableEnsemble two = single_site_binary();
        two.site_anchors = {{-1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
        EnumeratedFunctional ef(two, [](const CoefficientField& f) {
            const auto& g = f.layout();
            auto v = [&](double x) {
                return f.entry_at(g.flat(g.cell_at({x, 0.0, 0.0})), 0, 0) == 0.25 ? 0.0 : 1.0;
            };
            return v(-0.5) + v(0.5);
        });
        CHECK(ef.exact_variance() == doctest::Approx(0.5));
    }
}

TEST_CASE("oscillation sum: locality and covering counts") {
    const EnumerableEnsemble ens = single_site_binary();
    SUBCASE("constant functional: zero oscillation") {
        EnumeratedFunctional ef(ens, [](const CoefficientField&) { return 1.0; });
        CHECK(ef.exact_oscillation_sum(1.0) == doctest::Approx(0.0));
    }
    SUBCASE("binary site value: sum = number of covering lattice points") {
        EnumeratedFunctional ef(ens, [](const CoefficientField& f) {
            return site_value(f) == 0.25 ? 0.0 : 1.0;
        });
        // site center 0.5; integer z with |0.5 - z| < 1: z in {0, 1} -> 2 covers
        CHECK(ef.exact_oscillation_sum(1.0) == doctest::Approx(2.0));
        // radius 2: z in {-1, 0, 1, 2} -> 4 covers
        CHECK(ef.exact_oscillation_sum(2.0) == doctest::Approx(4.0));
    }
    SUBCASE("functional ignoring the sites has zero oscillation") {
        EnumeratedFunctional ef(ens, [](const CoefficientField& f) {
            // reads a cell outside every site
            return f.entry_at(f.layout().flat(f.layout().cell_at({-1.5, 0.0, 0.0})), 0, 0);
        });
        CHECK(ef.exact_oscillation_sum(1.0) == doctest::Approx(0.0));
    }
}

TEST_CASE("oscillation sum is monotone in the ball radius") {
    const EnumerableEnsemble ens = single_site_binary();
    EnumeratedFunctional ef(ens, site_value);
    CHECK(ef.exact_oscillation_sum(2.0) >= ef.exact_oscillation_sum(1.0) - 1e-15);
}

TEST_CASE("verify_sg: exact ratios") {
    const EnumerableEnsemble ens = single_site_binary();
    SUBCASE("binary site value: ratio 1/8 with ell = 1") {
        EnumeratedFunctional ef(ens, [](const CoefficientField& f) {
            return site_value(f) == 0.25 ? 0.0 : 1.0;
        });
        const auto v = ef.verify_sg(1.0, 1.0);
        CHECK(v.pass);
        CHECK(v.ratio == doctest::Approx(0.25 / 2.0));
    }
    SUBCASE("constant functional: 0 <= 0 passes") {
        EnumeratedFunctional ef(ens, [](const CoefficientField&) { return 5.0; });
        const auto v = ef.verify_sg(1.0, 1.0);
        CHECK(v.pass);
        CHECK(v.ratio == 0.0);
    }
}

TEST_CASE("verify_q_sg: Bernoulli closed forms") {
    const EnumerableEnsemble ens = single_site_binary();
    EnumeratedFunctional ef(ens, [](const CoefficientField& f) {
        return site_value(f) == 0.25 ? 0.0 : 1.0;
    });
    SUBCASE("q = 1 with radius 2 ell agrees with verify_sg at 2 ell") {
        const auto q1 = ef.verify_q_sg(1.0, 1, 1.0);
        const auto sg2 = ef.verify_sg(2.0, 1.0);
        CHECK(q1.pass);
        CHECK(q1.lhs == doctest::Approx(sg2.variance));
        CHECK(q1.rhs == doctest::Approx(sg2.oscillation_sum));
    }
    SUBCASE("q = 2: LHS = <(X-1/2)^4>^{1/2} = 1/4, RHS exact") {
        const auto q2 = ef.verify_q_sg(1.0, 2, 2.0);
        CHECK(q2.lhs == doctest::Approx(0.25));
        // S(c) = 4 for every config (radius-2 balls each give osc 1)
        CHECK(q2.rhs == doctest::Approx(4.0));
        CHECK(q2.pass);
    }
    SUBCASE("constant functional: 0 <= 0") {
        EnumeratedFunctional cf(ens, [](const CoefficientField&) { return 2.0; });
        CHECK(cf.verify_q_sg(1.0, 2, 2.0).pass);
    }
}

TEST_CASE("battery: every entry passes with rho = 1 and the frozen q constants") {
    const auto entries = run_sg_battery();
    // >= 6 functionals x 3 ensembles, one family with 16 PDE-solving configs
    CHECK(entries.size() >= 18);
    bool has_pde16 = false;
    for (const auto& e : entries) {
        INFO(e.ensemble << " / " << e.functional);
        CHECK(e.sg.pass);
        CHECK(e.qsg1.pass);
        CHECK(e.qsg2.pass);
        if (e.functional == "corrector_energy_T4_L2") {
            has_pde16 = e.configurations == 16;
            CHECK(e.sg.ratio < 1.0);
        }
    }
    CHECK(has_pde16);
}

TEST_CASE("exact variance matches the sample variance on the enumerated stream") {
    // cross-module oracle: feed every configuration as a weighted sample stream
    const EnumerableEnsemble ens = single_site_binary();
    EnumeratedFunctional ef(ens, site_value);
    // equal weights here (p = 1/2 each), so the plain population variance applies
    const auto& xs = ef.values();
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v /= static_cast<double>(xs.size());
    CHECK(ef.exact_variance() == doctest::Approx(v));
}

TEST_CASE("ergodic average probe") {
    SUBCASE("constant ensemble: zero variance at every radius") {
        EnsembleSpec spec;
        spec.kind = EnsembleKind::ConstantMatrix;
        spec.dimension = 2;
        spec.cell_values = {{Tensor::identity(2), 1.0}};
        const auto rep = ergodic_average_probe(spec, {4.0, 8.0}, 16);
        for (const auto& row : rep.rows) CHECK(row.variance == doctest::Approx(0.0));
    }
    SUBCASE("poisson ensemble: CLT slope and unbiased mean") {
        EnsembleSpec spec;
        spec.kind = EnsembleKind::PoissonInclusion;
        spec.dimension = 2;
        spec.contrast = 0.25;
        spec.master_seed = 314;
        const auto rep = ergodic_average_probe(spec, {4.0, 8.0, 16.0}, 200);
        CHECK(rep.fitted_slope == doctest::Approx(-2.0).epsilon(0.2));
        // <A11> = lambda + (1 - lambda) exp(-pi) for unit-intensity unit balls
        const double expected = 0.25 + 0.75 * std::exp(-M_PI);
        for (const auto& row : rep.rows)
            CHECK(std::abs(row.mean - expected) <= 5.0 * std::sqrt(row.variance / 200.0));
    }
}
