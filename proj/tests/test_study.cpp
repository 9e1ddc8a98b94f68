// Study orchestration: synthetic-data oracles for the fits, degenerate cases,
// reproducibility, coupled sampling, CSV round trips, resume validation.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "homog/rng.hpp"
#include "homog/study.hpp"

using namespace homog;

namespace {
StudyPlan tiny_plan(EnsembleKind kind) {
    StudyPlan plan;
    plan.ensemble.kind = kind;
    plan.ensemble.dimension = 2;
    plan.ensemble.contrast = 0.25;
    plan.ensemble.master_seed = 7;
    if (kind != EnsembleKind::PoissonInclusion)
        plan.ensemble.cell_values = {{Tensor::isotropic(2, 0.25), 0.5},
                                     {Tensor::isotropic(2, 1.0), 0.5}};
    plan.L_values = {4.0};
    plan.T_values = {4.0};
    plan.truncation_multiplier = 2.0;
    plan.h = 0.25;
    plan.n_samples = 8;
    plan.solver.tol = 1e-8;
    return plan;
}
}  // namespace

TEST_CASE("synthetic variance oracle: injected L^-d noise recovers slope -d") {
    Rng rng(2027);
    std::vector<VarianceFitInput> cells;
    for (double L : {8.0, 16.0, 32.0, 64.0}) {
        VarianceFitInput cell;
        cell.abscissa = L;
        for (int i = 0; i < 400; ++i)
            cell.values.push_back(3.0 * std::pow(L, -1.0) * rng.next_normal());
        cells.push_back(cell);  // Var ~ 9 L^-2
    }
    const SlopeFit fit = fit_variance_slope(cells);
    CHECK(std::abs(fit.slope - (-2.0)) <= 2.0 * fit.stderr_slope + 0.15);
}

TEST_CASE("variance study on a constant ensemble is degenerate with zero variance") {
    StudyPlan plan = tiny_plan(EnsembleKind::ConstantMatrix);
    plan.ensemble.cell_values = {{Tensor::isotropic(2, 0.5), 1.0}};
    plan.L_values = {4.0, 4.0, 4.0};
    plan.T_values = {4.0, 4.0, 4.0};
    // distinct L needed for a fit; keep them equal so the degenerate flag fires
    const auto rec = run_variance_study(plan);
    CHECK(rec.degenerate);
    for (const auto& c : rec.cells) {
        CHECK_FALSE(c.failed);
        CHECK(c.var_without == doctest::Approx(0.0));
        CHECK(c.mean_without == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("variance study on a small Poisson plan: reproducible and audited") {
    StudyPlan plan = tiny_plan(EnsembleKind::PoissonInclusion);
    const auto rec1 = run_variance_study(plan);
    const auto rec2 = run_variance_study(plan);
    REQUIRE(rec1.samples.size() == rec2.samples.size());
    for (std::size_t i = 0; i < rec1.samples.size(); ++i) {
        CHECK(rec1.samples[i].value_without == rec2.samples[i].value_without);
        CHECK(rec1.samples[i].field_hash == rec2.samples[i].field_hash);
        CHECK(rec1.samples[i].residual <= plan.solver.tol);
        CHECK(rec1.samples[i].iterations > 0);
        CHECK(rec1.samples[i].seed != 0);
    }
    SUBCASE("zero-order identity per sample") {
        for (const auto& r : rec1.samples)
            CHECK(r.value_with == doctest::Approx(r.value_without + r.zero_order).epsilon(1e-14));
    }
}

TEST_CASE("synthetic systematic oracle: A_T = A + 3/T gives slope -1 and exact reference") {
    // exercise the reduction path on synthetic rows through the public record
    // shapes: feed per-sample values with no noise
    std::vector<double> Ts{16.0, 32.0, 64.0, 128.0, 256.0};
    std::vector<std::vector<double>> per_T;
    for (double T : Ts) per_T.push_back(std::vector<double>(8, 2.0 + 3.0 / T));
    // reference = order-2 Richardson on the last three
    const double ref = (8.0 * per_T[4][0] - 6.0 * per_T[3][0] + per_T[2][0]) / 3.0;
    CHECK(ref == doctest::Approx(2.0).epsilon(1e-12));
    std::vector<double> fitT, fitE;
    for (std::size_t k = 0; k + 2 < Ts.size(); ++k) {
        fitT.push_back(Ts[k]);
        fitE.push_back(std::abs(per_T[k][0] - ref));
    }
    const SlopeFit f = fit_loglog_slope(fitT, fitE);
    CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("gradient study: constant ensemble gives D_T = 0; coupling is enforced") {
    StudyPlan plan = tiny_plan(EnsembleKind::ConstantMatrix);
    plan.ensemble.cell_values = {{Tensor::isotropic(2, 0.5), 1.0}};
    plan.T_values = {4.0, 8.0, 16.0};
    const auto rec = run_gradient_convergence_study(plan);
    for (double d : rec.D_T) CHECK(d == doctest::Approx(0.0));
    SUBCASE("coupled sampling shares the realization (field hash equality)") {
        StudyPlan pplan = tiny_plan(EnsembleKind::PoissonInclusion);
        pplan.T_values = {4.0, 8.0, 16.0};
        const auto prec = run_gradient_convergence_study(pplan);
        // within a sample, the pair (phi_T, phi_2T) used one field: the hash is
        // recorded per (cell, sample) and both solves of a cell share it;
        // additionally the same sample at different T derives from one big field
        for (const auto& r : prec.samples) CHECK(r.field_hash != 0);
        CHECK(prec.slope.has_value());
    }
}

TEST_CASE("moment study aggregates Jensen-ordered moments") {
    StudyPlan plan = tiny_plan(EnsembleKind::PoissonInclusion);
    plan.T_values = {4.0, 8.0, 16.0};
    plan.q_list = {1.0, 2.0};
    plan.probe_radius = 1.0;
    const auto rec = run_moment_study(plan);
    REQUIRE(rec.moments.size() == 6);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& q1 = rec.moments[k];
        const auto& q2 = rec.moments[3 + k];
        CHECK(q1.q == 1.0);
        CHECK(q2.q == 2.0);
        CHECK(q1.moment_phi <= q2.moment_phi + 1e-15);
    }
    CHECK(rec.phi2_vs_lnT.has_value());
    CHECK(rec.grad_flatness >= 1.0);
}

TEST_CASE("sensitivity probe: no perturbation effect on constant fields far away") {
    StudyPlan plan = tiny_plan(EnsembleKind::ConstantMatrix);
    plan.ensemble.cell_values = {{Tensor::isotropic(2, 1.0), 1.0}};
    plan.T_values = {16.0};
    plan.distances = {6.0, 12.0};
    plan.truncation_multiplier = 2.0;
    plan.n_samples = 8;
    const auto rec = run_sensitivity_probe(plan, 8);
    REQUIRE(rec.p95.size() == 2);
    // constant base: perturbations do change phi, ratios finite and stable
    CHECK(rec.stability <= 3.0);
    CHECK(rec.pass);
}

TEST_CASE("samples.csv round trip and resume validation") {
    SampleRow r;
    r.cell_id = 2;
    r.sample_index = 5;
    r.T = 16.0;
    r.L = 8.0;
    r.R = 20.0;
    r.seed = 12345678901234567ULL;
    r.value_with = 0.123456789012345;
    r.value_without = 0.12;
    r.zero_order = 0.003456789012345;
    r.extra1 = 1e-7;
    r.extra2 = 42.0;
    r.iterations = 321;
    r.residual = 1e-9;
    r.field_hash = 9876543210ULL;
    const std::string path = "/tmp/homog_test_samples.csv";
    write_samples_csv(path, {r});
    const auto rows = read_samples_csv(path);
    REQUIRE(rows.size() == 1);
    const SampleRow& b = rows.at({2, 5});
    CHECK(b.T == r.T);
    CHECK(b.value_with == r.value_with);
    CHECK(b.zero_order == r.zero_order);
    CHECK(b.extra1 == r.extra1);
    CHECK(b.seed == r.seed);
    CHECK(b.field_hash == r.field_hash);

    SUBCASE("bounds validation rejects stale rows") {
        CHECK_THROWS_AS(validate_resume_bounds(rows, 2, 8), DataError);  // cell_id 2 >= 2
        CHECK_NOTHROW(validate_resume_bounds(rows, 3, 8));
    }
    SUBCASE("malformed lines are rejected") {
        std::ofstream os(path, std::ios::app);
        os << "oops,not,a,row\n";
        os.close();
        CHECK_THROWS_AS(read_samples_csv(path), DataError);
    }
    std::remove(path.c_str());
}

TEST_CASE("resume: complete samples are reused verbatim") {
    StudyPlan plan = tiny_plan(EnsembleKind::PoissonInclusion);
    plan.T_values = {4.0, 8.0};
    plan.L_values = {4.0};
    StudyPlan splan = plan;
    splan.T_values = {4.0, 8.0, 16.0, 32.0};
    const auto rec = run_systematic_study(splan);
    ResumeRows resume;
    for (const auto& row : rec.samples) resume[{row.cell_id, row.sample_index}] = row;
    const auto rec2 = run_systematic_study(splan, &resume);
    REQUIRE(rec2.samples.size() == rec.samples.size());
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
        CHECK(rec.samples[i].value_without == rec2.samples[i].value_without);
}

TEST_CASE("plan validation guards") {
    StudyPlan plan = tiny_plan(EnsembleKind::PoissonInclusion);
    SUBCASE("kappa below 2 rejected") {
        plan.truncation_multiplier = 1.5;
        CHECK_THROWS_AS(plan.validate(StudyKind::Variance), ConfigError);
    }
    SUBCASE("small L rejected") {
        plan.L_values = {2.0};
        CHECK_THROWS_AS(plan.validate(StudyKind::Variance), ConfigError);
    }
    SUBCASE("n_samples below 8 rejected") {
        plan.n_samples = 4;
        CHECK_THROWS_AS(plan.validate(StudyKind::Variance), ConfigError);
    }
    SUBCASE("systematic needs dyadic T") {
        plan.T_values = {4.0, 8.0, 12.0, 24.0};
        CHECK_THROWS_AS(plan.validate(StudyKind::Systematic), ConfigError);
    }
    SUBCASE("mismatched L/T pairing rejected") {
        plan.L_values = {4.0, 8.0};
        plan.T_values = {4.0, 8.0, 16.0};
        CHECK_THROWS_AS(plan.validate(StudyKind::Variance), ConfigError);
    }
}

TEST_CASE("psi variance study runs and reports nonnegative variances") {
    StudyPlan plan = tiny_plan(EnsembleKind::PoissonInclusion);
    plan.T_values = {4.0, 8.0};
    const auto rec = run_psi_variance_study(plan);
    REQUIRE(rec.var_psi.size() == 2);
    for (double v : rec.var_psi) CHECK(v >= 0.0);
}
