// Solver oracles: stencil identities, operator symmetry, the 1-D laminate
// two-point-flux oracle (independent Thomas solve), a-priori energy bounds,
// psi_T consistency, Green columns against a fine-grid reference, truncation
// decay, determinism, preconditioner agreement.
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "homog/ensemble.hpp"
#include "homog/estimator.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"
#include "homog/solver.hpp"

using namespace homog;

namespace {

EnsembleSpec poisson_spec(std::uint64_t seed = 42) {
    EnsembleSpec s;
    s.kind = EnsembleKind::PoissonInclusion;
    s.dimension = 2;
    s.contrast = 0.25;
    s.master_seed = seed;
    return s;
}

EnsembleSpec laminate_spec() {
    EnsembleSpec s;
    s.kind = EnsembleKind::Laminate;
    s.dimension = 2;
    s.contrast = 0.25;
    s.cell_values = {{Tensor::isotropic(2, 0.25), 0.5}, {Tensor::isotropic(2, 1.0), 0.5}};
    return s;
}

// Independent 1-D oracle: modified corrector on [-R, R] with Dirichlet ghosts,
// two-point flux with arithmetic face averages, solved directly (Thomas).
struct Laminate1dOracle {
    std::vector<double> phi;
    double h = 0.0;
    std::vector<double> a;  // cell coefficients

    Laminate1dOracle(double R, double h_in, double T) : h(h_in) {
        const auto n = static_cast<std::size_t>(std::llround(2.0 * R / h));
        a.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = -R + h * (static_cast<double>(i) + 0.5);
            const auto band = static_cast<std::int64_t>(std::floor(x));
            a[i] = (((band % 2) + 2) % 2) == 0 ? 0.25 : 1.0;
        }
        std::vector<double> af(n + 1);  // face coefficients
        af[0] = a[0];
        af[n] = a[n - 1];
        for (std::size_t f = 1; f < n; ++f) af[f] = 0.5 * (a[f - 1] + a[f]);

        // tridiagonal system: invT phi_i - (af[i+1](phi_{i+1}-phi_i) - af[i](phi_i-phi_{i-1}))/h^2
        //                     = (af[i+1] - af[i]) / h
        const double invT = 1.0 / T;
        const double ih2 = 1.0 / (h * h);
        std::vector<double> diag(n), lower(n), upper(n), rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            diag[i] = invT + (af[i] + af[i + 1]) * ih2;
            lower[i] = -af[i] * ih2;
            upper[i] = -af[i + 1] * ih2;
            rhs[i] = (af[i + 1] - af[i]) / h;
        }
        // Thomas elimination
        for (std::size_t i = 1; i < n; ++i) {
            const double w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        phi.assign(n, 0.0);
        phi[n - 1] = rhs[n - 1] / diag[n - 1];
        for (auto i = static_cast<std::int64_t>(n) - 2; i >= 0; --i)
            phi[static_cast<std::size_t>(i)] =
                (rhs[static_cast<std::size_t>(i)] -
                 upper[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(i) + 1]) /
                diag[static_cast<std::size_t>(i)];
    }

    // cell-reconstructed energy density a_i (1 + gbar_i)^2 averaged over a
    // cos^2 mask of radius L (1-D version of the production estimator)
    double masked_energy(double L) const {
        const auto n = phi.size();
        const double R = 0.5 * h * static_cast<double>(n);
        double acc = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = -R + h * (static_cast<double>(i) + 0.5);
            if (std::abs(x) >= L) continue;
            const double gl = (phi[i] - (i > 0 ? phi[i - 1] : 0.0)) / h;
            const double gr = ((i + 1 < n ? phi[i + 1] : 0.0) - phi[i]) / h;
            const double gbar = 0.5 * (gl + gr);
            const double w = std::pow(std::cos(M_PI * x / (2.0 * L)), 2);
            acc += w * a[i] * (1.0 + gbar) * (1.0 + gbar);
            wsum += w;
        }
        return acc / wsum;
    }
};

}  // namespace

TEST_CASE("apply_operator: zero input, 5-point stencil, symmetry") {
    SUBCASE("zero maps to zero") {
        const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.25);
        const CoefficientField f = CoefficientField::uniform(g, Tensor::identity(2));
        const GridFunction u = GridFunction::zeros(g);
        const GridFunction out = apply_operator(f, {64.0, false}, u);
        for (double v : out.v) CHECK(v == 0.0);
    }
    SUBCASE("identity coefficients, h=1, massive term off: classic stencil") {
        const GridLayout g = GridLayout::make(Box::centered(2, 4.0), 1.0);
        const CoefficientField f = CoefficientField::uniform(g, Tensor::identity(2));
        GridFunction u = GridFunction::zeros(g);
        MultiIndex center;
        center[0] = 4;
        center[1] = 4;
        u.at(center) = 1.0;
        const OperatorSpec spec{std::numeric_limits<double>::infinity(), false};
        const GridFunction out = apply_operator(f, spec, u);
        CHECK(out.at(center) == doctest::Approx(4.0));
        for (int axis = 0; axis < 2; ++axis)
            for (int sgn = -1; sgn <= 1; sgn += 2) {
                MultiIndex nb = center;
                nb[axis] += sgn;
                CHECK(out.at(nb) == doctest::Approx(-1.0));
            }
    }
    SUBCASE("symmetric field: operator is self-adjoint to machine precision") {
        const GridLayout g = GridLayout::make(Box::centered(2, 4.0), 1.0);
        // full-tensor symmetric field with off-diagonal entries
        Rng rng(17);
        std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
        for (auto& t : cells) {
            const double diag = 0.5 + 0.4 * rng.next_u01();
            const double off = 0.15 * (rng.next_u01() - 0.5);
            t = Tensor::isotropic(2, diag);
            t(0, 1) = t(1, 0) = off;
        }
        const CoefficientField f = CoefficientField::full(g, cells);
        GridFunction u = GridFunction::zeros(g), v = GridFunction::zeros(g);
        for (auto& x : u.v) x = rng.next_u01() - 0.5;
        for (auto& x : v.v) x = rng.next_u01() - 0.5;
        const OperatorSpec spec{16.0, false};
        const GridFunction Lu = apply_operator(f, spec, u);
        const GridFunction Lv = apply_operator(f, spec, v);
        double uv = 0.0, vu = 0.0;
        for (std::size_t c = 0; c < u.v.size(); ++c) {
            uv += v.v[c] * Lu.v[c];
            vu += u.v[c] * Lv.v[c];
        }
        CHECK(uv == doctest::Approx(vu).epsilon(1e-13));
    }
}

TEST_CASE("operator coercivity: <u, Lu> >= T^-1|u|^2 + lambda|grad u|^2") {
    const GridLayout g = GridLayout::make(Box::centered(2, 3.0), 0.25);
    EnsembleSpec spec = poisson_spec(7);
    const CoefficientField f = realize_field(spec, g.box, g.h, 0);
    Rng rng(23);
    GridFunction u = GridFunction::zeros(g);
    for (auto& x : u.v) x = rng.next_u01() - 0.5;
    const double T = 32.0;
    const GridFunction Lu = apply_operator(f, {T, false}, u);
    double uLu = 0.0, unorm = 0.0;
    for (std::size_t c = 0; c < u.v.size(); ++c) {
        uLu += u.v[c] * Lu.v[c];
        unorm += u.v[c] * u.v[c];
    }
    const FaceField gu = gradient(u);
    double gnorm = 0.0;
    for (int axis = 0; axis < 2; ++axis)
        for (double x : gu.comp[axis]) gnorm += x * x;
    CHECK(uLu >= (1.0 / T) * unorm + 0.25 * gnorm - 1e-10 * std::abs(uLu));
}

TEST_CASE("solve: constant field gives the zero corrector and exact estimate") {
    EnsembleSpec spec;
    spec.kind = EnsembleKind::ConstantMatrix;
    spec.dimension = 2;
    spec.cell_values = {{Tensor::isotropic(2, 0.7), 1.0}};
    const Box box = Box::centered(2, 24.0);
    const CoefficientField f = realize_field(spec, box, 0.25, 0);
    const OperatorSpec op{16.0, false};
    const CorrectorSolution sol = solve_modified_corrector(f, op, unit_vector(0));
    double mx = 0.0;
    for (double v : sol.phi.v) mx = std::max(mx, std::abs(v));
    CHECK(mx == 0.0);
    CHECK(sol.iterations == 0);
    CHECK(sol.residual_norm == 0.0);
}

TEST_CASE("laminate oracle: 2-D solve matches the independent 1-D Thomas solve") {
    // same h, same T: the 2-D interior solution is 1-D up to boundary layers
    const double T = 16.0, h = 0.25, L = 8.0, R = 20.0;
    const Laminate1dOracle oracle(R, h, T);
    const CoefficientField f = realize_field(laminate_spec(), Box::centered(2, R), h, 0);
    SolverOptions opts;
    opts.tol = 1e-10;
    const CorrectorSolution phi = solve_modified_corrector(f, {T, false}, unit_vector(0), opts);
    const AveragingMask mask = AveragingMask::make(f.layout(), L);
    const EnergyEstimate est = energy_estimate(f, phi, phi, mask);
    CHECK(est.value_without_zero_order ==
          doctest::Approx(oracle.masked_energy(L)).epsilon(0.01));
}

TEST_CASE("laminate oracle at the acceptance operating point") {
    // 1-D oracle at T=1e4, h=0.125 predicts the harmonic mean within 3%
    const Laminate1dOracle oracle(255.9375 + 0.0625, 0.125, 1e4);
    CHECK(std::abs(oracle.masked_energy(16.0) - 0.4) / 0.4 < 0.03);
}

TEST_CASE("a-priori energy bound on a Poisson sample") {
    const double T = 64.0;
    const Box box = Box::centered(2, 32.0);
    const CoefficientField f = realize_field(poisson_spec(3), box, 0.25, 0);
    SolverOptions opts;
    opts.tol = 1e-9;
    const CorrectorSolution sol = solve_modified_corrector(f, {T, false}, unit_vector(0), opts);
    CHECK(sol.residual_norm <= opts.tol);
    const GridLayout& g = f.layout();
    const double vol = g.cell_volume();
    double phi2 = 0.0;
    for (double v : sol.phi.v) phi2 += v * v;
    double grad2 = 0.0;
    for (int axis = 0; axis < 2; ++axis)
        for (double v : sol.grad_phi.comp[axis]) grad2 += v * v;
    const double lhs = phi2 * vol / T + 0.25 * grad2 * vol;
    CHECK(lhs <= g.box.volume());
    SUBCASE("energy identity holds to well below 10x solver tolerance") {
        CHECK(energy_identity_residual(f, {T, false}, sol) <= 10.0 * opts.tol);
    }
    SUBCASE("flux divergence equals T^-1 phi (residual identity)") {
        const FaceField flux = corrector_flux(f, {T, false}, sol);
        const GridFunction div = divergence(flux);
        double num = 0.0, den = 0.0;
        for (std::size_t c = 0; c < div.v.size(); ++c) {
            const double r = div.v[c] - sol.phi.v[c] / T;
            num += r * r;
            den += div.v[c] * div.v[c];
        }
        CHECK(std::sqrt(num / den) < 1e-6);
    }
}

TEST_CASE("adjoint corrector") {
    SUBCASE("symmetric field: adjoint equals primal bitwise") {
        const Box box = Box::centered(2, 16.0);
        const CoefficientField f = realize_field(poisson_spec(9), box, 0.25, 1);
        const OperatorSpec op{16.0, false};
        const CorrectorSolution a = solve_modified_corrector(f, op, unit_vector(0));
        const CorrectorSolution b = solve_adjoint_corrector(f, op, unit_vector(0));
        REQUIRE(a.phi.v.size() == b.phi.v.size());
        for (std::size_t c = 0; c < a.phi.v.size(); ++c) CHECK(a.phi.v[c] == b.phi.v[c]);
    }
    SUBCASE("constant non-symmetric field: adjoint corrector vanishes") {
        const GridLayout g = GridLayout::make(Box::centered(2, 8.0), 0.25);
        Tensor t = Tensor::isotropic(2, 0.6);
        t(0, 1) = 0.2;
        t(1, 0) = -0.2;
        const CoefficientField f = CoefficientField::uniform(g, t);
        const CorrectorSolution sol = solve_adjoint_corrector(f, {16.0, false}, unit_vector(0));
        for (double v : sol.phi.v) CHECK(v == 0.0);
    }
    SUBCASE("reciprocity: <b_xi', phi_xi> = <phi'_xi', b_xi> for non-symmetric fields") {
        const GridLayout g = GridLayout::make(Box::centered(2, 4.0), 0.5);
        Rng rng(31);
        std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
        for (auto& t : cells) {
            t = Tensor::isotropic(2, 0.5 + 0.3 * rng.next_u01());
            t(0, 1) = 0.1;
            t(1, 0) = -0.1;
        }
        const CoefficientField f = CoefficientField::full(g, cells);
        SolverOptions opts;
        opts.tol = 1e-12;
        const OperatorSpec op{8.0, false};
        const CorrectorSolution phi = solve_modified_corrector(f, op, unit_vector(0), opts);
        const CorrectorSolution phi_adj = solve_adjoint_corrector(f, op, unit_vector(1), opts);
        EllipticOperator fwd(f, op);
        EllipticOperator adj(f.transposed(), op);
        const auto b_xi = fwd.rhs_for_xi(unit_vector(0));
        const auto b_xip = adj.rhs_for_xi(unit_vector(1));
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t c = 0; c < b_xi.size(); ++c) {
            lhs += b_xip[c] * phi.phi.v[c];
            rhs += phi_adj.phi.v[c] * b_xi[c];
        }
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
    }
}

TEST_CASE("psi solve") {
    const double T = 32.0;
    const Box box = Box::centered(2, 12.0);
    const CoefficientField f = realize_field(poisson_spec(13), box, 0.25, 2);
    SolverOptions opts;
    opts.tol = 1e-11;
    const OperatorSpec op{T, false};
    const CorrectorSolution phi = solve_modified_corrector(f, op, unit_vector(0), opts);
    SolveReport rep;
    const GridFunction psi = solve_psi(f, op, phi, opts, &rep);
    CHECK(rep.converged);

    SUBCASE("constant field: psi vanishes") {
        EnsembleSpec cspec;
        cspec.kind = EnsembleKind::ConstantMatrix;
        cspec.dimension = 2;
        cspec.cell_values = {{Tensor::identity(2), 1.0}};
        const CoefficientField cf = realize_field(cspec, box, 0.25, 0);
        const CorrectorSolution cphi = solve_modified_corrector(cf, op, unit_vector(0), opts);
        const GridFunction cpsi = solve_psi(cf, op, cphi, opts);
        for (double v : cpsi.v) CHECK(v == 0.0);
    }
    SUBCASE("finite-difference consistency: psi ~ T^2 d phi / dT") {
        const double eps = 1e-3;
        const OperatorSpec op2{T * (1.0 + eps), false};
        const CorrectorSolution phi2 = solve_modified_corrector(f, op2, unit_vector(0), opts);
        double num = 0.0, den = 0.0;
        for (std::size_t c = 0; c < psi.v.size(); ++c) {
            const double fd = T * (phi2.phi.v[c] - phi.phi.v[c]) / eps;
            num += (psi.v[c] - fd) * (psi.v[c] - fd);
            den += psi.v[c] * psi.v[c];
        }
        CHECK(std::sqrt(num / den) < 0.01);
    }
    SUBCASE("energy bound T^-1 sum psi^2 + lambda sum |grad psi|^2 <= sum phi psi") {
        const GridLayout& g = f.layout();
        GridFunction psi_gf = psi;
        const FaceField gpsi = gradient(psi_gf);
        double psi2 = 0.0, gp2 = 0.0, phipsi = 0.0;
        for (std::size_t c = 0; c < psi.v.size(); ++c) {
            psi2 += psi.v[c] * psi.v[c];
            phipsi += phi.phi.v[c] * psi.v[c];
        }
        for (int axis = 0; axis < 2; ++axis)
            for (double v : gpsi.comp[axis]) gp2 += v * v;
        (void)g;
        CHECK(psi2 / T + 0.25 * gp2 <= phipsi * (1.0 + 1e-6));
    }
}

TEST_CASE("green column") {
    SUBCASE("identity coefficients d=2: matches a fine-grid reference within 2%") {
        const double T = 64.0;
        EnsembleSpec cspec;
        cspec.kind = EnsembleKind::ConstantMatrix;
        cspec.dimension = 2;
        cspec.cell_values = {{Tensor::identity(2), 1.0}};
        const Box box = Box::centered(2, 16.0);
        SolverOptions opts;
        opts.tol = 1e-10;
        const CoefficientField coarse = realize_field(cspec, box, 0.25, 0);
        const CoefficientField fine = realize_field(cspec, box, 0.125, 0);
        const OperatorSpec op{T, false};
        const MultiIndex src_c = coarse.layout().cell_at({0.0, 0.0, 0.0});
        const MultiIndex src_f = fine.layout().cell_at(coarse.layout().center(src_c));
        const GridFunction Gc = solve_green_column(coarse, op, src_c, opts);
        const GridFunction Gf = solve_green_column(fine, op, src_f, opts);
        const Vec3 y0 = coarse.layout().center(src_c);
        for (double r : {2.0, 3.0, 4.0}) {
            double vc = 0.0, vf = 0.0;
            int cnt = 0;
            for (int k = 0; k < 8; ++k) {
                const double ang = 2.0 * M_PI * k / 8.0;
                const Vec3 x{y0[0] + r * std::cos(ang), y0[1] + r * std::sin(ang), 0.0};
                vc += Gc.v[static_cast<std::size_t>(coarse.layout().flat(coarse.layout().cell_at(x)))];
                vf += Gf.v[static_cast<std::size_t>(fine.layout().flat(fine.layout().cell_at(x)))];
                ++cnt;
            }
            vc /= cnt;
            vf /= cnt;
            CHECK(std::abs(vc - vf) / vf < 0.02);
        }
    }
    SUBCASE("two-column symmetry for a symmetric field") {
        const Box box = Box::centered(2, 12.0);
        const CoefficientField f = realize_field(poisson_spec(19), box, 0.25, 0);
        SolverOptions opts;
        opts.tol = 1e-10;
        const OperatorSpec op{64.0, false};
        const GridLayout& g = f.layout();
        const MultiIndex mx = g.cell_at({-3.0, 1.0, 0.0});
        const MultiIndex my = g.cell_at({4.0, -2.0, 0.0});
        const GridFunction Gx = solve_green_column(f, op, mx, opts);
        const GridFunction Gy = solve_green_column(f, op, my, opts);
        const double gxy = Gx.v[static_cast<std::size_t>(g.flat(my))];
        const double gyx = Gy.v[static_cast<std::size_t>(g.flat(mx))];
        CHECK(std::abs(gxy - gyx) <= 10.0 * opts.tol * std::max(1.0, std::abs(gxy)));
    }
    SUBCASE("mass identity and positivity") {
        const Box box = Box::centered(2, 12.0);
        const CoefficientField f = realize_field(poisson_spec(21), box, 0.25, 0);
        SolverOptions opts;
        opts.tol = 1e-10;
        const double T = 16.0;
        const GridFunction G =
            solve_green_column(f, {T, false}, f.layout().cell_at({0.0, 0.0, 0.0}), opts);
        double total = 0.0, gmin = 0.0, gmax = 0.0;
        for (double v : G.v) {
            total += v;
            gmin = std::min(gmin, v);
            gmax = std::max(gmax, v);
        }
        CHECK(total * f.layout().cell_volume() / T <= 1.0 + 1e-9);
        CHECK(gmin >= -10.0 * opts.tol * std::max(1.0, gmax));
    }
    SUBCASE("source must be strictly interior") {
        const GridLayout g = GridLayout::make(Box::centered(2, 4.0), 0.5);
        const CoefficientField f = CoefficientField::uniform(g, Tensor::identity(2));
        MultiIndex edge;
        edge[0] = 0;
        edge[1] = 3;
        CHECK_THROWS_AS(solve_green_column(f, {16.0, false}, edge), ConfigError);
    }
}

TEST_CASE("truncation error decays as (R - L)/sqrt(T) grows") {
    const double T = 16.0, L = 8.0, h = 0.25;
    const std::vector<double> radii{16.0, 20.0, 24.0};  // L + {2,3,4} sqrt(T)
    double e_prev = 0.0, e_next = 0.0;
    for (int sample = 0; sample < 3; ++sample) {
        const CoefficientField big =
            realize_field(poisson_spec(55), Box::centered(2, radii.back()), h,
                          static_cast<std::uint64_t>(sample));
        SolverOptions opts;
        opts.tol = 1e-10;
        std::vector<GridFunction> sols;
        for (double R : radii) {
            const CoefficientField f = R == radii.back() ? big : big.crop(Box::centered(2, R));
            sols.push_back(solve_modified_corrector(f, {T, false}, unit_vector(0), opts).phi);
        }
        // restrict differences to B_L
        auto diff_on_ball = [&](const GridFunction& a, const GridFunction& b) {
            double s = 0.0;
            const GridLayout& ga = a.layout;
            for (std::int64_t c = 0; c < ga.cells(); ++c) {
                const Vec3 x = ga.center(ga.unflat(c));
                if (x[0] * x[0] + x[1] * x[1] >= L * L) continue;
                const double vb =
                    b.v[static_cast<std::size_t>(b.layout.flat(b.layout.cell_at(x)))];
                const double dv = a.v[static_cast<std::size_t>(c)] - vb;
                s += dv * dv;
            }
            return std::sqrt(s * ga.cell_volume());
        };
        e_prev += diff_on_ball(sols[0], sols[1]);
        e_next += diff_on_ball(sols[1], sols[2]);
    }
    CHECK(e_next < e_prev);
}

TEST_CASE("determinism: bitwise identical solves across runs and worker counts") {
    const Box box = Box::centered(2, 12.0);
    const CoefficientField f = realize_field(poisson_spec(77), box, 0.25, 4);
    const OperatorSpec op{16.0, false};
    const int saved = worker_count();
    set_worker_count(1);
    const CorrectorSolution a = solve_modified_corrector(f, op, unit_vector(0));
    set_worker_count(2);
    const CorrectorSolution b = solve_modified_corrector(f, op, unit_vector(0));
    set_worker_count(saved);
    REQUIRE(a.phi.v.size() == b.phi.v.size());
    for (std::size_t c = 0; c < a.phi.v.size(); ++c) CHECK(a.phi.v[c] == b.phi.v[c]);
}

TEST_CASE("preconditioners agree and the spectral one is exact for constant fields") {
    const Box box = Box::centered(2, 12.0);
    const CoefficientField f = realize_field(poisson_spec(88), box, 0.25, 6);
    const OperatorSpec op{32.0, false};
    SolverOptions ja, sp;
    ja.tol = sp.tol = 1e-10;
    ja.preconditioner = Preconditioner::Jacobi;
    sp.preconditioner = Preconditioner::Spectral;
    const CorrectorSolution a = solve_modified_corrector(f, op, unit_vector(0), ja);
    const CorrectorSolution b = solve_modified_corrector(f, op, unit_vector(0), sp);
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < a.phi.v.size(); ++c) {
        num += (a.phi.v[c] - b.phi.v[c]) * (a.phi.v[c] - b.phi.v[c]);
        den += a.phi.v[c] * a.phi.v[c];
    }
    CHECK(std::sqrt(num / den) < 1e-7);

    SUBCASE("spectral preconditioner solves near-constant systems in a few iterations") {
        // laminate with mild contrast: kappa(M^-1 A) <= amax/amin
        EnsembleSpec lam = laminate_spec();
        lam.cell_values = {{Tensor::isotropic(2, 0.8), 0.5}, {Tensor::isotropic(2, 1.0), 0.5}};
        const CoefficientField lf = realize_field(lam, box, 0.25, 0);
        const CorrectorSolution sol = solve_modified_corrector(lf, op, unit_vector(0), sp);
        CHECK(sol.iterations <= 12);
    }
}

TEST_CASE("solver failure paths") {
    const Box box = Box::centered(2, 12.0);
    const CoefficientField f = realize_field(poisson_spec(99), box, 0.25, 0);
    SUBCASE("iteration cap produces a solver error with the residual") {
        SolverOptions opts;
        opts.tol = 1e-12;
        opts.max_iter = 2;
        CHECK_THROWS_AS(solve_modified_corrector(f, {64.0, false}, unit_vector(0), opts),
                        SolverError);
    }
    SUBCASE("non-unit direction rejected") {
        CHECK_THROWS_AS(solve_modified_corrector(f, {64.0, false}, {1.0, 1.0, 0.0}),
                        ConfigError);
    }
    SUBCASE("T must be positive") {
        CHECK_THROWS_AS(solve_modified_corrector(f, {-1.0, false}, unit_vector(0)), ConfigError);
    }
}

TEST_CASE("harmonic face averaging is available behind the flag") {
    const double T = 1e4, h = 0.125, L = 8.0, R = 24.0;
    const CoefficientField f = realize_field(laminate_spec(), Box::centered(2, R), h, 0);
    SolverOptions opts;
    opts.tol = 1e-10;
    opts.face_average = FaceAverage::Harmonic;
    const CorrectorSolution phi = solve_modified_corrector(f, {T, false}, unit_vector(0), opts);
    CHECK(phi.residual_norm <= opts.tol);
    // harmonic faces give the exact harmonic-mean flux through each line
    const FaceField flux = corrector_flux(f, {T, false}, phi, FaceAverage::Harmonic);
    MultiIndex m;
    m[0] = static_cast<int>(f.layout().n[0] / 2);
    m[1] = static_cast<int>(f.layout().n[1] / 2);
    const double j = flux.comp[0][static_cast<std::size_t>(flux.face_flat(0, m))];
    CHECK(j == doctest::Approx(0.4).epsilon(0.02));
}
