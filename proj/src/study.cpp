#include "homog/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "homog/config.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"

namespace homog {

std::string to_string(StudyKind k) {
    switch (k) {
        case StudyKind::Variance: return "variance";
        case StudyKind::Systematic: return "systematic";
        case StudyKind::Gradient: return "gradient";
        case StudyKind::Moments: return "moments";
        case StudyKind::Sensitivity: return "sensitivity";
        case StudyKind::PsiVariance: return "psivar";
    }
    return "?";
}

StudyKind study_kind_from_string(const std::string& s) {
    if (s == "variance") return StudyKind::Variance;
    if (s == "systematic") return StudyKind::Systematic;
    if (s == "gradient") return StudyKind::Gradient;
    if (s == "moments") return StudyKind::Moments;
    if (s == "sensitivity") return StudyKind::Sensitivity;
    if (s == "psivar") return StudyKind::PsiVariance;
    throw ConfigError("unknown study kind: " + s);
}

namespace {

double snap_up(double x, double h) {
    return std::ceil(x / h - 1e-9) * h;
}

Box centered_box(int d, double radius, double h) { return Box::centered(d, snap_up(radius, h)); }

bool dyadic_ascending(const std::vector<double>& ts) {
    if (ts.size() < 2) return false;
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (!nearly_equal(ts[i], 2.0 * ts[i - 1], 1e-9)) return false;
    return true;
}

std::string vec_to_string(const Vec3& v) {
    for (int a = 0; a < 3; ++a) {
        Vec3 e = unit_vector(a);
        if (v[0] == e[0] && v[1] == e[1] && v[2] == e[2]) return "e" + std::to_string(a + 1);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g:%g:%g", v[0], v[1], v[2]);
    return buf;
}

Vec3 vec_from_string(const std::string& s) {
    if (s.size() == 2 && s[0] == 'e') {
        const int a = s[1] - '1';
        if (a >= 0 && a < 3) return unit_vector(a);
    }
    Vec3 v{0.0, 0.0, 0.0};
    if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &v[0], &v[1], &v[2]) != 3)
        throw ConfigError("bad direction: " + s);
    return v;
}

// Computes missing samples in parallel; complete samples come from `resume`.
// fn(sample) returns that sample's rows for all cells.
template <typename Fn>
std::vector<SampleRow> gather_rows(int n_samples, std::int64_t n_cells, const ResumeRows* resume,
                                   const Fn& fn) {
    std::vector<SampleRow> rows;
    std::vector<std::int64_t> missing;
    for (std::int64_t i = 0; i < n_samples; ++i) {
        bool complete = resume != nullptr;
        if (resume)
            for (std::int64_t c = 0; c < n_cells && complete; ++c)
                if (!resume->count({c, i})) complete = false;
        if (complete) {
            for (std::int64_t c = 0; c < n_cells; ++c) rows.push_back(resume->at({c, i}));
        } else {
            missing.push_back(i);
        }
    }
    std::vector<std::vector<SampleRow>> computed(missing.size());
    parallel_for(static_cast<std::int64_t>(missing.size()), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t k = b; k < e; ++k)
            computed[static_cast<std::size_t>(k)] = fn(missing[static_cast<std::size_t>(k)]);
    });
    for (auto& rs : computed)
        for (auto& r : rs) rows.push_back(r);
    std::sort(rows.begin(), rows.end(), [](const SampleRow& a, const SampleRow& b) {
        return std::tie(a.cell_id, a.sample_index) < std::tie(b.cell_id, b.sample_index);
    });
    return rows;
}

std::vector<double> column(const std::vector<SampleRow>& rows, std::int64_t cell,
                           double SampleRow::*member) {
    std::vector<double> out;
    for (const auto& r : rows)
        if (r.cell_id == cell) out.push_back(r.*member);
    return out;
}

double variance_ci(const std::vector<double>& vals) {
    return 1.96 * std::sqrt(jackknife_variance(vals, sample_variance));
}

double mean_ci(const std::vector<double>& vals) {
    return 1.96 * std::sqrt(jackknife_variance_of_mean(vals));
}

}  // namespace

void StudyPlan::validate(StudyKind kind) const {
    ensemble.validate();
    if (!(h > 0.0)) throw ConfigError("study: spacing must be positive");
    if (truncation_multiplier < 2.0)
        throw ConfigError("study: truncation multiplier must be >= 2 (R - L >= 2 sqrt(T))");
    if (n_samples < 8) throw ConfigError("study: n_samples must be >= 8");
    const bool masked = kind == StudyKind::Variance || kind == StudyKind::Systematic ||
                        kind == StudyKind::Gradient;
    if (masked) {
        if (L_values.empty()) throw ConfigError("study: L_values required");
        for (double L : L_values)
            if (L < 4.0) throw ConfigError("study: L must be >= 4 correlation lengths");
    }
    if (T_values.empty()) throw ConfigError("study: T_values required");
    for (double T : T_values)
        if (!(T > 0.0)) throw ConfigError("study: T values must be positive");
    switch (kind) {
        case StudyKind::Variance:
            if (L_values.size() != T_values.size() && L_values.size() != 1 && T_values.size() != 1)
                throw ConfigError("study: L_values and T_values must pair up (equal length or singleton)");
            break;
        case StudyKind::Systematic:
            if (L_values.size() != 1) throw ConfigError("systematic study: single L required");
            if (T_values.size() < 4 || !dyadic_ascending(T_values))
                throw ConfigError("systematic study: need >= 4 dyadic T values");
            break;
        case StudyKind::Gradient:
            if (L_values.size() != 1) throw ConfigError("gradient study: single L required");
            if (T_values.size() < 3 || !dyadic_ascending(T_values))
                throw ConfigError("gradient study: need >= 3 dyadic T values");
            break;
        case StudyKind::Moments:
            if (T_values.size() < 3) throw ConfigError("moment study: need >= 3 T values");
            break;
        case StudyKind::Sensitivity:
            if (T_values.size() != 1) throw ConfigError("sensitivity probe: single T required");
            if (distances.size() < 2) throw ConfigError("sensitivity probe: need >= 2 distances");
            for (double dist : distances)
                if (dist < 4.0)
                    throw ConfigError("sensitivity probe: distances must be >= 2x the perturbation radius");
            break;
        case StudyKind::PsiVariance:
            if (T_values.size() < 2) throw ConfigError("psi variance study: need >= 2 T values");
            break;
    }
}

// Variance study --------------------------------------------------------------

VarianceStudyRecord run_variance_study(const StudyPlan& plan, const ResumeRows* resume) {
    plan.validate(StudyKind::Variance);
    const int d = plan.ensemble.dimension;

    struct Cell {
        double L, T, R;
    };
    std::vector<Cell> cells;
    const std::size_t n_cells = std::max(plan.L_values.size(), plan.T_values.size());
    for (std::size_t k = 0; k < n_cells; ++k) {
        const double L = plan.L_values[plan.L_values.size() == 1 ? 0 : k];
        const double T = plan.T_values[plan.T_values.size() == 1 ? 0 : k];
        cells.push_back({L, T, snap_up(L + plan.truncation_multiplier * std::sqrt(T), plan.h)});
    }

    VarianceStudyRecord rec;
    rec.plan = plan;
    if (resume) validate_resume_bounds(*resume, static_cast<std::int64_t>(cells.size()), plan.n_samples);

    for (std::size_t k = 0; k < cells.size(); ++k) {
        const Cell& cell = cells[k];
        VarianceCell out;
        out.L = cell.L;
        out.T = cell.T;
        out.R = cell.R;
        out.n = plan.n_samples;
        try {
            const Box box = Box::centered(d, cell.R);
            const auto rows = gather_rows(plan.n_samples, 1, nullptr, [&](std::int64_t i) {
                std::vector<SampleRow> rs;
                const auto key = std::make_pair(static_cast<std::int64_t>(k), i);
                if (resume && resume->count(key)) {
                    const SampleRow& old = resume->at(key);
                    if (!nearly_equal(old.T, cell.T) || !nearly_equal(old.L, cell.L) ||
                        !nearly_equal(old.R, cell.R))
                        throw DataError("inconsistent resume state: sample row does not match the plan");
                    rs.push_back(old);
                    rs.back().cell_id = 0;  // gather key within this per-cell pass
                    return rs;
                }
                const CoefficientField field =
                    realize_field(plan.ensemble, box, plan.h, static_cast<std::uint64_t>(i));
                const OperatorSpec spec{cell.T, false};
                const CorrectorSolution phi =
                    solve_modified_corrector(field, spec, plan.xi, plan.solver);
                const bool reuse = field.symmetric() && plan.xi == plan.xi_prime;
                const CorrectorSolution phi_adj =
                    reuse ? phi : solve_adjoint_corrector(field, spec, plan.xi_prime, plan.solver);
                const AveragingMask mask = AveragingMask::make(field.layout(), cell.L);
                const EnergyEstimate est = energy_estimate(field, phi, phi_adj, mask);
                SampleRow r;
                r.cell_id = 0;
                r.L = cell.L;
                r.T = cell.T;
                r.R = cell.R;
                r.sample_index = i;
                r.seed = mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i));
                r.xi = plan.xi;
                r.xi_prime = plan.xi_prime;
                r.value_with = est.value_with_zero_order;
                r.value_without = est.value_without_zero_order;
                r.zero_order = est.zero_order_part;
                r.iterations = phi.iterations + (reuse ? 0 : phi_adj.iterations);
                r.residual = std::max(phi.residual_norm, phi_adj.residual_norm);
                r.field_hash = field.content_hash();
                rs.push_back(r);
                return rs;
            });
            for (SampleRow r : rows) {
                r.cell_id = static_cast<std::int64_t>(k);
                rec.samples.push_back(r);
            }
            std::vector<double> with, without, zero, zero_integral;
            for (const auto& r : rows) {
                with.push_back(r.value_with);
                without.push_back(r.value_without);
                zero.push_back(r.zero_order);
                zero_integral.push_back(r.zero_order * cell.T);
            }
            out.mean_without = mean(without);
            out.var_without = sample_variance(without);
            out.var_without_ci = variance_ci(without);
            out.var_with = sample_variance(with);
            out.var_with_ci = variance_ci(with);
            out.var_zero = sample_variance(zero);
            out.var_zero_ci = variance_ci(zero);
            out.var_zero_integral = sample_variance(zero_integral);
            out.var_zero_integral_ci = variance_ci(zero_integral);
        } catch (const std::exception& ex) {
            out.failed = true;
            out.error = ex.what();
        }
        rec.cells.push_back(out);
    }

    // slope fits over L (skip failed or zero-variance cells)
    auto fit_of = [&](double VarianceCell::*var, double VarianceCell::*ci) -> std::optional<SlopeFit> {
        std::vector<double> Ls, vars, cis;
        for (const auto& c : rec.cells) {
            if (c.failed || !(c.*var > 0.0)) continue;
            Ls.push_back(c.L);
            vars.push_back(c.*var);
            cis.push_back(c.*ci);
        }
        if (Ls.size() < 3) return std::nullopt;
        try {
            return fit_loglog_slope(Ls, vars, cis);
        } catch (const DataError&) {
            return std::nullopt;
        }
    };
    rec.slope_without = fit_of(&VarianceCell::var_without, &VarianceCell::var_without_ci);
    rec.slope_with = fit_of(&VarianceCell::var_with, &VarianceCell::var_with_ci);
    rec.slope_zero_integral =
        fit_of(&VarianceCell::var_zero_integral, &VarianceCell::var_zero_integral_ci);
    rec.degenerate = !rec.slope_without.has_value();
    return rec;
}

SlopeFit fit_variance_slope(const std::vector<VarianceFitInput>& cells) {
    std::vector<double> xs, vars, cis;
    for (const auto& c : cells) {
        xs.push_back(c.abscissa);
        vars.push_back(sample_variance(c.values));
        cis.push_back(variance_ci(c.values));
    }
    return fit_loglog_slope(xs, vars, cis);
}

// Systematic study -------------------------------------------------------------

SystematicStudyRecord run_systematic_study(const StudyPlan& plan, const ResumeRows* resume) {
    plan.validate(StudyKind::Systematic);
    const int d = plan.ensemble.dimension;
    const double L = plan.L_values[0];
    const auto n_T = static_cast<std::int64_t>(plan.T_values.size());

    // One fixed box sized by the largest T for every solve: a per-T domain
    // would make the truncation bias T-dependent and pollute the T^{-1} fit.
    const double R_all =
        snap_up(L + plan.truncation_multiplier * std::sqrt(plan.T_values.back()), plan.h);
    std::vector<double> R_T(plan.T_values.size(), R_all);
    const Box big = Box::centered(d, R_all);
    if (resume) validate_resume_bounds(*resume, n_T, plan.n_samples);

    auto rows = gather_rows(plan.n_samples, n_T, resume, [&](std::int64_t i) {
        const CoefficientField field_big =
            realize_field(plan.ensemble, big, plan.h, static_cast<std::uint64_t>(i));
        std::vector<SampleRow> rs;
        for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
            const double T = plan.T_values[k];
            const CoefficientField& field = field_big;
            const OperatorSpec spec{T, false};
            const CorrectorSolution phi = solve_modified_corrector(field, spec, plan.xi, plan.solver);
            const bool reuse = field.symmetric() && plan.xi == plan.xi_prime;
            const CorrectorSolution phi_adj =
                reuse ? phi : solve_adjoint_corrector(field, spec, plan.xi_prime, plan.solver);
            const AveragingMask mask = AveragingMask::make(field.layout(), L);
            const EnergyEstimate est = energy_estimate(field, phi, phi_adj, mask);
            SampleRow r;
            r.cell_id = static_cast<std::int64_t>(k);
            r.L = L;
            r.T = T;
            r.R = R_T[k];
            r.sample_index = i;
            r.seed = mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i));
            r.xi = plan.xi;
            r.xi_prime = plan.xi_prime;
            r.value_with = est.value_with_zero_order;
            r.value_without = est.value_without_zero_order;
            r.zero_order = est.zero_order_part;
            r.iterations = phi.iterations;
            r.residual = phi.residual_norm;
            r.field_hash = field.content_hash();
            rs.push_back(r);
        }
        return rs;
    });

    SystematicStudyRecord rec;
    rec.plan = plan;
    rec.T_values = plan.T_values;
    rec.samples = rows;

    std::vector<std::vector<double>> per_T(plan.T_values.size());
    for (std::size_t k = 0; k < plan.T_values.size(); ++k)
        per_T[k] = column(rows, static_cast<std::int64_t>(k), &SampleRow::value_without);

    for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
        MeanEstimate m;
        m.n = static_cast<int>(per_T[k].size());
        m.mean = mean(per_T[k]);
        m.jackknife_variance = jackknife_variance_of_mean(per_T[k]);
        m.ci_halfwidth = 1.96 * std::sqrt(m.jackknife_variance);
        rec.A_T.push_back(m);
    }

    // order-2 Richardson from the three largest T, per sample (coupled fields)
    const std::size_t m = plan.T_values.size();
    std::vector<double> ref_i(per_T[0].size());
    for (std::size_t i = 0; i < ref_i.size(); ++i)
        ref_i[i] = (8.0 * per_T[m - 1][i] - 6.0 * per_T[m - 2][i] + per_T[m - 3][i]) / 3.0;
    rec.reference = mean(ref_i);
    rec.reference_ci = mean_ci(ref_i);

    for (std::size_t k = 0; k + 2 < m; ++k) {
        std::vector<double> u(ref_i.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = per_T[k][i] - ref_i[i];
        rec.fit_T.push_back(plan.T_values[k]);
        rec.fit_error.push_back(std::abs(mean(u)));
        rec.fit_error_ci.push_back(mean_ci(u));
        // underpowered rule: the CI attached to the fitted quantity A_T - ref
        // (coupled samples) against half the adjacent inter-T difference
        const double diff = std::abs(rec.A_T[k + 1].mean - rec.A_T[k].mean);
        if (rec.fit_error_ci.back() > 0.5 * diff) rec.underpowered = true;
    }
    try {
        rec.slope = fit_loglog_slope(rec.fit_T, rec.fit_error, rec.fit_error_ci);
    } catch (const DataError&) {
        rec.slope = std::nullopt;
        rec.underpowered = true;
    }
    return rec;
}

// Gradient convergence study ----------------------------------------------------

GradientStudyRecord run_gradient_convergence_study(const StudyPlan& plan,
                                                   const ResumeRows* resume) {
    plan.validate(StudyKind::Gradient);
    const int d = plan.ensemble.dimension;
    const double L = plan.L_values[0];
    const auto n_T = static_cast<std::int64_t>(plan.T_values.size());

    std::vector<double> R_T(plan.T_values.size());
    for (std::size_t k = 0; k < plan.T_values.size(); ++k)
        R_T[k] =
            snap_up(L + plan.truncation_multiplier * std::sqrt(2.0 * plan.T_values[k]), plan.h);
    const Box big = Box::centered(d, R_T.back());
    if (resume) validate_resume_bounds(*resume, n_T, plan.n_samples);

    auto rows = gather_rows(plan.n_samples, n_T, resume, [&](std::int64_t i) {
        const CoefficientField field_big =
            realize_field(plan.ensemble, big, plan.h, static_cast<std::uint64_t>(i));
        std::vector<SampleRow> rs;
        for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
            const double T = plan.T_values[k];
            const CoefficientField field =
                k + 1 == plan.T_values.size() ? field_big
                                              : field_big.crop(Box::centered(d, R_T[k]));
            const OperatorSpec spec_T{T, false};
            const OperatorSpec spec_2T{2.0 * T, false};
            const CorrectorSolution phi_T =
                solve_modified_corrector(field, spec_T, plan.xi, plan.solver);
            const CorrectorSolution phi_2T =
                solve_modified_corrector(field, spec_2T, plan.xi, plan.solver);
            const AveragingMask mask = AveragingMask::make(field.layout(), L);
            const auto g1 = cell_gradient(phi_T.grad_phi);
            const auto g2 = cell_gradient(phi_2T.grad_phi);
            const GridLayout& g = field.layout();
            std::vector<double> diff2(static_cast<std::size_t>(g.cells()), 0.0);
            std::vector<double> phidiff2(static_cast<std::size_t>(g.cells()), 0.0);
            for (std::int64_t c = 0; c < g.cells(); ++c) {
                double s = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double dv = g2[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] -
                                      g1[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                    s += dv * dv;
                }
                diff2[static_cast<std::size_t>(c)] = s;
                const double dphi = phi_2T.phi.v[static_cast<std::size_t>(c)] -
                                    phi_T.phi.v[static_cast<std::size_t>(c)];
                phidiff2[static_cast<std::size_t>(c)] = dphi * dphi;
            }
            SampleRow r;
            r.cell_id = static_cast<std::int64_t>(k);
            r.L = L;
            r.T = T;
            r.R = R_T[k];
            r.sample_index = i;
            r.seed = mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i));
            r.xi = plan.xi;
            r.xi_prime = plan.xi;
            r.extra1 = masked_average(diff2, mask);
            r.extra2 = masked_average(phidiff2, mask);
            r.iterations = phi_T.iterations + phi_2T.iterations;
            r.residual = std::max(phi_T.residual_norm, phi_2T.residual_norm);
            r.field_hash = field.content_hash();
            rs.push_back(r);
        }
        return rs;
    });

    GradientStudyRecord rec;
    rec.plan = plan;
    rec.T_values = plan.T_values;
    rec.samples = rows;
    for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
        const auto d_vals = column(rows, static_cast<std::int64_t>(k), &SampleRow::extra1);
        const auto p_vals = column(rows, static_cast<std::int64_t>(k), &SampleRow::extra2);
        rec.D_T.push_back(mean(d_vals));
        rec.D_T_ci.push_back(mean_ci(d_vals));
        rec.phi_diff_sq.push_back(mean(p_vals));
        rec.phi_diff_sq_ci.push_back(mean_ci(p_vals));
    }
    try {
        rec.slope = fit_loglog_slope(rec.T_values, rec.D_T, rec.D_T_ci);
    } catch (const DataError&) {
        rec.slope = std::nullopt;
    }
    return rec;
}

// Moment study -------------------------------------------------------------------

MomentStudyRecord run_moment_study(const StudyPlan& plan, const ResumeRows* resume) {
    plan.validate(StudyKind::Moments);
    const int d = plan.ensemble.dimension;
    const auto n_T = static_cast<std::int64_t>(plan.T_values.size());
    const double pad = std::max(4.0, plan.probe_radius + 2.0);

    std::vector<double> R_T(plan.T_values.size());
    for (std::size_t k = 0; k < plan.T_values.size(); ++k)
        R_T[k] = snap_up(plan.truncation_multiplier * std::sqrt(plan.T_values[k]) + pad, plan.h);
    const Box big = Box::centered(d, R_T.back());
    if (resume) validate_resume_bounds(*resume, n_T, plan.n_samples);

    auto rows = gather_rows(plan.n_samples, n_T, resume, [&](std::int64_t i) {
        const CoefficientField field_big =
            realize_field(plan.ensemble, big, plan.h, static_cast<std::uint64_t>(i));
        std::vector<SampleRow> rs;
        for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
            const double T = plan.T_values[k];
            const CoefficientField field =
                k + 1 == plan.T_values.size() ? field_big
                                              : field_big.crop(Box::centered(d, R_T[k]));
            const OperatorSpec spec{T, false};
            const CorrectorSolution phi = solve_modified_corrector(field, spec, plan.xi, plan.solver);
            const GridLayout& g = field.layout();
            const auto grad = cell_gradient(phi.grad_phi);
            double ball = 0.0;
            for (std::int64_t c = 0; c < g.cells(); ++c) {
                const Vec3 x = g.center(g.unflat(c));
                double r2 = 0.0;
                for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
                if (r2 >= plan.probe_radius * plan.probe_radius) continue;
                double s = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double v = grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                    s += v * v;
                }
                ball += s;
            }
            SampleRow r;
            r.cell_id = static_cast<std::int64_t>(k);
            r.T = T;
            r.R = R_T[k];
            r.sample_index = i;
            r.seed = mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i));
            r.xi = plan.xi;
            r.xi_prime = plan.xi;
            r.extra1 = phi.phi.v[static_cast<std::size_t>(g.flat(g.cell_at({0.0, 0.0, 0.0})))];
            r.extra2 = ball * g.cell_volume();
            r.iterations = phi.iterations;
            r.residual = phi.residual_norm;
            r.field_hash = field.content_hash();
            rs.push_back(r);
        }
        return rs;
    });

    MomentStudyRecord rec;
    rec.plan = plan;
    rec.T_values = plan.T_values;
    rec.samples = rows;

    for (double q : plan.q_list)
        for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
            const auto phi0 = column(rows, static_cast<std::int64_t>(k), &SampleRow::extra1);
            const auto ball = column(rows, static_cast<std::int64_t>(k), &SampleRow::extra2);
            MomentEstimate me;
            me.q = q;
            me.T = plan.T_values[k];
            me.n_samples = static_cast<int>(phi0.size());
            std::vector<double> pq(phi0.size()), gq(ball.size());
            for (std::size_t i = 0; i < phi0.size(); ++i) pq[i] = std::pow(std::abs(phi0[i]), q);
            for (std::size_t i = 0; i < ball.size(); ++i) gq[i] = std::pow(ball[i], q / 2.0);
            me.moment_phi = std::pow(mean(pq), 1.0 / q);
            me.moment_grad = std::pow(mean(gq), 1.0 / q);
            me.ci_halfwidth = 1.96 * std::sqrt(jackknife_variance(pq, [q](const std::vector<double>& xs) {
                                  return std::pow(mean(xs), 1.0 / q);
                              }));
            rec.moments.push_back(me);
        }

    // moment_phi(2,T)^2 against ln T, and gradient flatness at q=2
    std::vector<double> lnT, phi2;
    double gmin = 1e300, gmax = 0.0;
    for (const auto& me : rec.moments) {
        if (me.q != 2.0) continue;
        lnT.push_back(std::log(me.T));
        phi2.push_back(me.moment_phi * me.moment_phi);
        gmin = std::min(gmin, me.moment_grad);
        gmax = std::max(gmax, me.moment_grad);
    }
    if (lnT.size() >= 3) rec.phi2_vs_lnT = fit_linear(lnT, phi2);
    rec.grad_flatness = gmin > 0.0 ? gmax / gmin : 0.0;
    return rec;
}

// Sensitivity probe ----------------------------------------------------------------

SensitivityRecord run_sensitivity_probe(const StudyPlan& plan, int n_probe,
                                        const ResumeRows* resume) {
    plan.validate(StudyKind::Sensitivity);
    if (n_probe < 8) throw ConfigError("sensitivity probe: need n_probe >= 8");
    const int d = plan.ensemble.dimension;
    const double T = plan.T_values[0];
    const double pert_radius = 2.0;
    double dist_max = 0.0;
    for (double dist : plan.distances) dist_max = std::max(dist, dist_max);
    const double R_dom =
        snap_up(dist_max + plan.truncation_multiplier * std::sqrt(T), plan.h);
    const Box box = Box::centered(d, R_dom);
    const auto n_cells = static_cast<std::int64_t>(plan.distances.size());
    if (resume) validate_resume_bounds(*resume, n_cells, n_probe);

    auto rows = gather_rows(n_probe, n_cells, resume, [&](std::int64_t i) {
        const CoefficientField field =
            realize_field(plan.ensemble, box, plan.h, static_cast<std::uint64_t>(i));
        const GridLayout& g = field.layout();
        const OperatorSpec spec{T, false};
        const CorrectorSolution base = solve_modified_corrector(field, spec, plan.xi, plan.solver);

        // perturbation ball B_2(0)
        std::vector<std::int64_t> ball;
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
            if (r2 < pert_radius * pert_radius) ball.push_back(c);
        }
        // local corrector energy over B_{3R}(z) = B_6(0)
        const auto gbase = cell_gradient(base.grad_phi);
        double local_energy = 0.0;
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
            if (r2 >= 9.0 * pert_radius * pert_radius) continue;
            double s = 0.0;
            for (int a = 0; a < d; ++a) {
                const double v = gbase[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                s += v * v;
            }
            local_energy += s;
        }
        local_energy = local_energy * g.cell_volume() + 1.0;

        // K = 4 extreme/random fills of the ball
        std::vector<CoefficientField> pert;
        auto filled = [&](const std::function<double(std::size_t)>& value) {
            std::vector<double> cells(static_cast<std::size_t>(g.cells()));
            for (std::int64_t c = 0; c < g.cells(); ++c)
                cells[static_cast<std::size_t>(c)] = field.scalar_at(c);
            for (std::size_t b = 0; b < ball.size(); ++b)
                cells[static_cast<std::size_t>(ball[b])] = value(b);
            return CoefficientField::isotropic(g, std::move(cells));
        };
        const double lam = plan.ensemble.contrast;
        pert.push_back(filled([&](std::size_t) { return lam; }));
        pert.push_back(filled([&](std::size_t) { return 1.0; }));
        for (int k = 0; k < 2; ++k) {
            Rng rng(derive_stream_key(mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i)),
                                      static_cast<std::uint64_t>(k), StreamTag::Perturbation));
            std::vector<double> vals(ball.size());
            for (auto& v : vals) v = k == 0 ? (rng.next_u01() < 0.5 ? lam : 1.0)
                                            : rng.next_uniform(lam, 1.0);
            pert.push_back(filled([&](std::size_t b) { return vals[b]; }));
        }
        std::vector<CorrectorSolution> psol;
        for (const auto& pf : pert)
            psol.push_back(solve_modified_corrector(pf, spec, plan.xi, plan.solver));

        std::vector<SampleRow> rs;
        for (std::size_t kd = 0; kd < plan.distances.size(); ++kd) {
            Vec3 x{0.0, 0.0, 0.0};
            x[0] = plan.distances[kd];
            const MultiIndex src = g.cell_at(x);
            const std::int64_t xc = g.flat(src);
            const GridFunction G = solve_green_column(field, spec, src, plan.solver);
            const auto gG = cell_gradient(gradient(G));
            double hT2 = 0.0;
            for (std::int64_t c : ball) {
                double s = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double v = gG[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                    s += v * v;
                }
                hT2 += s;
            }
            const double h_T = std::sqrt(hT2 * g.cell_volume());
            double vmin = base.phi.v[static_cast<std::size_t>(xc)];
            double vmax = vmin;
            for (const auto& ps : psol) {
                vmin = std::min(vmin, ps.phi.v[static_cast<std::size_t>(xc)]);
                vmax = std::max(vmax, ps.phi.v[static_cast<std::size_t>(xc)]);
            }
            const double osc = vmax - vmin;
            SampleRow r;
            r.cell_id = static_cast<std::int64_t>(kd);
            r.L = plan.distances[kd];
            r.T = T;
            r.R = R_dom;
            r.sample_index = i;
            r.seed = mix_seed(plan.ensemble.master_seed, static_cast<std::uint64_t>(i));
            r.xi = plan.xi;
            r.xi_prime = plan.xi;
            r.extra1 = h_T > 0.0 ? osc / (h_T * std::sqrt(local_energy)) : 0.0;
            r.extra2 = h_T;
            r.iterations = base.iterations;
            r.residual = base.residual_norm;
            r.field_hash = field.content_hash();
            rs.push_back(r);
        }
        return rs;
    });

    SensitivityRecord rec;
    rec.plan = plan;
    rec.distances = plan.distances;
    rec.samples = rows;
    for (std::size_t kd = 0; kd < plan.distances.size(); ++kd)
        rec.p95.push_back(percentile(column(rows, static_cast<std::int64_t>(kd), &SampleRow::extra1), 95.0));
    double pmin = 1e300, pmax = 0.0;
    for (double p : rec.p95) {
        pmin = std::min(pmin, p);
        pmax = std::max(pmax, p);
    }
    rec.stability = pmin > 0.0 ? pmax / pmin : 0.0;
    rec.pass = rec.stability > 0.0 && rec.stability <= 3.0;
    return rec;
}

// Optional psi variance diagnostics --------------------------------------------

PsiVarianceRecord run_psi_variance_study(const StudyPlan& plan) {
    plan.validate(StudyKind::PsiVariance);
    const int d = plan.ensemble.dimension;
    std::vector<double> R_T(plan.T_values.size());
    for (std::size_t k = 0; k < plan.T_values.size(); ++k)
        R_T[k] = snap_up(plan.truncation_multiplier * std::sqrt(plan.T_values[k]) + 4.0, plan.h);
    const Box big = Box::centered(d, R_T.back());

    auto rows = gather_rows(plan.n_samples, static_cast<std::int64_t>(plan.T_values.size()),
                            nullptr, [&](std::int64_t i) {
        const CoefficientField field_big =
            realize_field(plan.ensemble, big, plan.h, static_cast<std::uint64_t>(i));
        std::vector<SampleRow> rs;
        for (std::size_t k = 0; k < plan.T_values.size(); ++k) {
            const double T = plan.T_values[k];
            const CoefficientField field =
                k + 1 == plan.T_values.size() ? field_big
                                              : field_big.crop(Box::centered(d, R_T[k]));
            const OperatorSpec spec{T, false};
            const CorrectorSolution phi = solve_modified_corrector(field, spec, plan.xi, plan.solver);
            SolveReport psi_rep;
            const GridFunction psi = solve_psi(field, spec, phi, plan.solver, &psi_rep);
            const GridLayout& g = field.layout();
            SampleRow r;
            r.cell_id = static_cast<std::int64_t>(k);
            r.T = T;
            r.R = R_T[k];
            r.sample_index = i;
            r.extra1 = psi.v[static_cast<std::size_t>(g.flat(g.cell_at({0.0, 0.0, 0.0})))];
            r.iterations = phi.iterations + psi_rep.iterations;
            r.residual = std::max(phi.residual_norm, psi_rep.residual);
            r.field_hash = field.content_hash();
            rs.push_back(r);
        }
        return rs;
    });

    PsiVarianceRecord rec;
    rec.plan = plan;
    rec.T_values = plan.T_values;
    rec.samples = rows;
    for (std::size_t k = 0; k < plan.T_values.size(); ++k)
        rec.var_psi.push_back(sample_variance(column(rows, static_cast<std::int64_t>(k), &SampleRow::extra1)));
    if (rec.var_psi.size() >= 3) {
        try {
            rec.slope = fit_loglog_slope(rec.T_values, rec.var_psi);
        } catch (const DataError&) {
            rec.slope = std::nullopt;
        }
    }
    return rec;
}

// samples.csv -------------------------------------------------------------------

const char* kSamplesCsvHeader =
    "cell_id,sample_index,T,L,R,xi,xi_prime,value_with,value_without,zero_order,extra1,extra2,"
    "iterations,residual,seed,field_hash";

std::string sample_row_to_csv(const SampleRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%lld,%lld,%.17g,%.17g,%.17g,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.6e,%llu,%llu",
                  static_cast<long long>(row.cell_id), static_cast<long long>(row.sample_index),
                  row.T, row.L, row.R, vec_to_string(row.xi).c_str(),
                  vec_to_string(row.xi_prime).c_str(), row.value_with, row.value_without,
                  row.zero_order, row.extra1, row.extra2, row.iterations, row.residual,
                  static_cast<unsigned long long>(row.seed),
                  static_cast<unsigned long long>(row.field_hash));
    return buf;
}

void write_samples_csv(const std::string& path, const std::vector<SampleRow>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << kSamplesCsvHeader << "\n";
    for (const auto& r : rows) os << sample_row_to_csv(r) << "\n";
}

ResumeRows read_samples_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("inconsistent resume state: empty samples.csv");
    if (line != kSamplesCsvHeader)
        throw DataError("inconsistent resume state: unexpected samples.csv header");
    ResumeRows out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        SampleRow r;
        char xi[32], xip[32];
        long long cell = 0, sample = 0;
        unsigned long long seed = 0, hash = 0;
        const int got = std::sscanf(
            line.c_str(), "%lld,%lld,%lf,%lf,%lf,%31[^,],%31[^,],%lf,%lf,%lf,%lf,%lf,%d,%lf,%llu,%llu",
            &cell, &sample, &r.T, &r.L, &r.R, xi, xip, &r.value_with, &r.value_without,
            &r.zero_order, &r.extra1, &r.extra2, &r.iterations, &r.residual, &seed, &hash);
        if (got != 16)
            throw DataError("inconsistent resume state: malformed samples.csv line " +
                            std::to_string(lineno));
        r.cell_id = cell;
        r.sample_index = sample;
        r.seed = seed;
        r.field_hash = hash;
        r.xi = vec_from_string(xi);
        r.xi_prime = vec_from_string(xip);
        if (!out.emplace(std::make_pair(r.cell_id, r.sample_index), r).second)
            throw DataError("inconsistent resume state: duplicate (cell, sample) at line " +
                            std::to_string(lineno));
    }
    return out;
}

void validate_resume_bounds(const ResumeRows& rows, std::int64_t n_cells,
                            std::int64_t n_samples) {
    for (const auto& [key, row] : rows) {
        (void)row;
        if (key.first < 0 || key.first >= n_cells || key.second < 0 || key.second >= n_samples)
            throw DataError("inconsistent resume state: sample outside the plan's ranges");
    }
}

StudyPlan plan_from_config(const Config& cfg, StudyKind kind) {
    StudyPlan plan;
    plan.ensemble.kind = ensemble_kind_from_string(cfg.get_string("ensemble", "kind"));
    plan.ensemble.dimension = static_cast<int>(cfg.get_int("ensemble", "dimension"));
    plan.ensemble.contrast = cfg.get_double("ensemble", "contrast", 0.25);
    plan.ensemble.inclusion_radius = cfg.get_double("ensemble", "inclusion_radius", 1.0);
    plan.ensemble.intensity = cfg.get_double("ensemble", "intensity", 1.0);
    plan.ensemble.master_seed = cfg.get_u64("ensemble", "master_seed", 0);
    if (cfg.has("ensemble", "values")) {
        const auto values = cfg.get_double_list("ensemble", "values");
        std::vector<double> probs(values.size(), 1.0 / static_cast<double>(values.size()));
        if (cfg.has("ensemble", "probabilities")) probs = cfg.get_double_list("ensemble", "probabilities");
        if (probs.size() != values.size())
            throw ConfigError("ensemble.probabilities must match ensemble.values in length");
        for (std::size_t i = 0; i < values.size(); ++i)
            plan.ensemble.cell_values.push_back(
                {Tensor::isotropic(plan.ensemble.dimension, values[i]), probs[i]});
    }

    plan.L_values = cfg.get_double_list("study", "L_values", {8.0});
    plan.T_values = cfg.get_double_list("study", "T_values", {8.0});
    plan.truncation_multiplier = cfg.get_double("study", "kappa", 3.0);
    plan.h = cfg.get_double("study", "h", 0.25);
    plan.n_samples = static_cast<int>(cfg.get_int("study", "n_samples", 8));
    plan.probe_radius = cfg.get_double("study", "probe_radius", 2.0);
    plan.distances = cfg.get_double_list("study", "distances", {6.0, 12.0, 24.0});
    plan.q_list = cfg.get_double_list("study", "q_list", {1.0, 2.0});
    const std::string xi = cfg.get_string("study", "xi", "e1");
    const std::string xip = cfg.get_string("study", "xi_prime", xi);
    plan.xi = vec_from_string(xi);
    plan.xi_prime = vec_from_string(xip);

    plan.solver.tol = cfg.get_double("solver", "tol", 1e-8);
    plan.solver.max_iter = cfg.get_int("solver", "max_iter", 0);
    const std::string pre = cfg.get_string("solver", "preconditioner", "auto");
    if (pre == "auto") plan.solver.preconditioner = Preconditioner::Auto;
    else if (pre == "jacobi") plan.solver.preconditioner = Preconditioner::Jacobi;
    else if (pre == "spectral") plan.solver.preconditioner = Preconditioner::Spectral;
    else if (pre == "none") plan.solver.preconditioner = Preconditioner::None;
    else throw ConfigError("solver.preconditioner must be auto|jacobi|spectral|none");
    const std::string fa = cfg.get_string("solver", "face_average", "arithmetic");
    if (fa == "arithmetic") plan.solver.face_average = FaceAverage::Arithmetic;
    else if (fa == "harmonic") plan.solver.face_average = FaceAverage::Harmonic;
    else throw ConfigError("solver.face_average must be arithmetic|harmonic");
    plan.solver.spectral_threshold = cfg.get_int("solver", "spectral_threshold", 2'000'000);

    plan.validate(kind);
    return plan;
}

}  // namespace homog
