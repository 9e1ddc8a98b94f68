// Monte Carlo orchestration: parameter sweeps over (L, T), sample scheduling,
// variance / systematic-error / gradient-convergence / moment scaling studies,
// the sensitivity probe, and slope fitting with jackknife confidence intervals.
//
// Sampling is coupled across T within a study: each sample index realizes one
// field on the largest box and solves every T on aligned crops of it, so
// T-differences are variance-reduced while per-T estimates stay unbiased.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "homog/ensemble.hpp"
#include "homog/estimator.hpp"
#include "homog/solver.hpp"
#include "homog/stats.hpp"

namespace homog {

enum class StudyKind { Variance, Systematic, Gradient, Moments, Sensitivity, PsiVariance };

std::string to_string(StudyKind k);
StudyKind study_kind_from_string(const std::string& s);

struct StudyPlan {
    EnsembleSpec ensemble;
    Vec3 xi{1.0, 0.0, 0.0};
    Vec3 xi_prime{1.0, 0.0, 0.0};
    std::vector<double> L_values;
    std::vector<double> T_values;
    double truncation_multiplier = 3.0;  // kappa: R = L + kappa sqrt(T)
    double h = 0.25;
    int n_samples = 8;
    double probe_radius = 2.0;                     // moment study
    std::vector<double> distances = {6.0, 12.0, 24.0};  // sensitivity probe
    std::vector<double> q_list = {1.0, 2.0};            // moment study
    SolverOptions solver;

    void validate(StudyKind kind) const;
};

// One row of samples.csv; the meaning of value_* / extra_* depends on the
// study kind (documented in the README).
struct SampleRow {
    std::int64_t cell_id = 0;
    double L = 0.0, T = 0.0, R = 0.0;
    std::int64_t sample_index = 0;
    std::uint64_t seed = 0;
    Vec3 xi{1.0, 0.0, 0.0};
    Vec3 xi_prime{1.0, 0.0, 0.0};
    double value_with = 0.0, value_without = 0.0, zero_order = 0.0;
    double extra1 = 0.0, extra2 = 0.0;
    int iterations = 0;
    double residual = 0.0;
    std::uint64_t field_hash = 0;
};

struct VarianceCell {
    double L = 0.0, T = 0.0, R = 0.0;
    int n = 0;
    double mean_without = 0.0;
    double var_without = 0.0, var_without_ci = 0.0;
    double var_with = 0.0, var_with_ci = 0.0;
    double var_zero = 0.0, var_zero_ci = 0.0;                    // Var(T^{-1} masked phi' phi)
    double var_zero_integral = 0.0, var_zero_integral_ci = 0.0;  // Var(masked phi' phi)
    bool failed = false;
    std::string error;
};

struct VarianceStudyRecord {
    StudyPlan plan;
    std::vector<VarianceCell> cells;
    std::vector<SampleRow> samples;
    std::optional<SlopeFit> slope_without;
    std::optional<SlopeFit> slope_with;
    std::optional<SlopeFit> slope_zero_integral;
    bool degenerate = false;  // constant ensemble: zero variances, no fit
};

struct SystematicStudyRecord {
    StudyPlan plan;
    std::vector<double> T_values;
    std::vector<MeanEstimate> A_T;
    double reference = 0.0;    // order-2 Richardson at the largest T
    double reference_ci = 0.0;
    std::vector<double> fit_T;       // all but the largest two
    std::vector<double> fit_error;   // |A_T - reference|
    std::vector<double> fit_error_ci;
    std::optional<SlopeFit> slope;
    bool underpowered = false;
    std::vector<SampleRow> samples;
};

struct GradientStudyRecord {
    StudyPlan plan;
    std::vector<double> T_values;
    std::vector<double> D_T, D_T_ci;              // masked |grad phi_2T - grad phi_T|^2
    std::vector<double> phi_diff_sq, phi_diff_sq_ci;
    std::optional<SlopeFit> slope;
    std::vector<SampleRow> samples;
};

struct MomentStudyRecord {
    StudyPlan plan;
    std::vector<double> T_values;
    std::vector<MomentEstimate> moments;  // for each q in q_list x each T
    std::optional<SlopeFit> phi2_vs_lnT;  // linear fit of moment_phi(2,T)^2 on ln T
    double grad_flatness = 0.0;           // max/min of moment_grad(2, T) over T
    std::vector<SampleRow> samples;
};

struct SensitivityRecord {
    StudyPlan plan;
    std::vector<double> distances;
    std::vector<double> p95;  // 95th percentile oscillation ratio per distance
    double stability = 0.0;   // max p95 / min p95
    bool pass = false;
    std::vector<SampleRow> samples;
};

struct PsiVarianceRecord {
    StudyPlan plan;
    std::vector<double> T_values;
    std::vector<double> var_psi;  // Var(psi_T(0)) across samples
    std::optional<SlopeFit> slope;
    std::vector<SampleRow> samples;
};

// Previously computed rows for resume; keyed by (cell_id, sample_index).
using ResumeRows = std::map<std::pair<std::int64_t, std::int64_t>, SampleRow>;

VarianceStudyRecord run_variance_study(const StudyPlan& plan, const ResumeRows* resume = nullptr);
SystematicStudyRecord run_systematic_study(const StudyPlan& plan, const ResumeRows* resume = nullptr);
GradientStudyRecord run_gradient_convergence_study(const StudyPlan& plan,
                                                   const ResumeRows* resume = nullptr);
MomentStudyRecord run_moment_study(const StudyPlan& plan, const ResumeRows* resume = nullptr);
SensitivityRecord run_sensitivity_probe(const StudyPlan& plan, int n_probe,
                                        const ResumeRows* resume = nullptr);
PsiVarianceRecord run_psi_variance_study(const StudyPlan& plan);

// Aggregation helpers shared with the synthetic-data tests; xs[i] = per-sample
// estimates for abscissa[i].
struct VarianceFitInput {
    double abscissa = 0.0;
    std::vector<double> values;
};
SlopeFit fit_variance_slope(const std::vector<VarianceFitInput>& cells);

// samples.csv IO --------------------------------------------------------------

extern const char* kSamplesCsvHeader;

std::string sample_row_to_csv(const SampleRow& row);
void write_samples_csv(const std::string& path, const std::vector<SampleRow>& rows);
// Throws DataError on malformed content (resume-state inconsistencies).
ResumeRows read_samples_csv(const std::string& path);
// Rejects resume rows outside the plan's cell/sample ranges.
void validate_resume_bounds(const ResumeRows& rows, std::int64_t n_cells, std::int64_t n_samples);

// Study plan from a config (sections [ensemble], [study], [solver]).
StudyPlan plan_from_config(const class Config& cfg, StudyKind kind);

}  // namespace homog
