// Empirical probes of the massive Green function: pointwise decay against the
// Yukawa-type envelope, annulus gradient norms with a Meyers p-sweep, annealed
// gradient averages, and the oscillation (perturbation-stability) probe.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homog/ensemble.hpp"
#include "homog/solver.hpp"

namespace homog {

// Dyadic annulus at radius r: { r <= |x - y| < 2r }.

struct PointwiseDecayReport {
    double T = 0.0;
    std::vector<double> radii;
    std::vector<double> max_per_annulus;
    double fitted_rate_c = 0.0;      // exponential rate from log(max/shape) vs r
    double fitted_amplitude_C = 0.0; // smallest C with max G <= C * g_T on all annuli
    bool pass = false;
};

// shape(r) = ln(2 + sqrt(T)/r) for d=2, r^{2-d} for d>2.
double green_shape(int d, double T, double r);

PointwiseDecayReport pointwise_decay_probe(const GridFunction& G, const MultiIndex& source,
                                           double T, const std::vector<double>& radii);

struct AnnulusGradientTable {
    std::vector<double> radii;
    std::vector<double> p_values;
    std::vector<std::vector<double>> norms;  // norms[p_index][radius_index]
    std::vector<double> fitted_exponent;     // log-log slope per p
    bool monotone_in_p = false;
};

AnnulusGradientTable annulus_gradient_norms(const GridFunction& G, const MultiIndex& source,
                                            const std::vector<double>& radii,
                                            const std::vector<double>& p_sweep);

struct AnnealedGradientTable {
    std::vector<double> radii;
    std::vector<double> rms;  // (E |grad G|^2)^{1/2} at the annulus mid-radius points
    std::vector<double> ci;   // jackknife CI halfwidths
    double fitted_exponent = 0.0;
    double fitted_exponent_stderr = 0.0;
    int n_samples = 0;
};

AnnealedGradientTable annealed_gradient_probe(const EnsembleSpec& spec, double T, int n_samples,
                                              const std::vector<double>& radii,
                                              double domain_radius, double h,
                                              const SolverOptions& opts = {});

struct OscillationProbeReport {
    std::vector<double> x_distances;
    std::vector<double> ratios;  // per distance: max over perturbations of the energy ratio
    double max_ratio = 0.0;
};

// K = 8 candidate perturbations inside B(z, radius): all-lambda, all-identity,
// and 6 deterministic random fills derived from `seed`.
OscillationProbeReport green_oscillation_probe(const CoefficientField& field, const Vec3& z,
                                               double pert_radius, double lambda, double T,
                                               const std::vector<double>& x_distances,
                                               std::uint64_t seed,
                                               const SolverOptions& opts = {});

void write_green_report_json(const std::string& path, const PointwiseDecayReport& pw,
                             const AnnulusGradientTable& table);
void write_annulus_csv(const std::string& path, const AnnulusGradientTable& table);

}  // namespace homog
