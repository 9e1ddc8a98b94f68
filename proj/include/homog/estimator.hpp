// Homogenized-coefficient estimators and corrector statistics computed from
// solved realizations: masked energy averages (with and without the zero-order
// term), Monte Carlo means with jackknife CIs, Richardson extrapolation in T,
// and corrector moments.
#pragma once

#include <cstdint>
#include <vector>

#include "homog/grid.hpp"
#include "homog/solver.hpp"

namespace homog {

struct EnergyEstimate {
    Vec3 xi{1.0, 0.0, 0.0};
    Vec3 xi_prime{1.0, 0.0, 0.0};
    double T = 0.0;
    double L = 0.0;
    double R = 0.0;
    double value_with_zero_order = 0.0;   // xi'. A_{T,L} xi
    double value_without_zero_order = 0.0; // xi'. A~_{T,L} xi
    double zero_order_part = 0.0;          // masked avg of T^{-1} phi' phi
    std::int64_t sample_index = 0;
};

// Masked energy estimate from a corrector/adjoint pair sharing field, T, grid.
// Gradients are reconstructed at cells; the pre R - L >= 2 sqrt(T) is enforced.
EnergyEstimate energy_estimate(const CoefficientField& field, const CorrectorSolution& phi,
                               const CorrectorSolution& phi_adj, const AveragingMask& mask);

struct MeanEstimate {
    double mean = 0.0;
    double jackknife_variance = 0.0;
    double ci_halfwidth = 0.0;  // 1.96 sqrt(jackknife variance)
    int n = 0;
};

// Monte Carlo estimate of xi'.A_T xi: sample mean of value_without_zero_order.
// All samples must share (T, L, R, xi, xi').
MeanEstimate estimate_A_T(const std::vector<EnergyEstimate>& samples);

struct ExtrapolationPoint {
    double T = 0.0;
    double value = 0.0;
    double ci = 0.0;
};

struct ExtrapolationResult {
    double value = 0.0;
    double ci = 0.0;  // propagated assuming independent inputs
    int order = 1;
};

// Richardson extrapolation over a dyadic T-progression; k=1 cancels T^{-1},
// k=2 cancels T^{-1} and T^{-2}. Uses the largest k+1 points.
ExtrapolationResult richardson_extrapolate(const std::vector<ExtrapolationPoint>& values, int order);

struct MomentEstimate {
    double q = 2.0;
    double T = 0.0;
    double moment_phi = 0.0;   // < |phi_T(0)|^q >^{1/q}
    double moment_grad = 0.0;  // < (int_{B_r} |grad phi|^2)^{q/2} >^{1/q}
    int n_samples = 0;
    double ci_halfwidth = 0.0;  // jackknife CI of moment_phi
};

MomentEstimate corrector_moments(const std::vector<const CorrectorSolution*>& phis, double q,
                                 double probe_radius);

}  // namespace homog
