// The modified-corrector operator T^{-1} - div(A grad .) on a truncated box
// with homogeneous Dirichlet conditions, and the solves built on it:
// corrector, adjoint corrector, psi_T, Green columns.
//
// Discretization: cell-centered finite volume; two-point flux with arithmetic
// (optionally harmonic) face averaging of the diagonal tensor entries;
// off-diagonal entries assembled variationally from cell-averaged gradients,
// which keeps the bilinear form exactly symmetric for symmetric A.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "homog/grid.hpp"

namespace homog {

enum class Preconditioner { Auto, None, Jacobi, Spectral };
enum class FaceAverage { Arithmetic, Harmonic };

std::string to_string(Preconditioner p);
std::string to_string(FaceAverage f);

struct SolverOptions {
    double tol = 1e-8;          // relative residual ||b - L x|| / ||b||
    std::int64_t max_iter = 0;  // 0 => 50 * cells^(1/d)
    Preconditioner preconditioner = Preconditioner::Auto;
    FaceAverage face_average = FaceAverage::Arithmetic;
    std::int64_t spectral_threshold = 2'000'000;  // Auto: spectral at/above this many cells
    std::string diagnostics_path;                 // JSON-lines log, empty = off
};

struct OperatorSpec {
    double T = 64.0;  // massive parameter; +infinity disables the zero-order term
    bool use_transpose = false;

    double inv_T() const;
    void validate() const;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;  // downsampled
};

struct CorrectorSolution {
    GridFunction phi;
    FaceField grad_phi;
    Vec3 xi{1.0, 0.0, 0.0};
    double T = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
    double domain_radius = 0.0;
};

// Matrix-free assembled operator: face coefficients precomputed per axis.
class EllipticOperator {
  public:
    EllipticOperator(const CoefficientField& field, const OperatorSpec& spec,
                     FaceAverage fa = FaceAverage::Arithmetic);

    const GridLayout& layout() const { return layout_; }
    double inv_T() const { return inv_T_; }
    bool symmetric() const { return symmetric_; }

    void apply(const double* u, double* out) const;
    void apply_transpose(const double* u, double* out) const;

    std::vector<double> rhs_for_xi(const Vec3& xi) const;  // div(A xi)
    FaceField flux(const double* u, const Vec3& xi) const; // A(xi + grad u) at faces
    std::vector<double> diagonal() const;
    void coefficient_range(double& lo, double& hi) const { lo = coeff_lo_; hi = coeff_hi_; }

  private:
    void apply_impl(const double* u, double* out, bool transpose) const;

    GridLayout layout_;
    double inv_T_ = 0.0;
    bool symmetric_ = true;
    bool has_offdiag_ = false;
    double coeff_lo_ = 1.0, coeff_hi_ = 1.0;
    std::vector<double> face_coeff_[3];   // a_ii at faces orthogonal to axis i
    std::vector<double> offdiag_;         // per cell, row-major d x d (zero diagonal)
};

// Single operator application (matrix-free), exposed as an operation of its own.
GridFunction apply_operator(const CoefficientField& field, const OperatorSpec& spec,
                            const GridFunction& u,
                            FaceAverage fa = FaceAverage::Arithmetic);

CorrectorSolution solve_modified_corrector(const CoefficientField& field, const OperatorSpec& spec,
                                           const Vec3& xi, const SolverOptions& opts = {});

// Same problem for the pointwise transpose A*.
CorrectorSolution solve_adjoint_corrector(const CoefficientField& field, const OperatorSpec& spec,
                                          const Vec3& xi_prime, const SolverOptions& opts = {});

// T^{-1} psi - div(A grad psi) = phi_T.
GridFunction solve_psi(const CoefficientField& field, const OperatorSpec& spec,
                       const CorrectorSolution& phi, const SolverOptions& opts = {},
                       SolveReport* report = nullptr);

// Discrete Green column: RHS h^{-d} at the source cell.
GridFunction solve_green_column(const CoefficientField& field, const OperatorSpec& spec,
                                const MultiIndex& source, const SolverOptions& opts = {},
                                SolveReport* report = nullptr);

// |T^{-1} sum phi^2 + sum grad phi . A grad phi + sum grad phi . A xi| relative
// to the magnitude of the terms; exact discrete pairing, so this is ~0 for a
// converged solve.
double energy_identity_residual(const CoefficientField& field, const OperatorSpec& spec,
                                const CorrectorSolution& sol,
                                FaceAverage fa = FaceAverage::Arithmetic);

FaceField corrector_flux(const CoefficientField& field, const OperatorSpec& spec,
                         const CorrectorSolution& sol,
                         FaceAverage fa = FaceAverage::Arithmetic);

}  // namespace homog
