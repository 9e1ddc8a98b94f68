// Structured-grid containers and calculus: coefficient fields, scalar grid
// functions, face-based gradients/fluxes, masked integrals, file dumps.
//
// Conventions (shared with the solver):
//   - cell-centered values, flat order axis-0 fastest;
//   - FaceField component `axis` has n[axis]+1 layers of faces;
//   - gradients across the domain boundary use the Dirichlet ghost value 0.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homog/geometry.hpp"
#include "homog/tensor.hpp"

namespace homog {

enum class FieldStorage { Uniform, Isotropic, Diagonal, Full };

// A realization of the coefficient field A on a grid. Storage adapts to the
// tensor structure; tensor_at() always presents the full d x d value.
class CoefficientField {
  public:
    CoefficientField() = default;

    static CoefficientField uniform(const GridLayout& g, const Tensor& value);
    static CoefficientField isotropic(const GridLayout& g, std::vector<double> cell_scalars);
    static CoefficientField full(const GridLayout& g, std::vector<Tensor> cell_tensors);

    const GridLayout& layout() const { return layout_; }
    FieldStorage storage() const { return storage_; }

    Tensor tensor_at(std::int64_t flat) const;
    double scalar_at(std::int64_t flat) const;  // Isotropic/Uniform-isotropic fast path
    double entry_at(std::int64_t flat, int i, int j) const;

    bool isotropic_like() const {
        return storage_ == FieldStorage::Isotropic ||
               (storage_ == FieldStorage::Uniform && uniform_.is_isotropic());
    }
    bool diagonal_like() const;
    bool symmetric(double tol = 0.0) const;

    // Per-cell transpose (adjoint coefficients A*).
    CoefficientField transposed() const;

    // Restriction to a sub-box whose cell lattice aligns with this field's.
    CoefficientField crop(const Box& sub) const;

    // Omega_0 check on every cell: op norm <= 1, sym part >= lambda.
    void validate(double lambda) const;

    // Min/max of diagonal entries over cells (used by the spectral preconditioner).
    void coefficient_range(double& lo, double& hi) const;

    std::uint64_t content_hash() const;

    const std::vector<double>& raw() const { return data_; }

  private:
    GridLayout layout_;
    FieldStorage storage_ = FieldStorage::Uniform;
    Tensor uniform_ = Tensor::identity(2);
    std::vector<double> data_;  // Isotropic: 1/cell; Diagonal: d/cell; Full: d*d/cell
};

struct GridFunction {
    GridLayout layout;
    std::vector<double> v;

    static GridFunction zeros(const GridLayout& g) {
        GridFunction f;
        f.layout = g;
        f.v.assign(static_cast<std::size_t>(g.cells()), 0.0);
        return f;
    }
    double& at(const MultiIndex& m) { return v[static_cast<std::size_t>(layout.flat(m))]; }
    double at(const MultiIndex& m) const { return v[static_cast<std::size_t>(layout.flat(m))]; }
};

struct FaceField {
    GridLayout layout;
    std::vector<double> comp[3];  // comp[axis] over faces orthogonal to axis

    static FaceField zeros(const GridLayout& g) {
        FaceField f;
        f.layout = g;
        for (int a = 0; a < g.d; ++a) f.comp[a].assign(static_cast<std::size_t>(g.faces(a)), 0.0);
        return f;
    }
    // Face (m, m + e_axis) where m may have index n[axis] meaning the right boundary.
    std::int64_t face_flat(int axis, const MultiIndex& m) const {
        std::int64_t f = m[layout.d - 1];
        for (int a = layout.d - 2; a >= 0; --a) {
            const std::int64_t na = (a == axis) ? layout.n[a] + 1 : layout.n[a];
            f = f * na + m[a];
        }
        return f;
    }
};

// Normalized cos^2 averaging bump supported in B_L, discretely normalized so
// that sum(eta) * h^d == 1 exactly.
struct AveragingMask {
    double L = 0.0;
    GridLayout layout;
    Vec3 center{0.0, 0.0, 0.0};
    std::vector<double> eta;  // per cell, zero outside B_L

    static AveragingMask make(const GridLayout& g, double L, const Vec3& center = {0.0, 0.0, 0.0});
};

// Discrete calculus ---------------------------------------------------------

FaceField gradient(const GridFunction& u);
GridFunction divergence(const FaceField& q);

// Per-cell gradient reconstruction: average of the two bounding faces per axis.
// Returned as d grid-function-shaped arrays (component per axis).
std::vector<std::vector<double>> cell_gradient(const FaceField& g);

double masked_average(const GridFunction& w, const AveragingMask& mask);
// Same quadrature applied to an arbitrary per-cell array.
double masked_average(const std::vector<double>& w, const AveragingMask& mask);

// File dumps ----------------------------------------------------------------
// Binary layout (little endian): magic "HGD1", u32 kind (0 grid function,
// 1 coefficient field diag/iso as d scalars per cell), u32 d, f64 lo[3] hi[3] h,
// u64 n[3], u64 values_per_cell, payload f64[cells*values_per_cell], axis-0 fastest.

void write_grid_function_binary(const GridFunction& f, const std::string& path);
void write_grid_function_csv(const GridFunction& f, const std::string& path);
void write_field_binary(const CoefficientField& f, const std::string& path);
void write_field_csv(const CoefficientField& f, const std::string& path);

}  // namespace homog
