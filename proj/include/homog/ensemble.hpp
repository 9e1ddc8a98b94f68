// Stationary random coefficient ensembles: Poisson spherical inclusions,
// iid unit checkerboard, constant tensors, deterministic periodic laminates.
// Realizations are reproducible from (master_seed, sample_index).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homog/geometry.hpp"
#include "homog/grid.hpp"
#include "homog/stats.hpp"
#include "homog/tensor.hpp"

namespace homog {

enum class EnsembleKind { PoissonInclusion, IidCheckerboard, ConstantMatrix, Laminate };

std::string to_string(EnsembleKind k);
EnsembleKind ensemble_kind_from_string(const std::string& s);

struct WeightedTensor {
    Tensor value;
    double probability = 1.0;
};

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::PoissonInclusion;
    int dimension = 2;
    double contrast = 0.25;        // lambda, inclusion value
    double inclusion_radius = 1.0;
    double intensity = 1.0;        // points per unit volume
    std::vector<WeightedTensor> cell_values;  // IidCheckerboard / Laminate / ConstantMatrix
    std::uint64_t master_seed = 0;

    void validate() const;
};

struct PointConfiguration {
    std::vector<Vec3> points;
    Box extended_box;
};

PointConfiguration sample_poisson_points(const EnsembleSpec& spec, const Box& box,
                                         std::uint64_t sample_index);

CoefficientField realize_field(const EnsembleSpec& spec, const Box& box, double spacing,
                               std::uint64_t sample_index);

struct StationarityReport {
    double ks_statistic = 0.0;
    double p_value = 1.0;
    int n_samples = 0;
    bool pass = false;
};

// Two-sample KS between A11(x0) over samples 0..n-1 and A11(x0+shift) over
// samples n..2n-1 (independent realizations for a valid two-sample test).
StationarityReport empirical_stationarity_check(const EnsembleSpec& spec, int n_samples,
                                                const std::array<int, 3>& shift);

}  // namespace homog
