// Brute-force verification of the spectral gap inequality and its q-version on
// tiny, fully enumerable discrete ensembles: a finite set of perturbable sites,
// each carrying one of <= 3 tensor values with given probabilities,
// independently across sites. Everything is computed by exact enumeration.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "homog/ensemble.hpp"
#include "homog/grid.hpp"

namespace homog {

struct EnumerableEnsemble {
    // Site s occupies the unit cube [anchor, anchor+1)^d; its center is the
    // oscillation-ball membership point.
    std::vector<Vec3> site_anchors;
    std::vector<Tensor> values;        // shared candidate set, size <= 3
    std::vector<double> probabilities; // per value, sums to 1
    CoefficientField base_field;       // template realization (values written over it)

    std::int64_t configuration_count() const;
    void validate() const;

    // Field for one configuration (mixed-radix index over sites).
    CoefficientField realize(std::int64_t config) const;
    int value_of_site(std::int64_t config, std::size_t site) const;
    double weight(std::int64_t config) const;
};

using Functional = std::function<double(const CoefficientField&)>;

// Evaluates X on every configuration once; all ops below are lookups.
class EnumeratedFunctional {
  public:
    EnumeratedFunctional(const EnumerableEnsemble& ens, const Functional& X);

    double exact_mean() const;
    double exact_variance() const;
    double central_moment(int order) const;  // <(X - <X>)^order>

    // sum_z <(osc_{B_ell(z)} X)^2> * cell volume over the integer lattice.
    double exact_oscillation_sum(double ell) const;

    struct SgVerdict {
        double variance = 0.0;
        double oscillation_sum = 0.0;
        double ratio = 0.0;  // variance / ((1/rho) * sum); 0 when both vanish
        bool pass = false;
    };
    SgVerdict verify_sg(double ell, double rho) const;

    struct QsgVerdict {
        int q = 1;
        double lhs = 0.0;    // <(X - <X>)^{2q}>^{1/q}
        double rhs = 0.0;    // <(sum_z osc^2_{2 ell})^q>^{1/q}
        double ratio = 0.0;
        bool pass = false;
    };
    QsgVerdict verify_q_sg(double ell, int q, double constant) const;

    const std::vector<double>& values() const { return x_; }

  private:
    // per-configuration oscillation over all reassignments inside B_ell(z)
    std::vector<double> oscillation_per_config(double ell, const Vec3& z) const;
    std::vector<Vec3> covering_lattice(double ell) const;

    const EnumerableEnsemble& ens_;
    std::vector<double> x_;
    std::vector<double> w_;
};

// The bundled battery: >= 6 functionals x 3 enumerable ensembles including one
// whose functional needs a tiny PDE solve per configuration.
struct BatteryEntry {
    std::string ensemble;
    std::string functional;
    std::int64_t configurations = 0;
    EnumeratedFunctional::SgVerdict sg;
    EnumeratedFunctional::QsgVerdict qsg1;
    EnumeratedFunctional::QsgVerdict qsg2;
    bool pass = false;
};

std::vector<BatteryEntry> run_sg_battery();
void write_battery_json(const std::string& path, const std::vector<BatteryEntry>& entries);

// Lemma-SG-ergo style probe: variance of the spatial average of a local
// functional of A over B_R, against R.
struct ErgodicProbeRow {
    double radius = 0.0;
    double variance = 0.0;
    double variance_ci = 0.0;
    double mean = 0.0;
};
struct ErgodicProbeReport {
    std::vector<ErgodicProbeRow> rows;
    double fitted_slope = 0.0;
    double fitted_slope_stderr = 0.0;
    bool degenerate = false;  // zero variances or too few radii: no fit
};

ErgodicProbeReport ergodic_average_probe(const EnsembleSpec& spec,
                                         const std::vector<double>& radii, int n_samples);

}  // namespace homog
