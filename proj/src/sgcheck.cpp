#include "homog/sgcheck.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "homog/estimator.hpp"
#include "homog/solver.hpp"
#include "homog/stats.hpp"

namespace homog {

std::int64_t EnumerableEnsemble::configuration_count() const {
    std::int64_t c = 1;
    for (std::size_t s = 0; s < site_anchors.size(); ++s) {
        c *= static_cast<std::int64_t>(values.size());
        if (c > (1LL << 16)) return c;  // caller checks the bound
    }
    return c;
}

void EnumerableEnsemble::validate() const {
    if (site_anchors.empty()) throw ConfigError("enumerable ensemble: no sites");
    if (values.empty() || values.size() > 3)
        throw ConfigError("enumerable ensemble: need 1..3 values per site");
    if (values.size() != probabilities.size())
        throw ConfigError("enumerable ensemble: values/probabilities size mismatch");
    double p = 0.0;
    for (double q : probabilities) {
        if (q < 0.0) throw ConfigError("enumerable ensemble: negative probability");
        p += q;
    }
    if (std::abs(p - 1.0) > 1e-12) throw ConfigError("enumerable ensemble: probabilities must sum to 1");
    if (configuration_count() > (1LL << 16))
        throw ConfigError("enumerable ensemble: configuration count exceeds 2^16");
}

int EnumerableEnsemble::value_of_site(std::int64_t config, std::size_t site) const {
    const auto nv = static_cast<std::int64_t>(values.size());
    for (std::size_t s = 0; s < site; ++s) config /= nv;
    return static_cast<int>(config % nv);
}

double EnumerableEnsemble::weight(std::int64_t config) const {
    double w = 1.0;
    for (std::size_t s = 0; s < site_anchors.size(); ++s)
        w *= probabilities[static_cast<std::size_t>(value_of_site(config, s))];
    return w;
}

CoefficientField EnumerableEnsemble::realize(std::int64_t config) const {
    const GridLayout& g = base_field.layout();
    bool iso = base_field.isotropic_like();
    for (const auto& t : values)
        if (!Tensor{g.d, t.a}.is_isotropic()) iso = false;

    auto site_of_cell = [&](const Vec3& x) -> int {
        for (std::size_t s = 0; s < site_anchors.size(); ++s) {
            bool inside = true;
            for (int a = 0; a < g.d; ++a)
                if (x[a] < site_anchors[s][a] || x[a] >= site_anchors[s][a] + 1.0) inside = false;
            if (inside) return static_cast<int>(s);
        }
        return -1;
    };

    if (iso) {
        std::vector<double> cells(static_cast<std::size_t>(g.cells()));
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            const int s = site_of_cell(x);
            cells[static_cast<std::size_t>(c)] =
                s < 0 ? base_field.scalar_at(c)
                      : values[static_cast<std::size_t>(value_of_site(config, static_cast<std::size_t>(s)))](0, 0);
        }
        return CoefficientField::isotropic(g, std::move(cells));
    }
    std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        const int s = site_of_cell(x);
        Tensor t = s < 0 ? base_field.tensor_at(c)
                         : values[static_cast<std::size_t>(value_of_site(config, static_cast<std::size_t>(s)))];
        t.d = g.d;
        cells[static_cast<std::size_t>(c)] = t;
    }
    return CoefficientField::full(g, std::move(cells));
}

// ---------------------------------------------------------------------------

EnumeratedFunctional::EnumeratedFunctional(const EnumerableEnsemble& ens, const Functional& X)
    : ens_(ens) {
    ens.validate();
    const std::int64_t n = ens.configuration_count();
    x_.resize(static_cast<std::size_t>(n));
    w_.resize(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < n; ++c) {
        x_[static_cast<std::size_t>(c)] = X(ens.realize(c));
        w_[static_cast<std::size_t>(c)] = ens.weight(c);
    }
}

double EnumeratedFunctional::exact_mean() const {
    double m = 0.0;
    for (std::size_t c = 0; c < x_.size(); ++c) m += w_[c] * x_[c];
    return m;
}

double EnumeratedFunctional::exact_variance() const { return central_moment(2); }

double EnumeratedFunctional::central_moment(int order) const {
    const double m = exact_mean();
    double s = 0.0;
    for (std::size_t c = 0; c < x_.size(); ++c) s += w_[c] * std::pow(x_[c] - m, order);
    return s;
}

std::vector<Vec3> EnumeratedFunctional::covering_lattice(double ell) const {
    const int d = ens_.base_field.layout().d;
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& a : ens_.site_anchors)
        for (int k = 0; k < d; ++k) {
            lo[k] = std::min(lo[k], a[k] + 0.5);
            hi[k] = std::max(hi[k], a[k] + 0.5);
        }
    const auto reach = static_cast<int>(std::ceil(ell));
    std::vector<Vec3> zs;
    std::array<int, 3> zlo{0, 0, 0}, zhi{0, 0, 0};
    for (int k = 0; k < d; ++k) {
        zlo[k] = static_cast<int>(std::floor(lo[k])) - reach;
        zhi[k] = static_cast<int>(std::ceil(hi[k])) + reach;
    }
    std::array<int, 3> z{0, 0, 0};
    for (z[2] = zlo[2]; z[2] <= (d > 2 ? zhi[2] : zlo[2]); ++z[2])
        for (z[1] = zlo[1]; z[1] <= (d > 1 ? zhi[1] : zlo[1]); ++z[1])
            for (z[0] = zlo[0]; z[0] <= zhi[0]; ++z[0]) {
                const Vec3 zv{static_cast<double>(z[0]), d > 1 ? static_cast<double>(z[1]) : 0.0,
                              d > 2 ? static_cast<double>(z[2]) : 0.0};
                bool covers = false;
                for (const auto& a : ens_.site_anchors) {
                    double r2 = 0.0;
                    for (int k = 0; k < d; ++k) {
                        const double dx = a[k] + 0.5 - zv[k];
                        r2 += dx * dx;
                    }
                    if (r2 < ell * ell) covers = true;
                }
                if (covers) zs.push_back(zv);
            }
    return zs;
}

std::vector<double> EnumeratedFunctional::oscillation_per_config(double ell, const Vec3& z) const {
    const int d = ens_.base_field.layout().d;
    const auto nv = static_cast<std::int64_t>(ens_.values.size());
    std::vector<std::size_t> group;
    for (std::size_t s = 0; s < ens_.site_anchors.size(); ++s) {
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) {
            const double dx = ens_.site_anchors[s][k] + 0.5 - z[k];
            r2 += dx * dx;
        }
        if (r2 < ell * ell) group.push_back(s);
    }
    std::vector<double> osc(x_.size(), 0.0);
    if (group.empty()) return osc;

    // orbit key: digits of the complement sites
    std::vector<bool> in_group(ens_.site_anchors.size(), false);
    for (std::size_t s : group) in_group[s] = true;
    std::unordered_map<std::int64_t, std::pair<double, double>> orbits;
    const auto n = static_cast<std::int64_t>(x_.size());
    for (std::int64_t c = 0; c < n; ++c) {
        std::int64_t key = 0;
        std::int64_t stride = 1;
        std::int64_t rest = c;
        for (std::size_t s = 0; s < ens_.site_anchors.size(); ++s) {
            const std::int64_t digit = rest % nv;
            rest /= nv;
            if (!in_group[s]) key += digit * stride;
            stride *= nv;
        }
        auto it = orbits.find(key);
        const double v = x_[static_cast<std::size_t>(c)];
        if (it == orbits.end())
            orbits.emplace(key, std::make_pair(v, v));
        else {
            it->second.first = std::min(it->second.first, v);
            it->second.second = std::max(it->second.second, v);
        }
    }
    for (std::int64_t c = 0; c < n; ++c) {
        std::int64_t key = 0;
        std::int64_t stride = 1;
        std::int64_t rest = c;
        for (std::size_t s = 0; s < ens_.site_anchors.size(); ++s) {
            const std::int64_t digit = rest % nv;
            rest /= nv;
            if (!in_group[s]) key += digit * stride;
            stride *= nv;
        }
        const auto& mm = orbits[key];
        osc[static_cast<std::size_t>(c)] = mm.second - mm.first;
    }
    return osc;
}

double EnumeratedFunctional::exact_oscillation_sum(double ell) const {
    double total = 0.0;
    for (const Vec3& z : covering_lattice(ell)) {
        const auto osc = oscillation_per_config(ell, z);
        double contrib = 0.0;
        for (std::size_t c = 0; c < x_.size(); ++c) contrib += w_[c] * osc[c] * osc[c];
        total += contrib;  // lattice cell volume = 1
    }
    return total;
}

EnumeratedFunctional::SgVerdict EnumeratedFunctional::verify_sg(double ell, double rho) const {
    SgVerdict v;
    v.variance = exact_variance();
    v.oscillation_sum = exact_oscillation_sum(ell);
    const double bound = v.oscillation_sum / rho;
    v.ratio = bound > 0.0 ? v.variance / bound : 0.0;
    v.pass = v.variance <= bound + 1e-12 * std::max(1.0, std::abs(bound));
    return v;
}

EnumeratedFunctional::QsgVerdict EnumeratedFunctional::verify_q_sg(double ell, int q,
                                                                   double constant) const {
    if (q < 1 || q > 3) throw ConfigError("verify_q_sg: q must be 1, 2 or 3");
    QsgVerdict v;
    v.q = q;
    v.lhs = std::pow(central_moment(2 * q), 1.0 / q);

    // per-config sum over z of osc^2 with radius 2 ell
    std::vector<double> S(x_.size(), 0.0);
    for (const Vec3& z : covering_lattice(2.0 * ell)) {
        const auto osc = oscillation_per_config(2.0 * ell, z);
        for (std::size_t c = 0; c < x_.size(); ++c) S[c] += osc[c] * osc[c];
    }
    double rhs_q = 0.0;
    for (std::size_t c = 0; c < x_.size(); ++c) rhs_q += w_[c] * std::pow(S[c], q);
    v.rhs = std::pow(rhs_q, 1.0 / q);
    v.ratio = v.rhs > 0.0 ? v.lhs / v.rhs : 0.0;
    v.pass = v.lhs <= constant * v.rhs + 1e-12 * std::max(1.0, v.rhs);
    return v;
}

// The bundled battery ---------------------------------------------------------

namespace {

EnumerableEnsemble make_binary_line() {
    // 8-cell 1-D field on [-4,4], h=1; 4 perturbable unit sites in the middle.
    EnumerableEnsemble e;
    const GridLayout g = GridLayout::make(Box::centered(1, 4.0), 1.0);
    e.base_field = CoefficientField::isotropic(g, std::vector<double>(8, 1.0));
    e.site_anchors = {{-2.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
    e.values = {Tensor::isotropic(1, 0.25), Tensor::isotropic(1, 1.0)};
    e.probabilities = {0.5, 0.5};
    return e;
}

EnumerableEnsemble make_binary_block() {
    // 3x3 perturbable unit sites on a 2-D grid.
    EnumerableEnsemble e;
    const GridLayout g = GridLayout::make(Box::centered(2, 2.0), 0.5);
    e.base_field =
        CoefficientField::isotropic(g, std::vector<double>(static_cast<std::size_t>(g.cells()), 1.0));
    for (int i = -2; i <= 0; ++i)
        for (int j = -2; j <= 0; ++j)
            e.site_anchors.push_back({static_cast<double>(i), static_cast<double>(j), 0.0});
    e.values = {Tensor::isotropic(2, 0.25), Tensor::isotropic(2, 1.0)};
    e.probabilities = {0.5, 0.5};
    return e;
}

EnumerableEnsemble make_ternary_line() {
    EnumerableEnsemble e;
    const GridLayout g = GridLayout::make(Box::centered(1, 3.0), 0.5);
    e.base_field =
        CoefficientField::isotropic(g, std::vector<double>(static_cast<std::size_t>(g.cells()), 1.0));
    e.site_anchors = {{-1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    e.values = {Tensor::isotropic(1, 0.25), Tensor::isotropic(1, 0.5), Tensor::isotropic(1, 1.0)};
    e.probabilities = {0.25, 0.5, 0.25};
    return e;
}

double a11_at(const CoefficientField& f, const Vec3& x) {
    return f.entry_at(f.layout().flat(f.layout().cell_at(x)), 0, 0);
}

// Masked corrector energy on a tiny grid; same formula as the production
// estimator, but without the R - L truncation guard (as a functional of A any
// choice is admissible for SG purposes).
double tiny_corrector_energy(const CoefficientField& field, double T, double L) {
    SolverOptions opts;
    opts.tol = 1e-10;
    opts.preconditioner = Preconditioner::Jacobi;
    const OperatorSpec spec{T, false};
    const Vec3 xi = unit_vector(0);
    const CorrectorSolution sol = solve_modified_corrector(field, spec, xi, opts);
    const AveragingMask mask = AveragingMask::make(field.layout(), L);
    const auto grad = cell_gradient(sol.grad_phi);
    const GridLayout& g = field.layout();
    std::vector<double> density(static_cast<std::size_t>(g.cells()));
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        double e = 0.0;
        Vec3 gp{0.0, 0.0, 0.0};
        for (int a = 0; a < g.d; ++a)
            gp[a] = xi[a] + grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
        for (int i = 0; i < g.d; ++i)
            for (int j = 0; j < g.d; ++j) e += gp[i] * field.entry_at(c, i, j) * gp[j];
        density[static_cast<std::size_t>(c)] = e;
    }
    return masked_average(density, mask);
}

double tiny_phi_center(const CoefficientField& field, double T) {
    SolverOptions opts;
    opts.tol = 1e-10;
    opts.preconditioner = Preconditioner::Jacobi;
    const OperatorSpec spec{T, false};
    const CorrectorSolution sol = solve_modified_corrector(field, spec, unit_vector(0), opts);
    const GridLayout& g = field.layout();
    return sol.phi.v[static_cast<std::size_t>(g.flat(g.cell_at({0.0, 0.0, 0.0})))];
}

struct NamedFunctional {
    std::string name;
    Functional fn;
};

std::vector<NamedFunctional> battery_functionals(const EnumerableEnsemble& ens, bool with_pde) {
    const Vec3 p0{ens.site_anchors[0][0] + 0.5, ens.site_anchors[0][1] + 0.5,
                  ens.site_anchors[0][2] + 0.5};
    const Vec3 p1{ens.site_anchors.back()[0] + 0.5, ens.site_anchors.back()[1] + 0.5,
                  ens.site_anchors.back()[2] + 0.5};
    std::vector<Vec3> centers;
    for (const auto& a : ens.site_anchors) centers.push_back({a[0] + 0.5, a[1] + 0.5, a[2] + 0.5});

    std::vector<NamedFunctional> fs;
    fs.push_back({"site_value", [p0](const CoefficientField& f) { return a11_at(f, p0); }});
    fs.push_back({"product_two_sites", [p0, p1](const CoefficientField& f) {
                      return a11_at(f, p0) * a11_at(f, p1);
                  }});
    fs.push_back({"sum_sites", [centers](const CoefficientField& f) {
                      double s = 0.0;
                      for (const auto& c : centers) s += a11_at(f, c);
                      return s;
                  }});
    fs.push_back({"min_site", [centers](const CoefficientField& f) {
                      double m = 1e300;
                      for (const auto& c : centers) m = std::min(m, a11_at(f, c));
                      return m;
                  }});
    fs.push_back({"threshold", [p0](const CoefficientField& f) {
                      return a11_at(f, p0) > 0.5 ? 1.0 : 0.0;
                  }});
    fs.push_back({"box_average", [](const CoefficientField& f) {
                      const GridLayout& g = f.layout();
                      double s = 0.0;
                      for (std::int64_t c = 0; c < g.cells(); ++c) s += f.entry_at(c, 0, 0);
                      return s / static_cast<double>(g.cells());
                  }});
    if (with_pde) {
        fs.push_back({"corrector_energy_T4_L2", [](const CoefficientField& f) {
                          return tiny_corrector_energy(f, 4.0, 2.0);
                      }});
        fs.push_back({"phi_center_T4", [](const CoefficientField& f) {
                          return tiny_phi_center(f, 4.0);
                      }});
    }
    return fs;
}

// Frozen per-family q-(SG) constants (C(1)=1 is the Efron-Stein bound; C(2)
// recorded from exact enumeration of the battery with headroom).
double family_constant(int q) { return q == 1 ? 1.0 : 2.0; }

}  // namespace

std::vector<BatteryEntry> run_sg_battery() {
    struct Fam {
        std::string name;
        EnumerableEnsemble ens;
        bool with_pde;
    };
    std::vector<Fam> fams;
    fams.push_back({"binary4_line", make_binary_line(), true});
    fams.push_back({"binary9_block", make_binary_block(), false});
    fams.push_back({"ternary2_line", make_ternary_line(), false});

    const double ell = 1.0;
    std::vector<BatteryEntry> out;
    for (const auto& fam : fams) {
        for (const auto& nf : battery_functionals(fam.ens, fam.with_pde)) {
            EnumeratedFunctional ef(fam.ens, nf.fn);
            BatteryEntry e;
            e.ensemble = fam.name;
            e.functional = nf.name;
            e.configurations = fam.ens.configuration_count();
            e.sg = ef.verify_sg(ell, 1.0);
            e.qsg1 = ef.verify_q_sg(ell, 1, family_constant(1));
            e.qsg2 = ef.verify_q_sg(ell, 2, family_constant(2));
            e.pass = e.sg.pass && e.qsg1.pass && e.qsg2.pass;
            out.push_back(std::move(e));
        }
    }
    return out;
}

void write_battery_json(const std::string& path, const std::vector<BatteryEntry>& entries) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries) {
        j.push_back({{"ensemble", e.ensemble},
                     {"functional", e.functional},
                     {"configurations", e.configurations},
                     {"sg", {{"variance", e.sg.variance},
                             {"oscillation_sum", e.sg.oscillation_sum},
                             {"ratio", e.sg.ratio},
                             {"pass", e.sg.pass}}},
                     {"qsg",
                      {{"q1", {{"lhs", e.qsg1.lhs}, {"rhs", e.qsg1.rhs}, {"ratio", e.qsg1.ratio}, {"pass", e.qsg1.pass}}},
                       {"q2", {{"lhs", e.qsg2.lhs}, {"rhs", e.qsg2.rhs}, {"ratio", e.qsg2.ratio}, {"pass", e.qsg2.pass}}}}},
                     {"pass", e.pass}});
    }
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << j.dump(2) << "\n";
}

ErgodicProbeReport ergodic_average_probe(const EnsembleSpec& spec,
                                         const std::vector<double>& radii, int n_samples) {
    if (radii.empty()) throw ConfigError("ergodic probe: empty radius list");
    if (n_samples < 2) throw ConfigError("ergodic probe: need at least 2 samples");
    double rmax = 0.0;
    for (double r : radii) rmax = std::max(rmax, r);
    const Box box = Box::centered(spec.dimension, rmax + 1.0);
    const double h = std::min(0.25, spec.inclusion_radius / 2.0);

    std::vector<std::vector<double>> averages(radii.size());
    for (int s = 0; s < n_samples; ++s) {
        const CoefficientField f = realize_field(spec, box, h, static_cast<std::uint64_t>(s));
        const GridLayout& g = f.layout();
        std::vector<double> acc(radii.size(), 0.0);
        std::vector<std::int64_t> cnt(radii.size(), 0);
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            double r2 = 0.0;
            for (int a = 0; a < g.d; ++a) r2 += x[a] * x[a];
            const double r = std::sqrt(r2);
            const double v = f.entry_at(c, 0, 0);
            for (std::size_t k = 0; k < radii.size(); ++k)
                if (r < radii[k]) {
                    acc[k] += v;
                    ++cnt[k];
                }
        }
        for (std::size_t k = 0; k < radii.size(); ++k)
            averages[k].push_back(acc[k] / static_cast<double>(cnt[k]));
    }

    ErgodicProbeReport rep;
    std::vector<double> vars, cis;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        ErgodicProbeRow row;
        row.radius = radii[k];
        row.variance = sample_variance(averages[k]);
        row.variance_ci =
            1.96 * std::sqrt(jackknife_variance(averages[k], sample_variance));
        row.mean = mean(averages[k]);
        rep.rows.push_back(row);
        vars.push_back(row.variance);
        cis.push_back(row.variance_ci);
    }
    try {
        const SlopeFit fit = fit_loglog_slope(radii, vars, cis);
        rep.fitted_slope = fit.slope;
        rep.fitted_slope_stderr = fit.stderr_slope;
    } catch (const DataError&) {
        rep.degenerate = true;
    }
    return rep;
}

}  // namespace homog
