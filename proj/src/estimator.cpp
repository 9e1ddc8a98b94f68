#include "homog/estimator.hpp"

#include <cmath>

#include "homog/stats.hpp"

namespace homog {

EnergyEstimate energy_estimate(const CoefficientField& field, const CorrectorSolution& phi,
                               const CorrectorSolution& phi_adj, const AveragingMask& mask) {
    const GridLayout& g = field.layout();
    if (!phi.phi.layout.same_shape(g) || !phi_adj.phi.layout.same_shape(g))
        throw ConfigError("energy_estimate: solutions and field must share the grid");
    if (!nearly_equal(phi.T, phi_adj.T)) throw ConfigError("energy_estimate: T mismatch");
    if (!mask.layout.same_shape(g)) throw ConfigError("energy_estimate: mask grid mismatch");
    const double R = phi.domain_radius;
    if (R - mask.L < 2.0 * std::sqrt(phi.T) - 1e-9)
        throw ConfigError("energy_estimate: requires R - L >= 2 sqrt(T)");

    const auto grad = cell_gradient(phi.grad_phi);
    const auto grad_adj = cell_gradient(phi_adj.grad_phi);
    const int d = g.d;
    const double invT = std::isinf(phi.T) ? 0.0 : 1.0 / phi.T;

    std::vector<double> density(static_cast<std::size_t>(g.cells()), 0.0);
    std::vector<double> zero(static_cast<std::size_t>(g.cells()), 0.0);
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        Vec3 gp{0.0, 0.0, 0.0}, ga{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) {
            gp[a] = phi.xi[a] + grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
            ga[a] = phi_adj.xi[a] + grad_adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
        }
        double e = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) e += ga[i] * field.entry_at(c, i, j) * gp[j];
        density[static_cast<std::size_t>(c)] = e;
        zero[static_cast<std::size_t>(c)] =
            invT * phi_adj.phi.v[static_cast<std::size_t>(c)] * phi.phi.v[static_cast<std::size_t>(c)];
    }

    EnergyEstimate est;
    est.xi = phi.xi;
    est.xi_prime = phi_adj.xi;
    est.T = phi.T;
    est.L = mask.L;
    est.R = R;
    est.value_without_zero_order = masked_average(density, mask);
    est.zero_order_part = masked_average(zero, mask);
    est.value_with_zero_order = est.value_without_zero_order + est.zero_order_part;
    return est;
}

MeanEstimate estimate_A_T(const std::vector<EnergyEstimate>& samples) {
    if (samples.size() < 2) throw DataError("estimate_A_T: need at least 2 samples");
    const auto& first = samples.front();
    std::vector<double> vals;
    vals.reserve(samples.size());
    for (const auto& s : samples) {
        if (!nearly_equal(s.T, first.T) || !nearly_equal(s.L, first.L) ||
            !nearly_equal(s.R, first.R))
            throw DataError("estimate_A_T: heterogeneous (T, L, R) across samples");
        for (int a = 0; a < 3; ++a)
            if (s.xi[a] != first.xi[a] || s.xi_prime[a] != first.xi_prime[a])
                throw DataError("estimate_A_T: heterogeneous directions across samples");
        vals.push_back(s.value_without_zero_order);
    }
    MeanEstimate out;
    out.n = static_cast<int>(vals.size());
    out.mean = mean(vals);
    out.jackknife_variance = jackknife_variance_of_mean(vals);
    out.ci_halfwidth = 1.96 * std::sqrt(out.jackknife_variance);
    return out;
}

ExtrapolationResult richardson_extrapolate(const std::vector<ExtrapolationPoint>& values,
                                           int order) {
    if (order < 1 || order > 2) throw DataError("richardson: order must be 1 or 2");
    if (static_cast<int>(values.size()) < order + 1)
        throw DataError("richardson: insufficient points");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (!nearly_equal(values[i].T, 2.0 * values[i - 1].T, 1e-9))
            throw DataError("richardson: T values must be a dyadic progression");

    const auto n = values.size();
    ExtrapolationResult out;
    out.order = order;
    if (order == 1) {
        const auto& a = values[n - 2];
        const auto& b = values[n - 1];
        out.value = 2.0 * b.value - a.value;
        out.ci = std::sqrt(4.0 * b.ci * b.ci + a.ci * a.ci);
    } else {
        const auto& a = values[n - 3];
        const auto& b = values[n - 2];
        const auto& c = values[n - 1];
        out.value = (8.0 * c.value - 6.0 * b.value + a.value) / 3.0;
        out.ci = std::sqrt(64.0 * c.ci * c.ci + 36.0 * b.ci * b.ci + a.ci * a.ci) / 3.0;
    }
    return out;
}

MomentEstimate corrector_moments(const std::vector<const CorrectorSolution*>& phis, double q,
                                 double probe_radius) {
    if (phis.empty()) throw DataError("corrector_moments: empty sample set");
    if (!(q >= 1.0)) throw DataError("corrector_moments: q must be >= 1");
    const GridLayout& g = phis.front()->phi.layout;
    const double T = phis.front()->T;
    const double trusted = phis.front()->domain_radius - 2.0 * std::sqrt(T);
    if (!(probe_radius > 0.0) || probe_radius > trusted + 1e-9)
        throw ConfigError("corrector_moments: probe ball outside the trusted region");

    // cells inside the probe ball around the origin
    std::vector<std::int64_t> ball;
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a) r2 += x[a] * x[a];
        if (r2 < probe_radius * probe_radius) ball.push_back(c);
    }
    const std::int64_t center = g.flat(g.cell_at({0.0, 0.0, 0.0}));

    std::vector<double> phi_pow, grad_pow;
    for (const auto* sol : phis) {
        if (!sol->phi.layout.same_shape(g) || !nearly_equal(sol->T, T))
            throw DataError("corrector_moments: heterogeneous solutions");
        phi_pow.push_back(std::pow(std::abs(sol->phi.v[static_cast<std::size_t>(center)]), q));
        const auto grad = cell_gradient(sol->grad_phi);
        double e = 0.0;
        for (std::int64_t c : ball) {
            double s = 0.0;
            for (int a = 0; a < g.d; ++a) {
                const double v = grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                s += v * v;
            }
            e += s;
        }
        grad_pow.push_back(std::pow(e * g.cell_volume(), q / 2.0));
    }

    MomentEstimate out;
    out.q = q;
    out.T = T;
    out.n_samples = static_cast<int>(phis.size());
    out.moment_phi = std::pow(mean(phi_pow), 1.0 / q);
    out.moment_grad = std::pow(mean(grad_pow), 1.0 / q);
    if (phi_pow.size() >= 2) {
        const double jv = jackknife_variance(
            phi_pow, [q](const std::vector<double>& xs) { return std::pow(mean(xs), 1.0 / q); });
        out.ci_halfwidth = 1.96 * std::sqrt(jv);
    }
    return out;
}

}  // namespace homog
