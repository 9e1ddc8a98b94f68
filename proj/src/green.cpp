#include "homog/green.hpp"

#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "homog/rng.hpp"
#include "homog/stats.hpp"

namespace homog {

double green_shape(int d, double T, double r) {
    if (d == 2) return std::log(2.0 + std::sqrt(T) / r);
    return std::pow(r, 2.0 - static_cast<double>(d));
}

namespace {

// cells grouped into dyadic annuli around the source
std::vector<std::vector<std::int64_t>> annulus_cells(const GridLayout& g, const Vec3& y0,
                                                     const std::vector<double>& radii) {
    std::vector<std::vector<std::int64_t>> out(radii.size());
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a) r2 += (x[a] - y0[a]) * (x[a] - y0[a]);
        const double r = std::sqrt(r2);
        for (std::size_t k = 0; k < radii.size(); ++k)
            if (r >= radii[k] && r < 2.0 * radii[k]) out[k].push_back(c);
    }
    return out;
}

double domain_radius_of(const GridLayout& g) {
    double r = 0.0;
    for (int a = 0; a < g.d; ++a) r = std::max(r, 0.5 * g.box.edge(a));
    return r;
}

}  // namespace

PointwiseDecayReport pointwise_decay_probe(const GridFunction& G, const MultiIndex& source,
                                           double T, const std::vector<double>& radii) {
    if (radii.size() < 4) throw DataError("pointwise_decay_probe: need at least 4 annuli");
    const GridLayout& g = G.layout;
    const double R = domain_radius_of(g);
    for (double r : radii)
        if (!(r > 0.0) || r > R / 2.0 + 1e-9)
            throw DataError("pointwise_decay_probe: radii must lie in (0, R/2]");
    double gmax = 0.0;
    for (double v : G.v) gmax = std::max(gmax, std::abs(v));
    if (gmax == 0.0) throw DataError("pointwise_decay_probe: degenerate Green column");

    const Vec3 y0 = g.center(source);
    const auto cells = annulus_cells(g, y0, radii);
    PointwiseDecayReport rep;
    rep.T = T;
    rep.radii = radii;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (cells[k].empty()) throw DataError("pointwise_decay_probe: empty annulus");
        double m = 0.0;
        for (std::int64_t c : cells[k]) m = std::max(m, G.v[static_cast<std::size_t>(c)]);
        rep.max_per_annulus.push_back(m);
    }

    // least squares of log(max/shape) against r: slope = -c
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (rep.max_per_annulus[k] <= 0.0) continue;
        xs.push_back(radii[k]);
        ys.push_back(std::log(rep.max_per_annulus[k] / green_shape(g.d, T, radii[k])));
    }
    if (xs.size() < 3) throw DataError("pointwise_decay_probe: too few usable annuli");
    const SlopeFit fit = fit_linear(xs, ys);
    rep.fitted_rate_c = -fit.slope;  // decay rate per unit distance; ~ c/sqrt(T)
    double C = 0.0;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const double envelope = green_shape(g.d, T, radii[k]) *
                                std::exp(-std::max(rep.fitted_rate_c, 0.0) * radii[k]);
        if (envelope > 0.0) C = std::max(C, rep.max_per_annulus[k] / envelope);
    }
    rep.fitted_amplitude_C = C;
    rep.pass = rep.fitted_rate_c > 0.0;
    return rep;
}

AnnulusGradientTable annulus_gradient_norms(const GridFunction& G, const MultiIndex& source,
                                            const std::vector<double>& radii,
                                            const std::vector<double>& p_sweep) {
    const GridLayout& g = G.layout;
    const double R = domain_radius_of(g);
    for (double r : radii)
        if (!(r > 0.0) || r > R / 2.0 + 1e-9)
            throw DataError("annulus_gradient_norms: radii must lie in (0, R/2]");
    for (double p : p_sweep)
        if (!(p >= 1.0 && p <= 2.0))
            throw DataError("annulus_gradient_norms: p sweep restricted to [1, 2]");

    const auto grad = cell_gradient(gradient(G));
    const Vec3 y0 = g.center(source);
    const auto cells = annulus_cells(g, y0, radii);
    for (const auto& cs : cells)
        if (cs.empty()) throw DataError("annulus_gradient_norms: empty annulus at this spacing");

    AnnulusGradientTable table;
    table.radii = radii;
    table.p_values = p_sweep;
    table.norms.resize(p_sweep.size());
    // power means with the probability normalization; the power-mean
    // inequality guarantees monotonicity in p only for these, not for the
    // R^{-d}-normalized norms used in the decay fits
    std::vector<std::vector<double>> pmeans(p_sweep.size());
    for (std::size_t pi = 0; pi < p_sweep.size(); ++pi) {
        const double p = p_sweep[pi];
        for (std::size_t k = 0; k < radii.size(); ++k) {
            double s = 0.0;
            for (std::int64_t c : cells[k]) {
                double g2 = 0.0;
                for (int a = 0; a < g.d; ++a) {
                    const double v = grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                    g2 += v * v;
                }
                s += std::pow(g2, p);
            }
            const double volume = static_cast<double>(cells[k].size()) * g.cell_volume();
            pmeans[pi].push_back(std::pow(s * g.cell_volume() / volume, 1.0 / (2.0 * p)));
            s *= g.cell_volume();
            table.norms[pi].push_back(std::pow(s / std::pow(radii[k], g.d), 1.0 / (2.0 * p)));
        }
        table.fitted_exponent.push_back(fit_loglog_slope(radii, table.norms[pi]).slope);
    }

    table.monotone_in_p = true;
    for (std::size_t k = 0; k < radii.size(); ++k)
        for (std::size_t pi = 1; pi < p_sweep.size(); ++pi)
            if (pmeans[pi][k] < pmeans[pi - 1][k] * (1.0 - 1e-12)) table.monotone_in_p = false;
    return table;
}

AnnealedGradientTable annealed_gradient_probe(const EnsembleSpec& spec, double T, int n_samples,
                                              const std::vector<double>& radii,
                                              double domain_radius, double h,
                                              const SolverOptions& opts) {
    if (n_samples < 50) throw ConfigError("annealed_gradient_probe: need n_samples >= 50");
    const int d = spec.dimension;
    const Box box = Box::centered(d, domain_radius);
    const OperatorSpec op{T, false};

    // per-sample mean of |grad G|^2 over the 2d symmetric axis points at radius r
    std::vector<std::vector<double>> samples(radii.size());
    for (int s = 0; s < n_samples; ++s) {
        const CoefficientField field = realize_field(spec, box, h, static_cast<std::uint64_t>(s));
        const GridLayout& g = field.layout();
        const MultiIndex src = g.cell_at({0.0, 0.0, 0.0});
        const GridFunction G = solve_green_column(field, op, src, opts);
        const auto grad = cell_gradient(gradient(G));
        const Vec3 y0 = g.center(src);
        for (std::size_t k = 0; k < radii.size(); ++k) {
            double acc = 0.0;
            int cnt = 0;
            for (int a = 0; a < d; ++a)
                for (int sgn = -1; sgn <= 1; sgn += 2) {
                    Vec3 x = y0;
                    x[a] += sgn * radii[k];
                    const std::int64_t c = g.flat(g.cell_at(x));
                    double g2 = 0.0;
                    for (int b = 0; b < d; ++b) {
                        const double v = grad[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)];
                        g2 += v * v;
                    }
                    acc += g2;
                    ++cnt;
                }
            samples[k].push_back(acc / cnt);
        }
    }

    AnnealedGradientTable out;
    out.radii = radii;
    out.n_samples = n_samples;
    std::vector<double> ci_rms(radii.size(), 0.0);
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const double m = mean(samples[k]);
        out.rms.push_back(std::sqrt(m));
        const double jv = jackknife_variance_of_mean(samples[k]);
        // delta method: sd(sqrt(m)) ~ sd(m) / (2 sqrt(m))
        const double ci = m > 0.0 ? 1.96 * std::sqrt(jv) / (2.0 * std::sqrt(m)) : 0.0;
        out.ci.push_back(ci);
        ci_rms[k] = ci;
    }
    const SlopeFit fit = fit_loglog_slope(out.radii, out.rms, ci_rms);
    out.fitted_exponent = fit.slope;
    out.fitted_exponent_stderr = fit.stderr_slope;
    return out;
}

OscillationProbeReport green_oscillation_probe(const CoefficientField& field, const Vec3& z,
                                               double pert_radius, double lambda, double T,
                                               const std::vector<double>& x_distances,
                                               std::uint64_t seed, const SolverOptions& opts) {
    const GridLayout& g = field.layout();
    const int d = g.d;
    for (double dist : x_distances)
        if (dist <= pert_radius)
            throw ConfigError("green_oscillation_probe: x overlaps the perturbation ball");

    std::vector<std::int64_t> ball;
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) r2 += (x[a] - z[a]) * (x[a] - z[a]);
        if (r2 < pert_radius * pert_radius) ball.push_back(c);
    }
    if (ball.empty()) throw ConfigError("green_oscillation_probe: empty perturbation ball");

    // K = 8 candidates: all-lambda, all-identity, 6 random fills
    std::vector<CoefficientField> perturbed;
    auto filled = [&](const std::function<double(std::size_t)>& value) {
        std::vector<double> cells(static_cast<std::size_t>(g.cells()));
        for (std::int64_t c = 0; c < g.cells(); ++c)
            cells[static_cast<std::size_t>(c)] = field.scalar_at(c);
        for (std::size_t i = 0; i < ball.size(); ++i)
            cells[static_cast<std::size_t>(ball[i])] = value(i);
        return CoefficientField::isotropic(g, std::move(cells));
    };
    if (!field.isotropic_like())
        throw ConfigError("green_oscillation_probe: implemented for isotropic fields");
    perturbed.push_back(filled([&](std::size_t) { return lambda; }));
    perturbed.push_back(filled([&](std::size_t) { return 1.0; }));
    for (int k = 0; k < 6; ++k) {
        Rng rng(derive_stream_key(seed, static_cast<std::uint64_t>(k), StreamTag::Perturbation));
        std::vector<double> values(ball.size());
        for (auto& v : values)
            v = (k < 3) ? (rng.next_u01() < 0.5 ? lambda : 1.0)
                        : rng.next_uniform(lambda, 1.0);
        perturbed.push_back(filled([&](std::size_t i) { return values[i]; }));
    }

    const OperatorSpec spec{T, false};
    auto ball_energy = [&](const GridFunction& G) {
        const auto grad = cell_gradient(gradient(G));
        double s = 0.0;
        for (std::int64_t c : ball) {
            double g2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double v = grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                g2 += v * v;
            }
            s += g2;
        }
        return s * g.cell_volume();
    };

    OscillationProbeReport rep;
    for (double dist : x_distances) {
        Vec3 x = z;
        x[0] += dist;
        const MultiIndex src = g.cell_at(x);
        const GridFunction G0 = solve_green_column(field, spec, src, opts);
        const double base = ball_energy(G0);
        double worst = 1.0;  // the unperturbed field itself gives ratio 1
        for (const auto& pf : perturbed) {
            const GridFunction Gp = solve_green_column(pf, spec, src, opts);
            worst = std::max(worst, ball_energy(Gp) / base);
        }
        rep.x_distances.push_back(dist);
        rep.ratios.push_back(worst);
        rep.max_ratio = std::max(rep.max_ratio, worst);
    }
    return rep;
}

void write_green_report_json(const std::string& path, const PointwiseDecayReport& pw,
                             const AnnulusGradientTable& table) {
    nlohmann::json j;
    j["pointwise"] = {{"T", pw.T},
                      {"radii", pw.radii},
                      {"max_per_annulus", pw.max_per_annulus},
                      {"fitted_rate_c", pw.fitted_rate_c},
                      {"fitted_amplitude_C", pw.fitted_amplitude_C},
                      {"pass", pw.pass}};
    j["annulus_gradients"] = {{"radii", table.radii},
                              {"p_values", table.p_values},
                              {"norms", table.norms},
                              {"fitted_exponent", table.fitted_exponent},
                              {"monotone_in_p", table.monotone_in_p}};
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << j.dump(2) << "\n";
}

void write_annulus_csv(const std::string& path, const AnnulusGradientTable& table) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "R,p,norm,fit_exponent\n";
    for (std::size_t pi = 0; pi < table.p_values.size(); ++pi)
        for (std::size_t k = 0; k < table.radii.size(); ++k)
            os << table.radii[k] << ',' << table.p_values[pi] << ',' << table.norms[pi][k] << ','
               << table.fitted_exponent[pi] << "\n";
}

}  // namespace homog
