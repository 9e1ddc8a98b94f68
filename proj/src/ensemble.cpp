#include "homog/ensemble.hpp"

#include <cmath>

#include "homog/parallel.hpp"
#include "homog/rng.hpp"

namespace homog {

std::string to_string(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::PoissonInclusion: return "poisson_inclusion";
        case EnsembleKind::IidCheckerboard: return "iid_checkerboard";
        case EnsembleKind::ConstantMatrix: return "constant_matrix";
        case EnsembleKind::Laminate: return "laminate";
    }
    return "?";
}

EnsembleKind ensemble_kind_from_string(const std::string& s) {
    if (s == "poisson_inclusion" || s == "poisson") return EnsembleKind::PoissonInclusion;
    if (s == "iid_checkerboard" || s == "checkerboard") return EnsembleKind::IidCheckerboard;
    if (s == "constant_matrix" || s == "constant") return EnsembleKind::ConstantMatrix;
    if (s == "laminate") return EnsembleKind::Laminate;
    throw ConfigError("unknown ensemble kind: " + s);
}

void EnsembleSpec::validate() const {
    if (dimension < 1 || dimension > 3) throw ConfigError("ensemble: dimension must be 1, 2 or 3");
    if (!(contrast > 0.0 && contrast <= 1.0)) throw ConfigError("ensemble: contrast must be in (0,1]");
    if (!(inclusion_radius > 0.0)) throw ConfigError("ensemble: inclusion_radius must be positive");
    if (!(intensity > 0.0)) throw ConfigError("ensemble: intensity must be positive");
    const bool needs_values = kind == EnsembleKind::IidCheckerboard ||
                              kind == EnsembleKind::ConstantMatrix || kind == EnsembleKind::Laminate;
    if (needs_values && cell_values.empty())
        throw ConfigError("ensemble: cell_values required for this kind");
    double psum = 0.0;
    for (const auto& wv : cell_values) {
        Tensor t = wv.value;
        t.d = dimension;
        if (!is_admissible_tensor(t, contrast))
            throw ConfigError("ensemble: candidate tensor violates Omega_0 bounds");
        if (wv.probability < 0.0) throw ConfigError("ensemble: negative probability");
        psum += wv.probability;
    }
    if (kind == EnsembleKind::IidCheckerboard && std::abs(psum - 1.0) > 1e-9)
        throw ConfigError("ensemble: cell_values probabilities must sum to 1");
}

PointConfiguration sample_poisson_points(const EnsembleSpec& spec, const Box& box,
                                         std::uint64_t sample_index) {
    spec.validate();
    if (spec.kind != EnsembleKind::PoissonInclusion)
        throw ConfigError("sample_poisson_points: ensemble kind is not PoissonInclusion");
    if (!box.finite()) throw ConfigError("sample_poisson_points: box is not finite");

    PointConfiguration cfg;
    cfg.extended_box = box.grown(spec.inclusion_radius);
    if (box.volume() == 0.0) return cfg;  // empty domain: nothing can intersect it
    const double vol = cfg.extended_box.volume();
    const double expected = spec.intensity * vol;
    if (expected > 1e9) throw ConfigError("sample_poisson_points: expected point count exceeds 1e9");

    Rng rng(derive_stream_key(spec.master_seed, sample_index, StreamTag::PoissonPoints));
    const std::int64_t count = rng.next_poisson(expected);
    cfg.points.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        Vec3 p{0.0, 0.0, 0.0};
        for (int a = 0; a < box.d; ++a)
            p[a] = rng.next_uniform(cfg.extended_box.lo[a], cfg.extended_box.hi[a]);
        cfg.points.push_back(p);
    }
    return cfg;
}

namespace {

CoefficientField realize_poisson(const EnsembleSpec& spec, const GridLayout& g,
                                 std::uint64_t sample_index) {
    const PointConfiguration cfg = sample_poisson_points(spec, g.box, sample_index);
    std::vector<double> cells(static_cast<std::size_t>(g.cells()), 1.0);
    const double r = spec.inclusion_radius;
    const double r2 = r * r;
    // Stamp each ball over the cells whose center it may cover.
    for (const Vec3& p : cfg.points) {
        std::array<std::int64_t, 3> lo{0, 0, 0}, hi{0, 0, 0};
        bool overlap = true;
        for (int a = 0; a < g.d; ++a) {
            lo[a] = static_cast<std::int64_t>(std::floor((p[a] - r - g.box.lo[a]) / g.h - 0.5));
            hi[a] = static_cast<std::int64_t>(std::ceil((p[a] + r - g.box.lo[a]) / g.h - 0.5));
            lo[a] = std::max<std::int64_t>(lo[a], 0);
            hi[a] = std::min<std::int64_t>(hi[a], g.n[a] - 1);
            if (lo[a] > hi[a]) overlap = false;
        }
        if (!overlap) continue;
        MultiIndex m;
        for (std::int64_t k = (g.d > 2 ? lo[2] : 0); k <= (g.d > 2 ? hi[2] : 0); ++k)
            for (std::int64_t j = (g.d > 1 ? lo[1] : 0); j <= (g.d > 1 ? hi[1] : 0); ++j)
                for (std::int64_t i = lo[0]; i <= hi[0]; ++i) {
                    m[0] = static_cast<int>(i);
                    m[1] = static_cast<int>(j);
                    m[2] = static_cast<int>(k);
                    const Vec3 x = g.center(m);
                    double d2 = 0.0;
                    for (int a = 0; a < g.d; ++a) d2 += (x[a] - p[a]) * (x[a] - p[a]);
                    if (d2 < r2) cells[static_cast<std::size_t>(g.flat(m))] = spec.contrast;
                }
    }
    return CoefficientField::isotropic(g, std::move(cells));
}

int draw_value_index(const EnsembleSpec& spec, double u) {
    double acc = 0.0;
    for (std::size_t v = 0; v < spec.cell_values.size(); ++v) {
        acc += spec.cell_values[v].probability;
        if (u < acc) return static_cast<int>(v);
    }
    return static_cast<int>(spec.cell_values.size()) - 1;
}

CoefficientField realize_checkerboard(const EnsembleSpec& spec, const GridLayout& g,
                                      std::uint64_t sample_index) {
    // iid draw per unit lattice cell, replicated to the grid cells inside it;
    // draws are keyed by the absolute unit-cell coordinates.
    const std::uint64_t stream = derive_stream_key(spec.master_seed, sample_index,
                                                   StreamTag::Checkerboard);
    bool all_iso = true;
    for (const auto& wv : spec.cell_values) {
        Tensor t = wv.value;
        t.d = g.d;
        if (!t.is_isotropic()) all_iso = false;
    }
    auto unit_value = [&](const std::array<std::int64_t, 3>& cell) {
        std::uint64_t k = stream;
        for (int a = 0; a < g.d; ++a)
            k = mix_seed(k, static_cast<std::uint64_t>(cell[a] + (1LL << 31)));
        Rng r(k);
        return draw_value_index(spec, r.next_u01());
    };
    if (all_iso) {
        std::vector<double> cells(static_cast<std::size_t>(g.cells()));
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            std::array<std::int64_t, 3> u{0, 0, 0};
            for (int a = 0; a < g.d; ++a) u[a] = static_cast<std::int64_t>(std::floor(x[a]));
            cells[static_cast<std::size_t>(c)] =
                spec.cell_values[static_cast<std::size_t>(unit_value(u))].value(0, 0);
        }
        return CoefficientField::isotropic(g, std::move(cells));
    }
    std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        std::array<std::int64_t, 3> u{0, 0, 0};
        for (int a = 0; a < g.d; ++a) u[a] = static_cast<std::int64_t>(std::floor(x[a]));
        Tensor t = spec.cell_values[static_cast<std::size_t>(unit_value(u))].value;
        t.d = g.d;
        cells[static_cast<std::size_t>(c)] = t;
    }
    return CoefficientField::full(g, std::move(cells));
}

CoefficientField realize_laminate(const EnsembleSpec& spec, const GridLayout& g) {
    // Deterministic periodic laminate: unit bands along x1 cycling cell_values.
    const auto nv = static_cast<std::int64_t>(spec.cell_values.size());
    bool all_iso = true;
    for (const auto& wv : spec.cell_values) {
        Tensor t = wv.value;
        t.d = g.d;
        if (!t.is_isotropic()) all_iso = false;
    }
    auto band_of = [&](double x1) {
        const auto b = static_cast<std::int64_t>(std::floor(x1));
        return static_cast<std::size_t>(((b % nv) + nv) % nv);
    };
    if (all_iso) {
        std::vector<double> cells(static_cast<std::size_t>(g.cells()));
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const Vec3 x = g.center(g.unflat(c));
            cells[static_cast<std::size_t>(c)] = spec.cell_values[band_of(x[0])].value(0, 0);
        }
        return CoefficientField::isotropic(g, std::move(cells));
    }
    std::vector<Tensor> cells(static_cast<std::size_t>(g.cells()));
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        Tensor t = spec.cell_values[band_of(x[0])].value;
        t.d = g.d;
        cells[static_cast<std::size_t>(c)] = t;
    }
    return CoefficientField::full(g, std::move(cells));
}

}  // namespace

CoefficientField realize_field(const EnsembleSpec& spec, const Box& box, double spacing,
                               std::uint64_t sample_index) {
    spec.validate();
    if (box.d != spec.dimension) throw ConfigError("realize_field: box dimension mismatch");
    if (spec.kind == EnsembleKind::PoissonInclusion && spacing > spec.inclusion_radius / 2.0 + 1e-12)
        throw ConfigError("realize_field: spacing must be <= inclusion_radius/2");
    const GridLayout g = GridLayout::make(box, spacing);

    switch (spec.kind) {
        case EnsembleKind::PoissonInclusion:
            return realize_poisson(spec, g, sample_index);
        case EnsembleKind::IidCheckerboard:
            return realize_checkerboard(spec, g, sample_index);
        case EnsembleKind::ConstantMatrix: {
            Tensor t = spec.cell_values.front().value;
            t.d = g.d;
            if (t.is_isotropic() && t(0, 0) == 1.0) return CoefficientField::uniform(g, Tensor::identity(g.d));
            return CoefficientField::uniform(g, t);
        }
        case EnsembleKind::Laminate:
            return realize_laminate(spec, g);
    }
    throw ConfigError("realize_field: unknown kind");
}

StationarityReport empirical_stationarity_check(const EnsembleSpec& spec, int n_samples,
                                                const std::array<int, 3>& shift) {
    spec.validate();
    if (n_samples < 100) throw ConfigError("stationarity check: need n_samples >= 100");
    const int d = spec.dimension;

    // Small box holding both probe points with one correlation length of margin.
    Box box;
    box.d = d;
    Vec3 x0{0.25, 0.25, 0.25};
    Vec3 x1 = x0;
    for (int a = 0; a < d; ++a) x1[a] += shift[a];
    const double margin = std::max(2.0 * spec.inclusion_radius, 2.0);
    for (int a = 0; a < d; ++a) {
        box.lo[a] = std::min(x0[a], x1[a]) - margin;
        box.hi[a] = std::max(x0[a], x1[a]) + margin;
    }
    const double h = std::min(0.25, spec.inclusion_radius / 2.0);
    // snap edges to the spacing
    for (int a = 0; a < d; ++a) {
        const double w = std::ceil((box.hi[a] - box.lo[a]) / h) * h;
        box.hi[a] = box.lo[a] + w;
    }

    std::vector<double> base(static_cast<std::size_t>(n_samples));
    std::vector<double> shifted(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        const CoefficientField f0 = realize_field(spec, box, h, static_cast<std::uint64_t>(i));
        base[static_cast<std::size_t>(i)] = f0.entry_at(f0.layout().flat(f0.layout().cell_at(x0)), 0, 0);
        const CoefficientField f1 =
            realize_field(spec, box, h, static_cast<std::uint64_t>(n_samples + i));
        shifted[static_cast<std::size_t>(i)] =
            f1.entry_at(f1.layout().flat(f1.layout().cell_at(x1)), 0, 0);
    }
    const KsResult ks = ks_two_sample(base, shifted);
    return {ks.statistic, ks.p_value, n_samples, ks.p_value > 0.01};
}

}  // namespace homog
