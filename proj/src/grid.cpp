#include "homog/grid.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "homog/parallel.hpp"

namespace homog {

CoefficientField CoefficientField::uniform(const GridLayout& g, const Tensor& value) {
    CoefficientField f;
    f.layout_ = g;
    f.storage_ = FieldStorage::Uniform;
    f.uniform_ = value;
    f.uniform_.d = g.d;
    return f;
}

CoefficientField CoefficientField::isotropic(const GridLayout& g, std::vector<double> cell_scalars) {
    if (static_cast<std::int64_t>(cell_scalars.size()) != g.cells())
        throw ConfigError("field: scalar array size does not match grid");
    CoefficientField f;
    f.layout_ = g;
    f.storage_ = FieldStorage::Isotropic;
    f.data_ = std::move(cell_scalars);
    return f;
}

CoefficientField CoefficientField::full(const GridLayout& g, std::vector<Tensor> cell_tensors) {
    if (static_cast<std::int64_t>(cell_tensors.size()) != g.cells())
        throw ConfigError("field: tensor array size does not match grid");
    CoefficientField f;
    f.layout_ = g;
    f.storage_ = FieldStorage::Full;
    f.data_.resize(cell_tensors.size() * g.d * g.d);
    for (std::size_t c = 0; c < cell_tensors.size(); ++c)
        for (int i = 0; i < g.d; ++i)
            for (int j = 0; j < g.d; ++j) f.data_[(c * g.d + i) * g.d + j] = cell_tensors[c](i, j);
    return f;
}

Tensor CoefficientField::tensor_at(std::int64_t flat) const {
    const int d = layout_.d;
    switch (storage_) {
        case FieldStorage::Uniform:
            return uniform_;
        case FieldStorage::Isotropic:
            return Tensor::isotropic(d, data_[static_cast<std::size_t>(flat)]);
        case FieldStorage::Diagonal: {
            Tensor t = Tensor::identity(d);
            for (int i = 0; i < d; ++i) t(i, i) = data_[static_cast<std::size_t>(flat * d + i)];
            return t;
        }
        case FieldStorage::Full: {
            Tensor t;
            t.d = d;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    t(i, j) = data_[static_cast<std::size_t>((flat * d + i) * d + j)];
            return t;
        }
    }
    return uniform_;
}

double CoefficientField::scalar_at(std::int64_t flat) const {
    if (storage_ == FieldStorage::Isotropic) return data_[static_cast<std::size_t>(flat)];
    if (storage_ == FieldStorage::Uniform) return uniform_(0, 0);
    return entry_at(flat, 0, 0);
}

double CoefficientField::entry_at(std::int64_t flat, int i, int j) const {
    const int d = layout_.d;
    switch (storage_) {
        case FieldStorage::Uniform:
            return uniform_(i, j);
        case FieldStorage::Isotropic:
            return i == j ? data_[static_cast<std::size_t>(flat)] : 0.0;
        case FieldStorage::Diagonal:
            return i == j ? data_[static_cast<std::size_t>(flat * d + i)] : 0.0;
        case FieldStorage::Full:
            return data_[static_cast<std::size_t>((flat * d + i) * d + j)];
    }
    return 0.0;
}

bool CoefficientField::diagonal_like() const {
    switch (storage_) {
        case FieldStorage::Uniform:
            return uniform_.is_diagonal();
        case FieldStorage::Isotropic:
        case FieldStorage::Diagonal:
            return true;
        case FieldStorage::Full:
            return false;
    }
    return false;
}

bool CoefficientField::symmetric(double tol) const {
    if (storage_ != FieldStorage::Full) {
        if (storage_ == FieldStorage::Uniform) {
            for (int i = 0; i < layout_.d; ++i)
                for (int j = 0; j < i; ++j)
                    if (std::abs(uniform_(i, j) - uniform_(j, i)) > tol) return false;
        }
        return true;
    }
    const int d = layout_.d;
    for (std::int64_t c = 0; c < layout_.cells(); ++c)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < i; ++j)
                if (std::abs(entry_at(c, i, j) - entry_at(c, j, i)) > tol) return false;
    return true;
}

CoefficientField CoefficientField::transposed() const {
    if (storage_ != FieldStorage::Full && storage_ != FieldStorage::Uniform) return *this;
    CoefficientField f = *this;
    if (storage_ == FieldStorage::Uniform) {
        f.uniform_ = uniform_.transposed();
        return f;
    }
    const int d = layout_.d;
    for (std::int64_t c = 0; c < layout_.cells(); ++c)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < i; ++j)
                std::swap(f.data_[static_cast<std::size_t>((c * d + i) * d + j)],
                          f.data_[static_cast<std::size_t>((c * d + j) * d + i)]);
    return f;
}

CoefficientField CoefficientField::crop(const Box& sub) const {
    const GridLayout g = GridLayout::make(sub, layout_.h);
    if (g.d != layout_.d) throw ConfigError("crop: dimension mismatch");
    std::array<std::int64_t, 3> off{0, 0, 0};
    for (int a = 0; a < g.d; ++a) {
        const double shift = (sub.lo[a] - layout_.box.lo[a]) / layout_.h;
        const auto s = static_cast<std::int64_t>(std::llround(shift));
        if (std::abs(shift - static_cast<double>(s)) > 1e-9 || s < 0 ||
            s + g.n[a] > layout_.n[a])
            throw ConfigError("crop: sub-box does not align with the cell lattice");
        off[a] = s;
    }
    if (storage_ == FieldStorage::Uniform) return uniform(g, uniform_);

    const int vpc = storage_ == FieldStorage::Isotropic ? 1
                    : storage_ == FieldStorage::Diagonal ? layout_.d
                                                         : layout_.d * layout_.d;
    CoefficientField f;
    f.layout_ = g;
    f.storage_ = storage_;
    f.data_.resize(static_cast<std::size_t>(g.cells()) * vpc);
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        MultiIndex m = g.unflat(c);
        MultiIndex src = m;
        for (int a = 0; a < g.d; ++a) src[a] += static_cast<int>(off[a]);
        const std::int64_t sc = layout_.flat(src);
        for (int k = 0; k < vpc; ++k)
            f.data_[static_cast<std::size_t>(c * vpc + k)] =
                data_[static_cast<std::size_t>(sc * vpc + k)];
    }
    return f;
}

void CoefficientField::validate(double lambda) const {
    if (storage_ == FieldStorage::Uniform) {
        if (!is_admissible_tensor(uniform_, lambda))
            throw ConfigError("field: uniform tensor violates ellipticity bounds");
        return;
    }
    if (storage_ == FieldStorage::Isotropic) {
        for (double a : data_)
            if (!(a >= lambda - 1e-12 && a <= 1.0 + 1e-12))
                throw ConfigError("field: isotropic cell value outside [lambda, 1]");
        return;
    }
    for (std::int64_t c = 0; c < layout_.cells(); ++c)
        if (!is_admissible_tensor(tensor_at(c), lambda))
            throw ConfigError("field: cell tensor violates ellipticity bounds");
}

void CoefficientField::coefficient_range(double& lo, double& hi) const {
    lo = 1e300;
    hi = -1e300;
    if (storage_ == FieldStorage::Uniform) {
        for (int i = 0; i < layout_.d; ++i) {
            lo = std::min(lo, uniform_(i, i));
            hi = std::max(hi, uniform_(i, i));
        }
        return;
    }
    if (storage_ == FieldStorage::Isotropic) {
        for (double a : data_) {
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        return;
    }
    for (std::int64_t c = 0; c < layout_.cells(); ++c)
        for (int i = 0; i < layout_.d; ++i) {
            const double a = entry_at(c, i, i);
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
}

std::uint64_t CoefficientField::content_hash() const {
    // FNV-1a over the byte image of the payload plus shape.
    std::uint64_t h = 1469598103934665603ULL;
    auto eat = [&h](const void* p, std::size_t bytes) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    eat(&layout_.d, sizeof(layout_.d));
    eat(layout_.n.data(), sizeof(layout_.n));
    eat(&layout_.h, sizeof(layout_.h));
    if (storage_ == FieldStorage::Uniform)
        eat(uniform_.a.data(), sizeof(uniform_.a));
    else
        eat(data_.data(), data_.size() * sizeof(double));
    return h;
}

// ---------------------------------------------------------------------------

AveragingMask AveragingMask::make(const GridLayout& g, double L, const Vec3& center) {
    if (!(L > 0.0)) throw ConfigError("mask: L must be positive");
    for (int a = 0; a < g.d; ++a)
        if (center[a] - L < g.box.lo[a] - 1e-12 || center[a] + L > g.box.hi[a] + 1e-12)
            throw ConfigError("mask: support B_L not contained in the grid box");
    AveragingMask m;
    m.L = L;
    m.layout = g;
    m.center = center;
    m.eta.assign(static_cast<std::size_t>(g.cells()), 0.0);
    double total = 0.0;
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Vec3 x = g.center(g.unflat(c));
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
        const double r = std::sqrt(r2);
        if (r < L) {
            const double w = std::cos(M_PI * r / (2.0 * L));
            m.eta[static_cast<std::size_t>(c)] = w * w;
            total += w * w;
        }
    }
    if (total <= 0.0) throw ConfigError("mask: empty support at this resolution");
    const double scale = 1.0 / (total * g.cell_volume());
    for (auto& e : m.eta) e *= scale;
    return m;
}

FaceField gradient(const GridFunction& u) {
    const GridLayout& g = u.layout;
    for (int a = 0; a < g.d; ++a)
        if (g.n[a] < 2) throw ConfigError("gradient: need at least 2 cells per axis");
    FaceField out = FaceField::zeros(g);
    const double invh = 1.0 / g.h;
    for (int axis = 0; axis < g.d; ++axis) {
        const std::int64_t nfaces = g.faces(axis);
        const std::int64_t nslab = g.n[axis];
        auto* dst = out.comp[axis].data();
        const double* src = u.v.data();
        parallel_for(nfaces, [&, nslab](std::int64_t b, std::int64_t e) {
            for (std::int64_t f = b; f < e; ++f) {
                // face multi-index (n+1 entries along `axis`, cell counts elsewhere)
                std::int64_t rest = f;
                std::int64_t idx[3] = {0, 0, 0};
                for (int a = 0; a < g.d; ++a) {
                    const std::int64_t na = (a == axis) ? nslab + 1 : g.n[a];
                    idx[a] = rest % na;
                    rest /= na;
                }
                const std::int64_t pos = idx[axis];
                auto cell_flat = [&](std::int64_t along) {
                    std::int64_t c = 0;
                    for (int a = g.d - 1; a >= 0; --a)
                        c = c * g.n[a] + ((a == axis) ? along : idx[a]);
                    return c;
                };
                const double left = pos > 0 ? src[cell_flat(pos - 1)] : 0.0;   // Dirichlet ghost
                const double right = pos < nslab ? src[cell_flat(pos)] : 0.0;  // Dirichlet ghost
                dst[f] = (right - left) * invh;
            }
        });
    }
    return out;
}

GridFunction divergence(const FaceField& q) {
    const GridLayout& g = q.layout;
    GridFunction out = GridFunction::zeros(g);
    const double invh = 1.0 / g.h;
    for (int axis = 0; axis < g.d; ++axis) {
        std::int64_t stride_face = 1;  // face-layout stride along `axis`
        for (int a = 0; a < axis; ++a) stride_face *= g.n[a];
        const double* src = q.comp[axis].data();
        parallel_for(g.cells(), [&, stride_face](std::int64_t b, std::int64_t e) {
            for (std::int64_t c = b; c < e; ++c) {
                MultiIndex m = g.unflat(c);
                // left face has same multi-index in face layout, right face +1 along axis
                std::int64_t f = m[g.d - 1];
                for (int a = g.d - 2; a >= 0; --a) {
                    const std::int64_t na = (a == axis) ? g.n[a] + 1 : g.n[a];
                    f = f * na + m[a];
                }
                out.v[static_cast<std::size_t>(c)] +=
                    (src[f + stride_face] - src[f]) * invh;
            }
        });
    }
    return out;
}

std::vector<std::vector<double>> cell_gradient(const FaceField& gf) {
    const GridLayout& g = gf.layout;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(g.d));
    for (int axis = 0; axis < g.d; ++axis) {
        out[static_cast<std::size_t>(axis)].assign(static_cast<std::size_t>(g.cells()), 0.0);
        std::int64_t stride_face = 1;
        for (int a = 0; a < axis; ++a) stride_face *= g.n[a];
        const double* src = gf.comp[axis].data();
        auto* dst = out[static_cast<std::size_t>(axis)].data();
        parallel_for(g.cells(), [&, stride_face](std::int64_t b, std::int64_t e) {
            for (std::int64_t c = b; c < e; ++c) {
                MultiIndex m = g.unflat(c);
                std::int64_t f = m[g.d - 1];
                for (int a = g.d - 2; a >= 0; --a) {
                    const std::int64_t na = (a == axis) ? g.n[a] + 1 : g.n[a];
                    f = f * na + m[a];
                }
                dst[c] = 0.5 * (src[f] + src[f + stride_face]);
            }
        });
    }
    return out;
}

double masked_average(const GridFunction& w, const AveragingMask& mask) {
    if (!w.layout.same_shape(mask.layout)) throw ConfigError("masked_average: layout mismatch");
    return masked_average(w.v, mask);
}

double masked_average(const std::vector<double>& w, const AveragingMask& mask) {
    if (w.size() != mask.eta.size()) throw ConfigError("masked_average: size mismatch");
    return det_dot(w.data(), mask.eta.data(), static_cast<std::int64_t>(w.size())) *
           mask.layout.cell_volume();
}

// File dumps ----------------------------------------------------------------

namespace {

void write_header(std::ofstream& os, std::uint32_t kind, const GridLayout& g,
                  std::uint64_t values_per_cell) {
    os.write("HGD1", 4);
    auto put = [&os](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), n); };
    const auto d = static_cast<std::uint32_t>(g.d);
    put(&kind, 4);
    put(&d, 4);
    double lo[3] = {g.box.lo[0], g.box.lo[1], g.box.lo[2]};
    double hi[3] = {g.box.hi[0], g.box.hi[1], g.box.hi[2]};
    put(lo, 24);
    put(hi, 24);
    put(&g.h, 8);
    std::uint64_t n[3] = {static_cast<std::uint64_t>(g.n[0]), static_cast<std::uint64_t>(g.n[1]),
                          static_cast<std::uint64_t>(g.n[2])};
    put(n, 24);
    put(&values_per_cell, 8);
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw DataError("cannot open output file: " + path);
    return os;
}

}  // namespace

void write_grid_function_binary(const GridFunction& f, const std::string& path) {
    auto os = open_out(path, true);
    write_header(os, 0, f.layout, 1);
    os.write(reinterpret_cast<const char*>(f.v.data()),
             static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    if (!os) throw DataError("write failed: " + path);
}

void write_grid_function_csv(const GridFunction& f, const std::string& path) {
    auto os = open_out(path, false);
    const GridLayout& g = f.layout;
    os << "i,j,k,x,y,z,value\n";
    char line[256];
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        MultiIndex m = g.unflat(c);
        const Vec3 x = g.center(m);
        std::snprintf(line, sizeof(line), "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", m[0], m[1], m[2],
                      x[0], x[1], x[2], f.v[static_cast<std::size_t>(c)]);
        os << line;
    }
    if (!os) throw DataError("write failed: " + path);
}

void write_field_binary(const CoefficientField& f, const std::string& path) {
    auto os = open_out(path, true);
    const GridLayout& g = f.layout();
    const auto d = static_cast<std::uint64_t>(g.d);
    write_header(os, 1, g, d * d);
    std::vector<double> row(static_cast<std::size_t>(d * d));
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const Tensor t = f.tensor_at(c);
        for (int i = 0; i < g.d; ++i)
            for (int j = 0; j < g.d; ++j) row[static_cast<std::size_t>(i * g.d + j)] = t(i, j);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!os) throw DataError("write failed: " + path);
}

void write_field_csv(const CoefficientField& f, const std::string& path) {
    auto os = open_out(path, false);
    const GridLayout& g = f.layout();
    os << "i,j,k";
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j) os << ",a" << i + 1 << j + 1;
    os << "\n";
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        MultiIndex m = g.unflat(c);
        os << m[0] << ',' << m[1] << ',' << m[2];
        const Tensor t = f.tensor_at(c);
        char buf[32];
        for (int i = 0; i < g.d; ++i)
            for (int j = 0; j < g.d; ++j) {
                std::snprintf(buf, sizeof(buf), ",%.17g", t(i, j));
                os << buf;
            }
        os << "\n";
    }
    if (!os) throw DataError("write failed: " + path);
}

}  // namespace homog
