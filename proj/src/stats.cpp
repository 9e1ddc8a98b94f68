#include "homog/stats.hpp"

#include <algorithm>
#include <cmath>

#include "homog/common.hpp"

namespace homog {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw DataError("mean: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    const auto n = xs.size();
    if (n < 2) throw DataError("variance: need at least 2 samples");
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(n - 1);
}

double jackknife_variance(const std::vector<double>& xs,
                          const std::function<double(const std::vector<double>&)>& stat) {
    const auto n = xs.size();
    if (n < 2) throw DataError("jackknife: need at least 2 samples");
    std::vector<double> loo(xs.size() - 1);
    std::vector<double> reps(n);
    for (std::size_t i = 0; i < n; ++i) {
        loo.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) loo.push_back(xs[j]);
        reps[i] = stat(loo);
    }
    const double rm = mean(reps);
    double s = 0.0;
    for (double r : reps) s += (r - rm) * (r - rm);
    return s * static_cast<double>(n - 1) / static_cast<double>(n);
}

double jackknife_variance_of_mean(const std::vector<double>& xs) {
    return sample_variance(xs) / static_cast<double>(xs.size());
}

double percentile(std::vector<double> xs, double p) {
    if (xs.empty()) throw DataError("percentile: empty sample");
    std::sort(xs.begin(), xs.end());
    const double rank = p / 100.0 * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    const double w = rank - static_cast<double>(lo);
    return (1.0 - w) * xs[lo] + w * xs[hi];
}

namespace {
// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2k^2 lambda^2}.
double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-12) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}
}  // namespace

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw DataError("ks: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double xa = a[i], xb = b[j];
        if (xa <= xb) ++i;
        if (xb <= xa) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    const double lambda = (ne + 0.12 + 0.11 / ne) * d;
    return {d, kolmogorov_q(lambda)};
}

namespace {
SlopeFit weighted_fit(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& w) {
    SlopeFit fit;
    fit.n = static_cast<int>(x.size());
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double xb = sx / sw, yb = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - xb) * (x[i] - xb);
        sxy += w[i] * (x[i] - xb) * (y[i] - yb);
        syy += w[i] * (y[i] - yb) * (y[i] - yb);
    }
    if (sxx <= 0.0) throw DataError("fit: degenerate abscissa");
    fit.slope = sxy / sxx;
    fit.intercept = yb - fit.slope * xb;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        ssr += w[i] * r * r;
    }
    const double dof = static_cast<double>(x.size()) - 2.0;
    const double s2 = dof > 0.0 ? ssr / dof : 0.0;
    fit.stderr_slope = std::sqrt(s2 / sxx);
    fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    return fit;
}
}  // namespace

SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& y_ci) {
    if (x.size() != y.size() || (!y_ci.empty() && y_ci.size() != y.size()))
        throw DataError("fit: size mismatch");
    if (x.size() < 3) throw DataError("fit: need at least 3 points");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DataError("fit: nonpositive values");
        for (std::size_t j = i + 1; j < x.size(); ++j)
            if (x[i] == x[j]) throw DataError("fit: degenerate abscissa");
    }
    std::vector<double> lx(x.size()), ly(y.size()), w(x.size(), 1.0);
    bool any_ci = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        if (!y_ci.empty() && y_ci[i] > 0.0) any_ci = true;
    }
    if (any_ci) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double sigma = y_ci.empty() || y_ci[i] <= 0.0 ? 0.0 : y_ci[i] / y[i];
            w[i] = sigma > 0.0 ? 1.0 / (sigma * sigma) : 1.0;
        }
        // guard against one point dominating by orders of magnitude
        const double wmax = *std::max_element(w.begin(), w.end());
        for (auto& wi : w) wi = std::max(wi, wmax * 1e-6);
    }
    return weighted_fit(lx, ly, w);
}

SlopeFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DataError("fit: size mismatch");
    if (x.size() < 3) throw DataError("fit: need at least 3 points");
    std::vector<double> w(x.size(), 1.0);
    return weighted_fit(x, y, w);
}

}  // namespace homog
