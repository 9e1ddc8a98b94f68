// Statistics helpers: streaming-free two-pass moments, jackknife CIs,
// Kolmogorov-Smirnov two-sample test, weighted log-log slope fits.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace homog {

double mean(const std::vector<double>& xs);
// Unbiased sample variance (two-pass).
double sample_variance(const std::vector<double>& xs);

// Leave-one-out jackknife of an arbitrary statistic. Returns the jackknife
// variance estimate ((n-1)/n * sum of squared deviations of the replicates).
double jackknife_variance(const std::vector<double>& xs,
                          const std::function<double(const std::vector<double>&)>& stat);

// Fast path for the mean: equals sample_variance / n.
double jackknife_variance_of_mean(const std::vector<double>& xs);

double percentile(std::vector<double> xs, double p);  // p in [0,100], linear interp

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r2 = 0.0;
    int n = 0;
};

// Weighted least squares of log y on log x. y_ci are CI half-widths mapped to
// log-scale weights by the delta method (sigma_logy = ci/y); zero/absent CIs
// mean unit weights. Requires >= 3 points, positive x and y, distinct x.
SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& y_ci = {});

// Plain linear fit of y on x (used for moment^2 vs ln T).
SlopeFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace homog
