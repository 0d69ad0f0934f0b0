#include "maskgrad/projection.hpp"

#include <algorithm>
#include <cmath>

#include "maskgrad/error.hpp"

namespace maskgrad {

namespace {

constexpr double kResidualTol = 1e-10;
constexpr int kMaxIters = 200;

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void check_finite(const std::vector<double>& z) {
    for (double v : z)
        if (!std::isfinite(v)) fail_numeric("projection input has non-finite component");
}

}  // namespace

std::vector<double> project(const std::vector<double>& z, double K) {
    check_finite(z);
    if (K <= 0.0) fail_config("projection budget must be positive");
    size_t n = z.size();
    std::vector<double> s(n);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s[i] = clamp01(z[i]);
        sum += s[i];
    }
    // nu1* <= 0 whenever the plain clamp is feasible, so nu2* = 0.
    if (sum <= K) return s;

    double lo = *std::min_element(z.begin(), z.end()) - 1.0;  // residual >= n - K >= 0 here
    double hi = *std::max_element(z.begin(), z.end());        // residual = -K < 0 here
    double nu = hi;
    for (int it = 0; it < kMaxIters; ++it) {
        nu = 0.5 * (lo + hi);
        double r = -K;
        for (size_t i = 0; i < n; ++i) r += clamp01(z[i] - nu);
        if (std::abs(r) < kResidualTol) break;
        // Residual is monotone non-increasing in nu.
        if (r > 0)
            lo = nu;
        else
            hi = nu;
    }
    nu = std::max(0.0, nu);
    for (size_t i = 0; i < n; ++i) s[i] = clamp01(z[i] - nu);
    return s;
}

std::vector<double> project_weighted(const std::vector<double>& z, double K,
                                     const std::vector<double>& w) {
    check_finite(z);
    if (w.size() != z.size()) fail_config("projection weights length mismatch");
    if (K <= 0.0) fail_config("projection budget must be positive");
    for (double wi : w)
        if (!(wi > 0.0) || !std::isfinite(wi)) fail_config("projection weights must be positive");

    size_t n = z.size();
    std::vector<double> s(n);
    double wsum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s[i] = clamp01(z[i]);
        wsum += w[i] * s[i];
    }
    if (wsum <= K) return s;

    // At nu = max(z_i / w_i) every component clamps to <= 0, so the residual
    // brackets a root on [0, hi].
    double lo = 0.0;
    double hi = 0.0;
    for (size_t i = 0; i < n; ++i) hi = std::max(hi, z[i] / w[i]);
    double nu = hi;
    for (int it = 0; it < kMaxIters; ++it) {
        nu = 0.5 * (lo + hi);
        double r = -K;
        for (size_t i = 0; i < n; ++i) r += w[i] * clamp01(z[i] - nu * w[i]);
        if (std::abs(r) < kResidualTol) break;
        if (r > 0)
            lo = nu;
        else
            hi = nu;
    }
    nu = std::max(0.0, nu);
    for (size_t i = 0; i < n; ++i) s[i] = clamp01(z[i] - nu * w[i]);
    return s;
}

std::vector<double> project(const std::vector<double>& z, const Budget& budget) {
    if (budget.mode == Budget::Mode::param_weighted)
        return project_weighted(z, budget.K, budget.weights);
    return project(z, budget.K);
}

}  // namespace maskgrad
