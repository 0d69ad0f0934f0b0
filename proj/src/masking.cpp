#include "maskgrad/masking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maskgrad/error.hpp"

namespace maskgrad {

void check_params(const BernoulliParams& s) {
    for (double v : s) {
        if (!std::isfinite(v)) fail_numeric("score vector has non-finite component");
        if (v < 0.0 || v > 1.0) fail_config("score component outside [0,1]: " + std::to_string(v));
    }
}

void check_mask(const MaskVector& m, size_t expected_len) {
    if (m.size() != expected_len) fail_config("mask length does not match unit count");
    for (uint8_t v : m)
        if (v > 1) fail_config("mask component not binary");
}

MaskVector sample_mask(const BernoulliParams& s, Rng& rng) {
    MaskVector m(s.size());
    for (size_t i = 0; i < s.size(); ++i) m[i] = rng.uniform01() < s[i] ? 1 : 0;
    return m;
}

MaskVector sample_mask(const BernoulliParams& s, uint64_t rng_seed) {
    Rng rng(mix64(rng_seed));
    return sample_mask(s, rng);
}

namespace {
inline double clamp_score(double v) {
    return std::min(1.0 - kScoreClampEps, std::max(kScoreClampEps, v));
}
}  // namespace

double log_prob(const BernoulliParams& s, const MaskVector& m) {
    check_mask(m, s.size());
    double lp = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
        double p = clamp_score(s[i]);
        lp += m[i] ? std::log(p) : std::log1p(-p);
    }
    return lp;
}

std::vector<double> grad_log_prob(const BernoulliParams& s, const MaskVector& m) {
    check_mask(m, s.size());
    std::vector<double> g(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        double p = clamp_score(s[i]);
        g[i] = (static_cast<double>(m[i]) - p) / (p * (1.0 - p));
    }
    return g;
}

}  // namespace maskgrad
