#include "maskgrad/oracle.hpp"

#include <cmath>

#include "maskgrad/error.hpp"
#include "maskgrad/rng.hpp"

namespace maskgrad {

namespace {
constexpr int kGradCap = 12;
constexpr int kSearchCap = 20;

void check_cap(int n, int cap) {
    if (n < 1 || n > cap)
        fail_config("enumerable problem size out of range (cap " + std::to_string(cap) + ")");
}
}  // namespace

EnumerableProblem EnumerableProblem::from_table(int n, std::vector<double> table) {
    if (table.size() != (size_t{1} << n)) fail_config("loss table size must be 2^n");
    EnumerableProblem p;
    p.n = n;
    p.loss = [n, table = std::move(table)](const MaskVector& m) {
        uint32_t bits = 0;
        for (int i = 0; i < n; ++i)
            if (m[i]) bits |= 1u << i;
        return table[bits];
    };
    return p;
}

MaskVector mask_from_bits(uint32_t bits, int n) {
    MaskVector m(n, 0);
    for (int i = 0; i < n; ++i) m[i] = (bits >> i) & 1u;
    return m;
}

double EnumerableProblem::loss_bits(uint32_t bits) const { return loss(mask_from_bits(bits, n)); }

double exact_phi(const EnumerableProblem& problem, const BernoulliParams& s) {
    check_cap(problem.n, kGradCap);
    if (s.size() != static_cast<size_t>(problem.n)) fail_config("score length mismatch");
    double phi = 0.0;
    for (uint32_t bits = 0; bits < (1u << problem.n); ++bits) {
        MaskVector m = mask_from_bits(bits, problem.n);
        double p = 1.0;
        for (int i = 0; i < problem.n; ++i) p *= m[i] ? s[i] : 1.0 - s[i];
        phi += p * problem.loss(m);
    }
    return phi;
}

std::vector<double> exact_grad_phi(const EnumerableProblem& problem, const BernoulliParams& s) {
    check_cap(problem.n, kGradCap);
    if (s.size() != static_cast<size_t>(problem.n)) fail_config("score length mismatch");
    std::vector<double> grad(problem.n, 0.0);
    for (uint32_t bits = 0; bits < (1u << problem.n); ++bits) {
        MaskVector m = mask_from_bits(bits, problem.n);
        double p = 1.0;
        for (int i = 0; i < problem.n; ++i) p *= m[i] ? s[i] : 1.0 - s[i];
        double L = problem.loss(m);
        std::vector<double> glp = grad_log_prob(s, m);
        for (int i = 0; i < problem.n; ++i) grad[i] += L * p * glp[i];
    }
    return grad;
}

EstimatorStats estimator_stats(const EnumerableProblem& problem, const BernoulliParams& s,
                               double delta, int64_t n_trials, uint64_t seed) {
    check_cap(problem.n, kGradCap);
    if (n_trials < 2) fail_config("need at least 2 trials");
    size_t n = s.size();

    // Running sums and sums of squares per component.
    std::vector<double> sp(n, 0.0), spp(n, 0.0), sb(n, 0.0), sbb(n, 0.0);
    for (int64_t t = 0; t < n_trials; ++t) {
        Rng rng = Rng::stream(seed, 0x0E57, static_cast<uint64_t>(t));
        MaskVector m = sample_mask(s, rng);
        double L = problem.loss(m);
        std::vector<double> glp = grad_log_prob(s, m);
        for (size_t i = 0; i < n; ++i) {
            double plain = L * glp[i];
            double base = (L - delta) * glp[i];
            sp[i] += plain;
            spp[i] += plain * plain;
            sb[i] += base;
            sbb[i] += base * base;
        }
    }

    EstimatorStats st;
    st.mean_plain.resize(n);
    st.var_plain.resize(n);
    st.se_plain.resize(n);
    st.mean_baseline.resize(n);
    st.var_baseline.resize(n);
    st.se_baseline.resize(n);
    double N = static_cast<double>(n_trials);
    for (size_t i = 0; i < n; ++i) {
        double mp = sp[i] / N;
        double mb = sb[i] / N;
        st.mean_plain[i] = mp;
        st.mean_baseline[i] = mb;
        st.var_plain[i] = (spp[i] - N * mp * mp) / (N - 1.0);
        st.var_baseline[i] = (sbb[i] - N * mb * mb) / (N - 1.0);
        st.se_plain[i] = std::sqrt(st.var_plain[i] / N);
        st.se_baseline[i] = std::sqrt(st.var_baseline[i] / N);
    }
    return st;
}

MaskVector brute_force_best_mask(const EnumerableProblem& problem, double K) {
    check_cap(problem.n, kSearchCap);
    bool found = false;
    double best_loss = 0.0;
    MaskVector best;
    for (uint64_t bits = 0; bits < (uint64_t{1} << problem.n); ++bits) {
        MaskVector m = mask_from_bits(static_cast<uint32_t>(bits), problem.n);
        int64_t ones = 0;
        for (uint8_t v : m) ones += v;
        if (static_cast<double>(ones) > K) continue;
        double L = problem.loss(m);
        if (!found || L < best_loss || (L == best_loss && m < best)) {
            found = true;
            best_loss = L;
            best = m;
        }
    }
    if (!found) fail_config("budget admits no mask");
    return best;
}

std::vector<double> projection_oracle(const std::vector<double>& z, double K) {
    size_t n = z.size();
    auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
    auto residual = [&](double nu) {
        double r = -K;
        for (double zi : z) r += clamp01(zi - nu);
        return r;
    };

    std::vector<double> s(n);
    if (residual(0.0) <= 0.0) {
        for (size_t i = 0; i < n; ++i) s[i] = clamp01(z[i]);
        return s;
    }

    std::vector<double> bp;
    bp.reserve(2 * n);
    for (double zi : z) {
        if (zi > 0.0) bp.push_back(zi);            // component leaves the 0-clamp
        if (zi - 1.0 > 0.0) bp.push_back(zi - 1.0);  // component leaves the 1-clamp
    }
    bp.push_back(0.0);
    std::sort(bp.begin(), bp.end());

    double nu = 0.0;
    for (size_t seg = 0; seg + 1 <= bp.size(); ++seg) {
        double lo = bp[seg];
        double hi = seg + 1 < bp.size() ? bp[seg + 1] : lo;
        double r_lo = residual(lo);
        if (r_lo <= 0.0) {
            nu = lo;
            break;
        }
        if (seg + 1 == bp.size()) {
            nu = lo;  // cannot happen for K > 0: residual at the last breakpoint is <= 0
            break;
        }
        // Between breakpoints the interior set is fixed; slope = -|interior|.
        double slope_count = 0.0;
        double mid = 0.5 * (lo + hi);
        for (double zi : z)
            if (zi - mid > 0.0 && zi - mid < 1.0) slope_count += 1.0;
        if (slope_count > 0.0) {
            double root = lo + r_lo / slope_count;
            if (root <= hi + 1e-15) {
                nu = root;
                break;
            }
        }
    }
    for (size_t i = 0; i < n; ++i) s[i] = clamp01(z[i] - nu);
    return s;
}

}  // namespace maskgrad
