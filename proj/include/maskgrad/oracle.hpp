#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "maskgrad/masking.hpp"

namespace maskgrad {

// Tiny problem with a loss defined over all 2^n masks; mask index bit i is
// unit i. Enumeration oracles cap at n <= 12, brute-force search at n <= 20.
struct EnumerableProblem {
    int n = 0;
    std::function<double(const MaskVector&)> loss;

    static EnumerableProblem from_table(int n, std::vector<double> table);
    double loss_bits(uint32_t bits) const;
};

MaskVector mask_from_bits(uint32_t bits, int n);

// Phi(s) = sum_m p(m|s) L(m) by full enumeration.
double exact_phi(const EnumerableProblem& problem, const BernoulliParams& s);

// grad Phi(s) = sum_m L(m) p(m|s) grad_log_prob(s, m) by full enumeration.
std::vector<double> exact_grad_phi(const EnumerableProblem& problem, const BernoulliParams& s);

// Monte-Carlo per-component statistics of the single-sample estimators
//   plain:    L(m) * grad_log_prob(s, m)
//   baseline: (L(m) - delta) * grad_log_prob(s, m)
// over n_trials independent mask draws (same draws for both estimators).
struct EstimatorStats {
    std::vector<double> mean_plain, var_plain, se_plain;
    std::vector<double> mean_baseline, var_baseline, se_baseline;
};
EstimatorStats estimator_stats(const EnumerableProblem& problem, const BernoulliParams& s,
                               double delta, int64_t n_trials, uint64_t seed);

// argmin_{|m|_1 <= K} L(m); ties resolved to the lexicographically lowest
// mask vector (component 0 most significant).
MaskVector brute_force_best_mask(const EnumerableProblem& problem, double K);

// Exact projection onto {1ᵀs <= K} ∩ [0,1]^n, solved independently of the
// bisection path: the constraint residual is piecewise linear in the shift
// with breakpoints at z_i and z_i - 1, and between breakpoints the at-0 /
// at-1 / interior assignment is fixed, so the root is found by walking the
// sorted segments and solving the linear piece in closed form.
std::vector<double> projection_oracle(const std::vector<double>& z, double K);

}  // namespace maskgrad
