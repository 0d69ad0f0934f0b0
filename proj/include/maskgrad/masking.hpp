#pragma once

#include <cstdint>
#include <vector>

#include "maskgrad/rng.hpp"

namespace maskgrad {

// Per-unit retention probabilities s in [0,1]^n. Stored in double; the score
// file format narrows to f32.
using BernoulliParams = std::vector<double>;

// Binary assignment m in {0,1}^n; 0 = pruned.
using MaskVector = std::vector<uint8_t>;

// Clamp applied to s inside probability computations only: the stored s may
// sit exactly at 0/1 (projection puts it there) and sampling uses the
// unclamped values so deterministic components stay deterministic.
inline constexpr double kScoreClampEps = 1e-4;

void check_params(const BernoulliParams& s);
void check_mask(const MaskVector& m, size_t expected_len);

// Independent per-component Bernoulli draws, one uniform per component in
// index order, so a draw is reproducible from (seed) or from the stream state.
MaskVector sample_mask(const BernoulliParams& s, Rng& rng);
MaskVector sample_mask(const BernoulliParams& s, uint64_t rng_seed);

// log p(m|s) = sum_i [m_i ln s_i + (1-m_i) ln(1-s_i)], s clamped to
// [eps, 1-eps] first.
double log_prob(const BernoulliParams& s, const MaskVector& m);

// Closed-form score-function gradient: (m_i - s_i) / (s_i (1 - s_i)), with the
// same clamping rule.
std::vector<double> grad_log_prob(const BernoulliParams& s, const MaskVector& m);

}  // namespace maskgrad
