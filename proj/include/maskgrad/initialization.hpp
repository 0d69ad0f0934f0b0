#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"

namespace maskgrad {

// Per-unit importance values on an arbitrary real scale.
struct MetricScores {
    std::vector<double> x;
    std::string source;
};

// s = sigmoid((x - mean) / std), population (1/n) std. Zero-variance input
// maps to 0.5 everywhere. Strictly order-preserving otherwise; output in (0,1).
BernoulliParams sigmoid_norm(const MetricScores& x);

// s_i = c where the binary decision is 1, else 1-c; requires c in (0.5, 1).
BernoulliParams score_const(const MaskVector& decisions, double c);

// i.i.d. uniform draws rescaled so 1ᵀs = rho*n, then projected onto the
// budget (the rescale may push single components above 1; projection fixes
// that, which is why the mean-=rho invariant is stated pre-projection).
BernoulliParams random_init(size_t unit_count, double rho, uint64_t seed);

// Built-in importance metric: |weight| x input-activation RMS, aggregated per
// unit from dense forwards over a few corpus batches.
//   head (l,h):    sum over the head's o-projection input rows k of
//                  rms_att[l][k] * sum_j |wo[l][k,j]|
//   channel (l,c): rms_mlp[l][c] * sum_j |w_down[l][c,j]|
//   layer l:       sum of that layer's head and channel scores
// Zero weights give score 0; duplicate units score equal; scores are
// permutation-equivariant under unit relabeling.
MetricScores builtin_metric(const Checkpoint& ckpt, const SegmentStore& corpus_sample,
                            const GranularityMap& gran, int64_t n_batches = 4,
                            int64_t batch_size = 8);

}  // namespace maskgrad
