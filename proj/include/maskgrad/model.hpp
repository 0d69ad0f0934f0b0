#pragma once

#include <cstdint>
#include <vector>

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"

namespace maskgrad {

// Masked forward request. mask == nullptr means dense; otherwise the mask
// length must equal granularity->unit_count(). Semantics:
//   head unit 0        -> that head's output contribution to the o-projection
//                         is zeroed (the head is skipped entirely; identical);
//   mlp_channel unit 0 -> that hidden channel is zeroed after up/gate and
//                         before the down-projection;
//   layer unit 0       -> the whole block is the identity on the residual
//                         stream.
// Block outputs always keep width d_model; residual dims are never pruned.
struct MaskedForwardRequest {
    const CalibrationBatch* tokens = nullptr;
    const MaskVector* mask = nullptr;
    const GranularityMap* granularity = nullptr;
};

// Pre-softmax logits, shape [batch, seq, vocab]. Rows (and therefore every
// segment's logits) are independent of which other segments share the batch.
Tensor forward_logits(const Checkpoint& ckpt, const MaskedForwardRequest& req);

// Mean next-token cross-entropy over all batch * (seq_len - 1) predicted
// positions; equals the CE computed from forward_logits by construction.
double forward_loss(const Checkpoint& ckpt, const MaskedForwardRequest& req);

// Sum of -log p(next token) and the number of predicted positions, accumulated
// per segment in batch order; building block for corpus perplexity.
struct NllSum {
    double sum = 0.0;
    int64_t positions = 0;
};
NllSum forward_nll(const Checkpoint& ckpt, const MaskedForwardRequest& req);

// Autoregressive sampling from the dense model at the given temperature
// (> 0; the temperature -> 0 limit is greedy decoding, not special-cased).
// Position 0 is drawn uniformly from the vocabulary. One RNG stream is
// derived per segment index, so output is independent of internal generation
// batching and deterministic per seed.
SegmentStore teacher_sample(const Checkpoint& ckpt, uint64_t seed, int64_t n_segments,
                            int64_t seq_len, double temperature);

// Mean-square activation accumulators from dense forwards: the concat-head
// output feeding each o-projection and the gated hidden vector feeding each
// down-projection. Used by the builtin importance metric.
struct ActivationStats {
    std::vector<std::vector<double>> att_sq;  // [layer][H_l * d_head]
    std::vector<std::vector<double>> mlp_sq;  // [layer][F_l]
    int64_t rows = 0;

    static ActivationStats zeros(const Checkpoint& ckpt);
};
void accumulate_activation_stats(const Checkpoint& ckpt, const CalibrationBatch& tokens,
                                 ActivationStats& stats);

}  // namespace maskgrad
