#pragma once

#include <vector>

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/optimizer.hpp"

namespace maskgrad {

// Corpus-driven optimization: each step's evaluator is the masked forward
// loss over one shuffled calibration batch (shared by all n_samples mask
// draws of that step). This is the only place the optimizer meets the model,
// and the model only ever crosses the boundary as a scalar loss.
RunResult run(const Checkpoint& ckpt, const SegmentStore& corpus, const GranularityMap& gran,
              const BernoulliParams& init_s, const OptimizerConfig& cfg,
              const std::vector<StageSpec>& schedule);

}  // namespace maskgrad
