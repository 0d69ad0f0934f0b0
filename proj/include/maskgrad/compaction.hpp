#pragma once

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"

namespace maskgrad {

// Physically slices pruned structures out of the checkpoint: masked heads'
// q/k/v columns and o rows, masked channels' up/gate columns and down rows,
// and skipped layers entirely (remaining layers renumbered). The compacted
// model's dense forward equals the original's masked forward: a masked unit
// contributed exact zeros, and removing zero terms from a fixed-order
// accumulation leaves every partial sum unchanged.
//
// A layer with zero retained heads (or channels) keeps an empty attention
// (or MLP) sub-block — dims 0, tensors omitted — but keeps its norm gains:
// width pruning never removes gains. Head slicing cannot shift rotary
// phases because the rotation angles depend only on within-head offsets.
//
// Accounting identity: param_count(compacted) = retained_prunable_params +
// (param_count(original) - total_prunable_params).
Checkpoint compact(const Checkpoint& ckpt, const MaskVector& mask, const GranularityMap& gran);

int64_t retained_prunable_params(const GranularityMap& gran, const MaskVector& mask);

}  // namespace maskgrad
