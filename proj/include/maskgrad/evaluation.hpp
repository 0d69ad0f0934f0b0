#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgrad/checkpoint.hpp"
#include "maskgrad/data.hpp"
#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"

namespace maskgrad {

enum class ExtractMode { global, local };

// Deterministic mask extraction: global mode retains the ceil(rho*n) largest
// scores over the whole model; local mode retains ceil(rho*n_g) within each
// (layer, kind) group. Ties retain the lower unit index first. Ranking
// depends only on the order of s, so any strictly increasing transform of s
// extracts the same mask.
MaskVector extract_mask(const BernoulliParams& s, double rho, ExtractMode mode,
                        const GranularityMap& gran);

// Parameter-budget extraction: greedy by descending s (same tie rule),
// retaining every unit whose param_count still fits in rho * total prunable
// params (skip-and-continue, not first-misfit-stops).
MaskVector extract_mask_param_weighted(const BernoulliParams& s, double rho,
                                       const GranularityMap& gran);

// exp(mean over all predicted positions of -log p(next token)), aggregated
// over segments in store order with double accumulation, so the value is
// independent of eval batch size. mask == nullptr evaluates the dense model.
double perplexity(const Checkpoint& ckpt, const MaskVector* mask, const GranularityMap* gran,
                  const SegmentStore& corpus, int64_t batch_size = 16);

struct KindReport {
    std::string kind;
    int64_t total = 0;
    int64_t retained = 0;
};

struct LayerReport {
    int64_t layer = 0;
    int64_t heads_total = 0, heads_retained = 0;
    int64_t channels_total = 0, channels_retained = 0;
    int64_t layer_retained = 1;  // 0 only when a layer unit was pruned
};

struct PruneReport {
    std::string mode;  // "global" | "local" | "param_weighted"
    double rho = 0.0;
    std::vector<KindReport> kinds;
    std::vector<LayerReport> layers;
    int64_t units_total = 0;
    int64_t units_retained = 0;
    int64_t params_total = 0;          // whole model
    int64_t params_prunable = 0;       // under this granularity
    int64_t params_retained_prunable = 0;
    double retained_param_fraction = 0.0;  // of the whole model
    double ppl_before = 0.0;
    double ppl_after = 0.0;
};

PruneReport make_report(const Checkpoint& ckpt, const GranularityMap& gran, const MaskVector& mask,
                        double rho, const std::string& mode, double ppl_before, double ppl_after);

std::string report_to_json(const PruneReport& report);
// Per-layer sparsity table (layer, kind, total, retained, retained_fraction).
std::string report_to_csv(const PruneReport& report);

}  // namespace maskgrad
