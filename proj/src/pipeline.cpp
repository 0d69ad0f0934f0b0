#include "maskgrad/pipeline.hpp"

#include "maskgrad/error.hpp"
#include "maskgrad/model.hpp"

namespace maskgrad {

RunResult run(const Checkpoint& ckpt, const SegmentStore& corpus, const GranularityMap& gran,
              const BernoulliParams& init_s, const OptimizerConfig& cfg,
              const std::vector<StageSpec>& schedule) {
    if (corpus.count() < 1) fail_data("corpus has no segments");
    BatchIterator it(corpus, cfg.batch_size, cfg.seed, /*shuffle=*/true);
    int64_t epoch = 0;
    // The same data batch serves all n_samples mask evaluations of a step.
    auto make_eval = [&](int64_t /*step*/) -> LossEvaluator {
        CalibrationBatch batch;
        if (!it.next(batch)) {
            epoch += 1;
            it.start_epoch(epoch);
            it.next(batch);
        }
        return [&ckpt, &gran, batch = std::move(batch)](const MaskVector& m) {
            MaskedForwardRequest req;
            req.tokens = &batch;
            req.mask = &m;
            req.granularity = &gran;
            return forward_loss(ckpt, req);
        };
    };
    return optimize(init_s, schedule, cfg, gran, make_eval);
}

}  // namespace maskgrad
