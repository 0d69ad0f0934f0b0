#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maskgrad/granularity.hpp"
#include "maskgrad/masking.hpp"
#include "maskgrad/projection.hpp"

// The optimizer is deliberately model-blind: this header (and its
// implementation) depends only on mask bookkeeping, the feasible-set
// projection, and a scalar-loss callback. Driving a transformer checkpoint
// happens one layer up (pipeline.hpp), so swapping the evaluator for a pure
// lookup table exercises the identical update path.

namespace maskgrad {

enum class Estimator { baseline, plain };

struct OptimizerConfig {
    double learning_rate = 2e-3;
    int64_t batch_size = 8;
    int64_t n_samples = 2;      // masks sampled per step, all sharing one data batch
    int64_t baseline_window = 5;  // moving-average window T
    double retained_fraction = 0.5;
    Budget::Mode budget_mode = Budget::Mode::unit_count;
    int64_t total_steps = -1;  // < 0: derive from epochs * batches-per-epoch
    double epochs = 1.0;
    uint64_t seed = 0;
    Estimator estimator = Estimator::baseline;
    // Baseline delta starts at 0; optionally warm-start it to the first
    // step's mean loss instead (off by default).
    bool warm_start_baseline = false;
    // Progressive schedules reset delta to 0 per stage unless carried.
    bool carry_baseline = false;

    void validate() const;
};

// The optimizer's entire view of the network: a scalar-loss oracle. No
// gradient or internals can cross this boundary.
using LossEvaluator = std::function<double(const MaskVector&)>;

struct TrainState {
    BernoulliParams s;
    double delta = 0.0;
    int64_t step = 0;
    uint64_t run_seed = 0;
    bool delta_warmed = false;       // set once warm-start has fired
    std::vector<double> recent_losses;  // ring buffer of the last few raw losses
    size_t ring_pos = 0;

    void push_loss(double loss);
};

struct StepRecord {
    int64_t step = 0;
    double mean_loss = 0.0;
    double delta = 0.0;   // after the step's baseline update
    double sum_s = 0.0;   // after projection
    double min_s = 0.0;
    double max_s = 0.0;
};

struct StageSpec {
    double rho;
    int64_t steps;
};

struct RunResult {
    BernoulliParams s;
    TrainState state;
    std::vector<StepRecord> log;
};

Budget make_budget(double rho, Budget::Mode mode, const GranularityMap& gran);

// One update: sample n_samples masks from s (streams derived per
// (seed, step, sample)), evaluate losses, form the variance-reduced gradient
// estimate g = (1/N_s) sum_i (L_i - delta) * grad_log_prob(s, m_i) (plain
// estimator drops delta), take the projected SGD step s <- project(s - eta g),
// then update delta <- ((T-1)/T) delta + (1/(N_s T)) sum_i L_i. The gradient
// uses the pre-update delta.
StepRecord optimizer_step(TrainState& state, const LossEvaluator& evaluator,
                          const OptimizerConfig& cfg, const Budget& budget);

// Generic loop over an evaluator factory: make_evaluator(step) supplies the
// step's loss oracle (bound to that step's data batch, or to a synthetic
// problem). init_s is projected once before training.
RunResult optimize(const BernoulliParams& init_s, const std::vector<StageSpec>& schedule,
                   const OptimizerConfig& cfg, const GranularityMap& gran,
                   const std::function<LossEvaluator(int64_t step)>& make_evaluator);

// Stage sequence for progressive pruning: retained fraction start_rho,
// start_rho - step_delta, ..., down to end_rho inclusive. The final s of each
// stage seeds the next; each stage re-projects to its own budget.
std::vector<StageSpec> progressive_schedule(double start_rho, double end_rho, double step_delta,
                                            int64_t steps_per_stage);

std::vector<StageSpec> fixed_schedule(double rho, int64_t steps);

}  // namespace maskgrad
