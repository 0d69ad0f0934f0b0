#include "maskgrad/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "maskgrad/error.hpp"

namespace maskgrad {

namespace {
constexpr size_t kLossRingCapacity = 64;
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) fail_config("learning_rate must be > 0");
    if (batch_size < 1) fail_config("batch_size must be >= 1");
    if (n_samples < 1) fail_config("n_samples must be >= 1");
    if (baseline_window < 1) fail_config("baseline_window must be >= 1");
    if (!(retained_fraction > 0.0) || retained_fraction > 1.0)
        fail_config("retained_fraction must be in (0, 1]");
    if (total_steps < 0 && !(epochs > 0.0)) fail_config("either total_steps or epochs must be positive");
}

void TrainState::push_loss(double loss) {
    if (recent_losses.size() < kLossRingCapacity) {
        recent_losses.push_back(loss);
    } else {
        recent_losses[ring_pos] = loss;
        ring_pos = (ring_pos + 1) % kLossRingCapacity;
    }
}

Budget make_budget(double rho, Budget::Mode mode, const GranularityMap& gran) {
    if (!(rho > 0.0) || rho > 1.0) fail_config("retained fraction must be in (0, 1]");
    if (mode == Budget::Mode::param_weighted) {
        std::vector<double> w;
        w.reserve(gran.unit_count());
        for (const UnitDesc& u : gran.units) w.push_back(static_cast<double>(u.param_count));
        double total = 0.0;
        for (double wi : w) total += wi;
        return Budget::params(rho * total, std::move(w));
    }
    return Budget::units(rho * static_cast<double>(gran.unit_count()));
}

StepRecord optimizer_step(TrainState& state, const LossEvaluator& evaluator,
                          const OptimizerConfig& cfg, const Budget& budget) {
    size_t n = state.s.size();
    int64_t ns = cfg.n_samples;

    std::vector<MaskVector> masks(ns);
    std::vector<double> losses(ns);
    for (int64_t i = 0; i < ns; ++i) {
        Rng rng = Rng::stream(state.run_seed, static_cast<uint64_t>(state.step),
                              static_cast<uint64_t>(i));
        masks[i] = sample_mask(state.s, rng);
        losses[i] = evaluator(masks[i]);
        if (!std::isfinite(losses[i]))
            fail_numeric("non-finite loss at step " + std::to_string(state.step));
        state.push_loss(losses[i]);
    }

    if (cfg.warm_start_baseline && !state.delta_warmed) {
        double m = 0.0;
        for (double L : losses) m += L;
        state.delta = m / static_cast<double>(ns);
        state.delta_warmed = true;
    }

    double delta_pre = cfg.estimator == Estimator::baseline ? state.delta : 0.0;
    std::vector<double> g(n, 0.0);
    for (int64_t i = 0; i < ns; ++i) {
        std::vector<double> glp = grad_log_prob(state.s, masks[i]);
        double adv = losses[i] - delta_pre;
        for (size_t j = 0; j < n; ++j) g[j] += adv * glp[j];
    }
    double inv_ns = 1.0 / static_cast<double>(ns);
    std::vector<double> z(n);
    for (size_t j = 0; j < n; ++j) z[j] = state.s[j] - cfg.learning_rate * g[j] * inv_ns;
    state.s = project(z, budget);

    double loss_sum = 0.0;
    for (double L : losses) loss_sum += L;
    double T = static_cast<double>(cfg.baseline_window);
    state.delta = (T - 1.0) / T * state.delta + loss_sum / (static_cast<double>(ns) * T);
    state.step += 1;

    StepRecord rec;
    rec.step = state.step;
    rec.mean_loss = loss_sum * inv_ns;
    rec.delta = state.delta;
    rec.sum_s = 0.0;
    rec.min_s = 1.0;
    rec.max_s = 0.0;
    for (double v : state.s) {
        rec.sum_s += v;
        rec.min_s = std::min(rec.min_s, v);
        rec.max_s = std::max(rec.max_s, v);
    }
    return rec;
}

RunResult optimize(const BernoulliParams& init_s, const std::vector<StageSpec>& schedule,
                   const OptimizerConfig& cfg, const GranularityMap& gran,
                   const std::function<LossEvaluator(int64_t step)>& make_evaluator) {
    cfg.validate();
    check_params(init_s);
    if (init_s.size() != gran.unit_count()) fail_config("init scores length does not match unit count");
    if (schedule.empty()) fail_config("empty schedule");

    RunResult res;
    res.state.s = init_s;
    res.state.run_seed = cfg.seed;

    for (size_t stage = 0; stage < schedule.size(); ++stage) {
        Budget budget = make_budget(schedule[stage].rho, cfg.budget_mode, gran);
        res.state.s = project(res.state.s, budget);
        if (!cfg.carry_baseline && stage > 0) {
            res.state.delta = 0.0;
            res.state.delta_warmed = false;
        }
        for (int64_t k = 0; k < schedule[stage].steps; ++k) {
            LossEvaluator ev = make_evaluator(res.state.step);
            res.log.push_back(optimizer_step(res.state, ev, cfg, budget));
        }
    }
    res.s = res.state.s;
    return res;
}

std::vector<StageSpec> progressive_schedule(double start_rho, double end_rho, double step_delta,
                                            int64_t steps_per_stage) {
    if (!(start_rho > end_rho)) fail_config("progressive schedule requires start_rho > end_rho");
    if (!(step_delta > 0.0)) fail_config("progressive step must be > 0");
    if (steps_per_stage < 1) fail_config("steps_per_stage must be >= 1");
    std::vector<StageSpec> stages;
    int64_t n_stages = static_cast<int64_t>(std::llround((start_rho - end_rho) / step_delta)) + 1;
    for (int64_t k = 0; k < n_stages; ++k) {
        double rho = start_rho - static_cast<double>(k) * step_delta;
        rho = std::max(rho, end_rho);
        stages.push_back({rho, steps_per_stage});
    }
    return stages;
}

std::vector<StageSpec> fixed_schedule(double rho, int64_t steps) { return {{rho, steps}}; }

}  // namespace maskgrad
