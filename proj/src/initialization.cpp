#include "maskgrad/initialization.hpp"

#include <algorithm>
#include <cmath>

#include "maskgrad/error.hpp"
#include "maskgrad/model.hpp"
#include "maskgrad/projection.hpp"

namespace maskgrad {

BernoulliParams sigmoid_norm(const MetricScores& scores) {
    const std::vector<double>& x = scores.x;
    if (x.empty()) fail_config("sigmoid_norm on empty scores");
    for (double v : x)
        if (!std::isfinite(v)) fail_numeric("sigmoid_norm input has non-finite component");

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());

    BernoulliParams s(x.size());
    if (var == 0.0) {
        std::fill(s.begin(), s.end(), 0.5);
        return s;
    }
    double inv_std = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < x.size(); ++i) {
        double z = (x[i] - mean) * inv_std;
        s[i] = 1.0 / (1.0 + std::exp(-z));
    }
    return s;
}

BernoulliParams score_const(const MaskVector& decisions, double c) {
    if (!(c > 0.5) || !(c < 1.0)) fail_config("score_const constant must be in (0.5, 1)");
    check_mask(decisions, decisions.size());
    BernoulliParams s(decisions.size());
    for (size_t i = 0; i < decisions.size(); ++i) s[i] = decisions[i] ? c : 1.0 - c;
    return s;
}

BernoulliParams random_init(size_t unit_count, double rho, uint64_t seed) {
    if (!(rho > 0.0) || rho > 1.0) fail_config("retained fraction must be in (0, 1]");
    if (unit_count == 0) fail_config("random_init on zero units");
    Rng rng = Rng::stream(seed, 0x1417u);
    BernoulliParams s(unit_count);
    double sum = 0.0;
    for (double& v : s) {
        v = rng.uniform01();
        sum += v;
    }
    double target = rho * static_cast<double>(unit_count);
    double scale = target / sum;
    for (double& v : s) v *= scale;
    return project(s, target);
}

MetricScores builtin_metric(const Checkpoint& ckpt, const SegmentStore& corpus_sample,
                            const GranularityMap& gran, int64_t n_batches, int64_t batch_size) {
    if (corpus_sample.count() < 1) fail_data("builtin metric needs at least one segment");

    ActivationStats stats = ActivationStats::zeros(ckpt);
    BatchIterator it(corpus_sample, batch_size, /*seed=*/0, /*shuffle=*/false);
    CalibrationBatch batch;
    int64_t used = 0;
    while (used < n_batches && it.next(batch)) {
        accumulate_activation_stats(ckpt, batch, stats);
        used += 1;
    }

    const ArchConfig& a = ckpt.arch;
    int64_t rows = std::max<int64_t>(stats.rows, 1);

    // Row sums of |W| for the weight consuming each tracked activation.
    std::vector<std::vector<double>> wo_rowsum(a.n_layers), down_rowsum(a.n_layers);
    for (int64_t l = 0; l < a.n_layers; ++l) {
        const LayerDims& ld = ckpt.layer_dims[l];
        if (ld.n_heads > 0) {
            const Tensor& wo = ckpt.at(Checkpoint::layer_tensor(l, "wo"));
            wo_rowsum[l].assign(ld.n_heads * a.d_head, 0.0);
            for (int64_t k = 0; k < wo.shape[0]; ++k) {
                double srow = 0.0;
                const float* row = wo.row(k);
                for (int64_t j = 0; j < wo.shape[1]; ++j) srow += std::abs(static_cast<double>(row[j]));
                wo_rowsum[l][k] = srow;
            }
        }
        if (ld.d_ff > 0) {
            const Tensor& down = ckpt.at(Checkpoint::layer_tensor(l, "w_down"));
            down_rowsum[l].assign(ld.d_ff, 0.0);
            for (int64_t k = 0; k < down.shape[0]; ++k) {
                double srow = 0.0;
                const float* row = down.row(k);
                for (int64_t j = 0; j < down.shape[1]; ++j) srow += std::abs(static_cast<double>(row[j]));
                down_rowsum[l][k] = srow;
            }
        }
    }

    auto head_score = [&](int64_t l, int64_t h) {
        double sc = 0.0;
        for (int64_t e = 0; e < a.d_head; ++e) {
            int64_t k = h * a.d_head + e;
            double rms = std::sqrt(stats.att_sq[l][k] / static_cast<double>(rows));
            sc += rms * wo_rowsum[l][k];
        }
        return sc;
    };
    auto channel_score = [&](int64_t l, int64_t c) {
        double rms = std::sqrt(stats.mlp_sq[l][c] / static_cast<double>(rows));
        return rms * down_rowsum[l][c];
    };

    MetricScores out;
    out.source = "builtin_weight_act_rms";
    out.x.resize(gran.unit_count());
    for (size_t u = 0; u < gran.units.size(); ++u) {
        const UnitDesc& ud = gran.units[u];
        switch (ud.kind) {
            case UnitKind::head:
                out.x[u] = head_score(ud.layer, ud.index);
                break;
            case UnitKind::mlp_channel:
                out.x[u] = channel_score(ud.layer, ud.index);
                break;
            case UnitKind::layer: {
                double sc = 0.0;
                for (int64_t h = 0; h < ckpt.layer_dims[ud.layer].n_heads; ++h)
                    sc += head_score(ud.layer, h);
                for (int64_t c = 0; c < ckpt.layer_dims[ud.layer].d_ff; ++c)
                    sc += channel_score(ud.layer, c);
                out.x[u] = sc;
                break;
            }
        }
    }
    return out;
}

}  // namespace maskgrad
