#include "maskgrad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include "maskgrad/error.hpp"
#include "maskgrad/model.hpp"

namespace maskgrad {

namespace {

// Indices sorted by (-s, index): descending score, ties by lower index first.
std::vector<size_t> rank_order(const BernoulliParams& s, const std::vector<size_t>& idx) {
    std::vector<size_t> order = idx;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return s[a] > s[b]; });
    return order;
}

}  // namespace

MaskVector extract_mask(const BernoulliParams& s, double rho, ExtractMode mode,
                        const GranularityMap& gran) {
    if (!(rho > 0.0) || rho > 1.0) fail_config("retained fraction must be in (0, 1]");
    check_params(s);
    if (s.size() != gran.unit_count()) fail_config("score length does not match unit count");

    MaskVector m(s.size(), 0);
    if (mode == ExtractMode::global) {
        std::vector<size_t> idx(s.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<size_t> order = rank_order(s, idx);
        size_t keep = static_cast<size_t>(std::ceil(rho * static_cast<double>(s.size())));
        keep = std::min(keep, s.size());
        for (size_t i = 0; i < keep; ++i) m[order[i]] = 1;
        return m;
    }

    std::map<int64_t, std::vector<size_t>> groups;
    for (size_t u = 0; u < gran.units.size(); ++u)
        groups[GranularityMap::group_key(gran.units[u])].push_back(u);
    for (auto& [key, idx] : groups) {
        std::vector<size_t> order = rank_order(s, idx);
        size_t keep = static_cast<size_t>(std::ceil(rho * static_cast<double>(idx.size())));
        keep = std::min(keep, idx.size());
        for (size_t i = 0; i < keep; ++i) m[order[i]] = 1;
    }
    return m;
}

MaskVector extract_mask_param_weighted(const BernoulliParams& s, double rho,
                                       const GranularityMap& gran) {
    if (!(rho > 0.0) || rho > 1.0) fail_config("retained fraction must be in (0, 1]");
    check_params(s);
    if (s.size() != gran.unit_count()) fail_config("score length does not match unit count");

    std::vector<size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<size_t> order = rank_order(s, idx);

    double budget = rho * static_cast<double>(gran.total_prunable_params());
    MaskVector m(s.size(), 0);
    double used = 0.0;
    for (size_t u : order) {
        double pc = static_cast<double>(gran.units[u].param_count);
        if (used + pc <= budget + 1e-9) {
            m[u] = 1;
            used += pc;
        }
    }
    return m;
}

double perplexity(const Checkpoint& ckpt, const MaskVector* mask, const GranularityMap* gran,
                  const SegmentStore& corpus, int64_t batch_size) {
    if (corpus.count() < 1) fail_data("perplexity over empty corpus");
    if (corpus.seq_len < 2) fail_data("perplexity needs seq_len >= 2");

    double nll_sum = 0.0;
    int64_t positions = 0;
    for (int64_t base = 0; base < corpus.count(); base += batch_size) {
        int64_t take = std::min(batch_size, corpus.count() - base);
        std::vector<int64_t> idx(take);
        std::iota(idx.begin(), idx.end(), base);
        CalibrationBatch batch = make_batch(corpus, idx);
        MaskedForwardRequest req;
        req.tokens = &batch;
        req.mask = mask;
        req.granularity = gran;
        NllSum s = forward_nll(ckpt, req);
        nll_sum += s.sum;
        positions += s.positions;
    }
    return std::exp(nll_sum / static_cast<double>(positions));
}

PruneReport make_report(const Checkpoint& ckpt, const GranularityMap& gran, const MaskVector& mask,
                        double rho, const std::string& mode, double ppl_before, double ppl_after) {
    check_mask(mask, gran.unit_count());
    PruneReport r;
    r.mode = mode;
    r.rho = rho;
    r.ppl_before = ppl_before;
    r.ppl_after = ppl_after;
    r.units_total = static_cast<int64_t>(gran.unit_count());
    r.params_total = ckpt.param_count();
    r.params_prunable = gran.total_prunable_params();

    std::map<std::string, KindReport> kinds;
    std::map<int64_t, LayerReport> layers;
    for (int64_t l = 0; l < ckpt.arch.n_layers; ++l) {
        LayerReport lr;
        lr.layer = l;
        lr.heads_total = gran.has_heads ? ckpt.layer_dims[l].n_heads : 0;
        lr.channels_total = gran.has_channels ? ckpt.layer_dims[l].d_ff : 0;
        layers[l] = lr;
    }

    for (size_t u = 0; u < gran.units.size(); ++u) {
        const UnitDesc& ud = gran.units[u];
        KindReport& k = kinds[unit_kind_name(ud.kind)];
        k.kind = unit_kind_name(ud.kind);
        k.total += 1;
        LayerReport& lr = layers[ud.layer];
        bool kept = mask[u] != 0;
        if (kept) {
            k.retained += 1;
            r.units_retained += 1;
            r.params_retained_prunable += ud.param_count;
        }
        switch (ud.kind) {
            case UnitKind::head: lr.heads_retained += kept ? 1 : 0; break;
            case UnitKind::mlp_channel: lr.channels_retained += kept ? 1 : 0; break;
            case UnitKind::layer: lr.layer_retained = kept ? 1 : 0; break;
        }
    }
    for (auto& [name, k] : kinds) r.kinds.push_back(k);
    for (auto& [l, lr] : layers) r.layers.push_back(lr);

    int64_t unprunable = r.params_total - r.params_prunable;
    r.retained_param_fraction =
        static_cast<double>(unprunable + r.params_retained_prunable) / static_cast<double>(r.params_total);
    return r;
}

std::string report_to_json(const PruneReport& r) {
    nlohmann::json j;
    j["mode"] = r.mode;
    j["retained_fraction"] = r.rho;
    j["units"] = {{"total", r.units_total}, {"retained", r.units_retained}};
    j["params"] = {{"total", r.params_total},
                   {"prunable", r.params_prunable},
                   {"retained_prunable", r.params_retained_prunable},
                   {"retained_fraction_of_model", r.retained_param_fraction}};
    j["perplexity"] = {{"before", r.ppl_before}, {"after", r.ppl_after}};
    j["kinds"] = nlohmann::json::array();
    for (const KindReport& k : r.kinds)
        j["kinds"].push_back({{"kind", k.kind}, {"total", k.total}, {"retained", k.retained}});
    j["layers"] = nlohmann::json::array();
    for (const LayerReport& l : r.layers)
        j["layers"].push_back({{"layer", l.layer},
                               {"heads_total", l.heads_total},
                               {"heads_retained", l.heads_retained},
                               {"channels_total", l.channels_total},
                               {"channels_retained", l.channels_retained},
                               {"layer_retained", l.layer_retained}});
    return j.dump(2);
}

std::string report_to_csv(const PruneReport& r) {
    std::ostringstream out;
    out << "layer,kind,total,retained,retained_fraction\n";
    for (const LayerReport& l : r.layers) {
        if (l.heads_total > 0)
            out << l.layer << ",head," << l.heads_total << "," << l.heads_retained << ","
                << static_cast<double>(l.heads_retained) / static_cast<double>(l.heads_total) << "\n";
        if (l.channels_total > 0)
            out << l.layer << ",mlp_channel," << l.channels_total << "," << l.channels_retained << ","
                << static_cast<double>(l.channels_retained) / static_cast<double>(l.channels_total) << "\n";
    }
    return out.str();
}

}  // namespace maskgrad
