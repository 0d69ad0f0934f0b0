#include "maskgrad/granularity.hpp"

#include <algorithm>

#include "maskgrad/checkpoint.hpp"

namespace maskgrad {

const char* unit_kind_name(UnitKind k) {
    switch (k) {
        case UnitKind::head: return "head";
        case UnitKind::mlp_channel: return "mlp_channel";
        case UnitKind::layer: return "layer";
    }
    return "?";
}

UnitKind unit_kind_from_name(const std::string& name) {
    if (name == "head") return UnitKind::head;
    if (name == "mlp_channel") return UnitKind::mlp_channel;
    if (name == "layer") return UnitKind::layer;
    fail_config("unknown granularity kind: " + name);
}

int64_t GranularityMap::total_prunable_params() const {
    int64_t n = 0;
    for (const UnitDesc& u : units) n += u.param_count;
    return n;
}

GranularityMap GranularityMap::build(const Checkpoint& ckpt, bool heads, bool channels, bool layers) {
    if (!heads && !channels && !layers) fail_config("at least one granularity kind required");
    if (layers && (heads || channels))
        fail_config("layer granularity is exclusive with head/channel granularity");

    const ArchConfig& a = ckpt.arch;
    GranularityMap g;
    g.has_heads = heads;
    g.has_channels = channels;
    g.has_layers = layers;
    g.head_offset.assign(a.n_layers, -1);
    g.channel_offset.assign(a.n_layers, -1);
    g.layer_unit.assign(a.n_layers, -1);

    if (heads) {
        for (int64_t l = 0; l < a.n_layers; ++l) {
            g.head_offset[l] = static_cast<int64_t>(g.units.size());
            // q/k/v column block + o row block of one head.
            int64_t pc = 4 * a.d_model * a.d_head;
            for (int64_t h = 0; h < ckpt.layer_dims[l].n_heads; ++h)
                g.units.push_back({UnitKind::head, static_cast<int32_t>(l), static_cast<int32_t>(h), pc});
        }
    }
    if (channels) {
        for (int64_t l = 0; l < a.n_layers; ++l) {
            g.channel_offset[l] = static_cast<int64_t>(g.units.size());
            // up/gate column + down row of one hidden channel.
            int64_t pc = 3 * a.d_model;
            for (int64_t c = 0; c < ckpt.layer_dims[l].d_ff; ++c)
                g.units.push_back({UnitKind::mlp_channel, static_cast<int32_t>(l), static_cast<int32_t>(c), pc});
        }
    }
    if (layers) {
        for (int64_t l = 0; l < a.n_layers; ++l) {
            g.layer_unit[l] = static_cast<int64_t>(g.units.size());
            const LayerDims& ld = ckpt.layer_dims[l];
            // Whole block: attention + MLP + the block's two norm gains.
            int64_t pc = 4 * a.d_model * a.d_head * ld.n_heads + 3 * a.d_model * ld.d_ff + 2 * a.d_model;
            g.units.push_back({UnitKind::layer, static_cast<int32_t>(l), 0, pc});
        }
    }
    return g;
}

GranularityMap GranularityMap::build(const Checkpoint& ckpt, const std::vector<std::string>& kinds) {
    bool heads = false, channels = false, layers = false;
    for (const std::string& k : kinds) {
        switch (unit_kind_from_name(k)) {
            case UnitKind::head: heads = true; break;
            case UnitKind::mlp_channel: channels = true; break;
            case UnitKind::layer: layers = true; break;
        }
    }
    return build(ckpt, heads, channels, layers);
}

}  // namespace maskgrad
