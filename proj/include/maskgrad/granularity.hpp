#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgrad/error.hpp"

namespace maskgrad {

struct Checkpoint;

enum class UnitKind : uint8_t { head = 0, mlp_channel = 1, layer = 2 };

const char* unit_kind_name(UnitKind k);
UnitKind unit_kind_from_name(const std::string& name);

struct UnitDesc {
    UnitKind kind;
    int32_t layer;
    int32_t index;        // within-layer index; 0 for layer units
    int64_t param_count;  // parameters controlled by this unit
};

// Bijection between mask indices and model structures. Unit order: all head
// units (layer-major), then all MLP-channel units (layer-major), then layer
// units. Layer granularity is exclusive with head/channel granularity so the
// per-unit parameter counts partition the prunable parameters.
struct GranularityMap {
    std::vector<UnitDesc> units;
    std::vector<int64_t> head_offset;     // per layer: first head unit index, -1 if absent
    std::vector<int64_t> channel_offset;  // per layer: first channel unit index, -1 if absent
    std::vector<int64_t> layer_unit;      // per layer: layer unit index, -1 if absent
    bool has_heads = false;
    bool has_channels = false;
    bool has_layers = false;

    size_t unit_count() const { return units.size(); }
    int64_t head_unit(int64_t layer, int64_t h) const { return head_offset[layer] + h; }
    int64_t channel_unit(int64_t layer, int64_t c) const { return channel_offset[layer] + c; }

    int64_t total_prunable_params() const;

    // Stable key identifying the (layer, kind) group, for local extraction.
    static int64_t group_key(const UnitDesc& u) {
        return static_cast<int64_t>(u.layer) * 4 + static_cast<int64_t>(u.kind);
    }

    // Per-layer dimensions come from the checkpoint, so compacted models (with
    // heterogeneous head/channel counts) index correctly.
    static GranularityMap build(const Checkpoint& ckpt, bool heads, bool channels, bool layers);
    static GranularityMap build(const Checkpoint& ckpt, const std::vector<std::string>& kinds);
};

}  // namespace maskgrad
