#include "maskgrad/compaction.hpp"

#include <cstring>

#include "maskgrad/error.hpp"

namespace maskgrad {

namespace {

// Columns of src (rank-2) whose head/channel index is in `keep`, where a head
// spans `span` consecutive columns.
Tensor select_cols(const Tensor& src, const std::vector<int64_t>& keep, int64_t span) {
    int64_t rows = src.shape[0];
    int64_t out_cols = static_cast<int64_t>(keep.size()) * span;
    Tensor out = Tensor::zeros({rows, out_cols});
    for (int64_t r = 0; r < rows; ++r) {
        const float* srow = src.row(r);
        float* drow = out.row(r);
        for (size_t i = 0; i < keep.size(); ++i)
            std::memcpy(drow + static_cast<int64_t>(i) * span, srow + keep[i] * span,
                        span * sizeof(float));
    }
    return out;
}

Tensor select_rows(const Tensor& src, const std::vector<int64_t>& keep, int64_t span) {
    int64_t cols = src.shape[1];
    Tensor out = Tensor::zeros({static_cast<int64_t>(keep.size()) * span, cols});
    for (size_t i = 0; i < keep.size(); ++i)
        std::memcpy(out.row(static_cast<int64_t>(i) * span), src.row(keep[i] * span),
                    static_cast<size_t>(span) * cols * sizeof(float));
    return out;
}

}  // namespace

int64_t retained_prunable_params(const GranularityMap& gran, const MaskVector& mask) {
    check_mask(mask, gran.unit_count());
    int64_t n = 0;
    for (size_t u = 0; u < gran.units.size(); ++u)
        if (mask[u]) n += gran.units[u].param_count;
    return n;
}

Checkpoint compact(const Checkpoint& ckpt, const MaskVector& mask, const GranularityMap& gran) {
    check_mask(mask, gran.unit_count());
    const ArchConfig& a = ckpt.arch;

    auto layer_on = [&](int64_t l) {
        return !gran.has_layers || mask[gran.layer_unit[l]] != 0;
    };

    Checkpoint out;
    out.arch = a;

    if (gran.has_layers) {
        int64_t kept = 0;
        for (int64_t l = 0; l < a.n_layers; ++l) kept += layer_on(l) ? 1 : 0;
        if (kept == 0) fail_config("compaction would remove every layer");
        out.arch.n_layers = kept;
    }

    out.tensors["tok_emb"] = ckpt.at("tok_emb");
    out.tensors["lm_head"] = ckpt.at("lm_head");
    out.tensors["norm_final"] = ckpt.at("norm_final");

    int64_t out_l = 0;
    for (int64_t l = 0; l < a.n_layers; ++l) {
        if (!layer_on(l)) continue;
        const LayerDims& ld = ckpt.layer_dims[l];

        std::vector<int64_t> keep_heads, keep_channels;
        for (int64_t h = 0; h < ld.n_heads; ++h)
            if (!gran.has_heads || mask[gran.head_unit(l, h)]) keep_heads.push_back(h);
        for (int64_t c = 0; c < ld.d_ff; ++c)
            if (!gran.has_channels || mask[gran.channel_unit(l, c)]) keep_channels.push_back(c);

        LayerDims nd;
        nd.n_heads = static_cast<int64_t>(keep_heads.size());
        nd.d_ff = static_cast<int64_t>(keep_channels.size());
        out.layer_dims.push_back(nd);

        if (nd.n_heads > 0) {
            out.tensors[Checkpoint::layer_tensor(out_l, "wq")] =
                select_cols(ckpt.at(Checkpoint::layer_tensor(l, "wq")), keep_heads, a.d_head);
            out.tensors[Checkpoint::layer_tensor(out_l, "wk")] =
                select_cols(ckpt.at(Checkpoint::layer_tensor(l, "wk")), keep_heads, a.d_head);
            out.tensors[Checkpoint::layer_tensor(out_l, "wv")] =
                select_cols(ckpt.at(Checkpoint::layer_tensor(l, "wv")), keep_heads, a.d_head);
            out.tensors[Checkpoint::layer_tensor(out_l, "wo")] =
                select_rows(ckpt.at(Checkpoint::layer_tensor(l, "wo")), keep_heads, a.d_head);
        }
        if (nd.d_ff > 0) {
            out.tensors[Checkpoint::layer_tensor(out_l, "w_up")] =
                select_cols(ckpt.at(Checkpoint::layer_tensor(l, "w_up")), keep_channels, 1);
            out.tensors[Checkpoint::layer_tensor(out_l, "w_gate")] =
                select_cols(ckpt.at(Checkpoint::layer_tensor(l, "w_gate")), keep_channels, 1);
            out.tensors[Checkpoint::layer_tensor(out_l, "w_down")] =
                select_rows(ckpt.at(Checkpoint::layer_tensor(l, "w_down")), keep_channels, 1);
        }
        out.tensors[Checkpoint::layer_tensor(out_l, "norm_attn")] =
            ckpt.at(Checkpoint::layer_tensor(l, "norm_attn"));
        out.tensors[Checkpoint::layer_tensor(out_l, "norm_mlp")] =
            ckpt.at(Checkpoint::layer_tensor(l, "norm_mlp"));
        out_l += 1;
    }

    out.validate();
    return out;
}

}  // namespace maskgrad
