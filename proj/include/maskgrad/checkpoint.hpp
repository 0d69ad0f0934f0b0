#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maskgrad/rng.hpp"
#include "maskgrad/tensor.hpp"

namespace maskgrad {

struct ArchConfig {
    int64_t vocab_size = 0;
    int64_t d_model = 0;
    int64_t n_layers = 0;
    int64_t n_heads = 0;
    int64_t d_head = 0;  // = d_model / n_heads for uncompacted models
    int64_t d_ff = 0;
    int64_t max_seq_len = 0;
    float rms_eps = 1e-5f;

    void validate() const;
    // Stable content hash (FNV-1a over the canonical field serialization),
    // used by score-file sidecars to detect checkpoint/score mismatches.
    std::string hash() const;
};

// Actual per-layer widths. Equal to the arch defaults for freshly built
// models; compacted checkpoints may have fewer heads/channels per layer or a
// fully removed attention/MLP sub-block (n_heads or d_ff of 0).
struct LayerDims {
    int64_t n_heads = 0;
    int64_t d_ff = 0;
};

// Canonical tensor names:
//   tok_emb [vocab, d_model], lm_head [d_model, vocab], norm_final [d_model]
//   layers.<i>.{wq,wk,wv} [d_model, H_i*d_head], layers.<i>.wo [H_i*d_head, d_model]
//   layers.<i>.{w_up,w_gate} [d_model, F_i], layers.<i>.w_down [F_i, d_model]
//   layers.<i>.{norm_attn,norm_mlp} [d_model]
// A layer with H_i = 0 omits wq/wk/wv/wo; F_i = 0 omits w_up/w_gate/w_down.
// Norm gains are always present (width pruning never removes them).
struct Checkpoint {
    ArchConfig arch;
    std::vector<LayerDims> layer_dims;
    std::map<std::string, Tensor> tensors;

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    int64_t param_count() const;
    void validate() const;

    static std::string layer_tensor(int64_t layer, const std::string& field);
};

// Seeded Gaussian weights scaled for a well-conditioned forward pass; the
// standard fixture builder for tests and tools.
Checkpoint random_checkpoint(const ArchConfig& arch, uint64_t seed);

// Container format: 8-byte magic "MGPRUNE1", u64 LE header length, UTF-8 JSON
// header (arch + per-layer dims + tensor directory with name/shape/offset),
// then raw little-endian f32 payloads packed in directory order. Offsets are
// relative to the end of the header. Round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace maskgrad
