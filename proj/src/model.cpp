#include "maskgrad/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "maskgrad/error.hpp"

namespace maskgrad {

namespace {

constexpr double kRopeBase = 10000.0;

// cos/sin tables for half-split rotary embeddings: pair (j, j + d_head/2) of
// every head rotates by angle t * base^(-2j/d_head). Frequencies depend only
// on the within-head offset j, never on the head index, so slicing whole
// heads preserves phases.
struct RopeTable {
    int64_t half;
    std::vector<float> cos_t;  // [T, half]
    std::vector<float> sin_t;

    RopeTable(int64_t seq_len, int64_t d_head) : half(d_head / 2) {
        cos_t.resize(seq_len * half);
        sin_t.resize(seq_len * half);
        for (int64_t t = 0; t < seq_len; ++t) {
            for (int64_t j = 0; j < half; ++j) {
                double inv_freq = std::pow(kRopeBase, -2.0 * static_cast<double>(j) / static_cast<double>(2 * half));
                double angle = static_cast<double>(t) * inv_freq;
                cos_t[t * half + j] = static_cast<float>(std::cos(angle));
                sin_t[t * half + j] = static_cast<float>(std::sin(angle));
            }
        }
    }

    // Rotates each head's (j, j+half) pairs in a [n_heads * d_head] row.
    void apply(float* row, int64_t n_heads, int64_t t) const {
        const float* ct = cos_t.data() + t * half;
        const float* st = sin_t.data() + t * half;
        for (int64_t h = 0; h < n_heads; ++h) {
            float* hd = row + h * 2 * half;
            for (int64_t j = 0; j < half; ++j) {
                float a = hd[j];
                float b = hd[j + half];
                hd[j] = a * ct[j] - b * st[j];
                hd[j + half] = a * st[j] + b * ct[j];
            }
        }
    }
};

struct MaskView {
    const MaskVector* mask = nullptr;
    const GranularityMap* gran = nullptr;

    bool layer_on(int64_t l) const {
        if (!mask || !gran->has_layers) return true;
        return (*mask)[gran->layer_unit[l]] != 0;
    }
    bool head_on(int64_t l, int64_t h) const {
        if (!mask || !gran->has_heads) return true;
        return (*mask)[gran->head_unit(l, h)] != 0;
    }
    bool channel_on(int64_t l, int64_t c) const {
        if (!mask || !gran->has_channels) return true;
        return (*mask)[gran->channel_unit(l, c)] != 0;
    }
};

void validate_request(const Checkpoint& ckpt, const MaskedForwardRequest& req) {
    if (!req.tokens) fail_config("forward request has no tokens");
    if (req.tokens->seq_len > ckpt.arch.max_seq_len) fail_data("segment length exceeds max_seq_len");
    if (req.tokens->seq_len < 1 || req.tokens->batch < 1) fail_data("empty forward batch");
    for (int32_t id : req.tokens->ids)
        if (id < 0 || id >= ckpt.arch.vocab_size) fail_data("token id out of range");
    if (req.mask) {
        if (!req.granularity) fail_config("mask supplied without granularity map");
        check_mask(*req.mask, req.granularity->unit_count());
    }
}

// Causal single-head attention over contiguous [T, d_head] blocks; softmax
// over the causal prefix only (exactly equivalent to -inf masking).
void attend_head(const float* q, const float* k, const float* v, float* ctx, int64_t seq,
                 int64_t d_head, float scale, std::vector<float>& score_buf) {
    score_buf.resize(seq);
    for (int64_t i = 0; i < seq; ++i) {
        const float* qi = q + i * d_head;
        float mx = -1e30f;
        for (int64_t j = 0; j <= i; ++j) {
            const float* kj = k + j * d_head;
            float dot = 0.0f;
            for (int64_t e = 0; e < d_head; ++e) dot += qi[e] * kj[e];
            score_buf[j] = dot * scale;
            mx = std::max(mx, score_buf[j]);
        }
        float sum = 0.0f;
        for (int64_t j = 0; j <= i; ++j) {
            score_buf[j] = std::exp(score_buf[j] - mx);
            sum += score_buf[j];
        }
        float inv = 1.0f / sum;
        float* ci = ctx + i * d_head;
        std::memset(ci, 0, d_head * sizeof(float));
        for (int64_t j = 0; j <= i; ++j) {
            float p = score_buf[j] * inv;
            const float* vj = v + j * d_head;
            for (int64_t e = 0; e < d_head; ++e) ci[e] += p * vj[e];
        }
    }
}

Tensor forward_impl(const Checkpoint& ckpt, const MaskedForwardRequest& req, ActivationStats* stats) {
    validate_request(ckpt, req);
    const ArchConfig& a = ckpt.arch;
    const CalibrationBatch& tok = *req.tokens;
    MaskView mv{req.mask, req.granularity};
    int64_t B = tok.batch, T = tok.seq_len, dh = a.d_head;

    Tensor x = gather_rows(ckpt.at("tok_emb"), tok.ids);  // [B*T, d]
    RopeTable rope(T, dh);

    std::vector<float> qh(T * dh), kh(T * dh), vh(T * dh), ch(T * dh), score_buf;

    for (int64_t l = 0; l < a.n_layers; ++l) {
        if (!mv.layer_on(l)) continue;
        const LayerDims& ld = ckpt.layer_dims[l];

        if (ld.n_heads > 0) {
            int64_t da = ld.n_heads * dh;
            Tensor h = rmsnorm(x, ckpt.at(Checkpoint::layer_tensor(l, "norm_attn")), a.rms_eps);
            Tensor q = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wq")));
            Tensor k = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wk")));
            Tensor v = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wv")));
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t) {
                    rope.apply(q.row(b * T + t), ld.n_heads, t);
                    rope.apply(k.row(b * T + t), ld.n_heads, t);
                }

            Tensor concat = Tensor::zeros({B * T, da});
            float scale = 1.0f / std::sqrt(static_cast<float>(dh));
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t hidx = 0; hidx < ld.n_heads; ++hidx) {
                    if (!mv.head_on(l, hidx)) continue;  // skipped == zero contribution
                    for (int64_t t = 0; t < T; ++t) {
                        std::memcpy(&qh[t * dh], q.row(b * T + t) + hidx * dh, dh * sizeof(float));
                        std::memcpy(&kh[t * dh], k.row(b * T + t) + hidx * dh, dh * sizeof(float));
                        std::memcpy(&vh[t * dh], v.row(b * T + t) + hidx * dh, dh * sizeof(float));
                    }
                    attend_head(qh.data(), kh.data(), vh.data(), ch.data(), T, dh, scale, score_buf);
                    for (int64_t t = 0; t < T; ++t)
                        std::memcpy(concat.row(b * T + t) + hidx * dh, &ch[t * dh], dh * sizeof(float));
                }
            }
            if (stats) {
                auto& acc = stats->att_sq[l];
                for (int64_t r = 0; r < B * T; ++r) {
                    const float* row = concat.row(r);
                    for (int64_t j = 0; j < da; ++j) acc[j] += static_cast<double>(row[j]) * row[j];
                }
            }
            Tensor attn_out = matmul(concat, ckpt.at(Checkpoint::layer_tensor(l, "wo")));
            add_inplace(x, attn_out);
        }

        if (ld.d_ff > 0) {
            Tensor h = rmsnorm(x, ckpt.at(Checkpoint::layer_tensor(l, "norm_mlp")), a.rms_eps);
            Tensor up = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "w_up")));
            Tensor gate = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "w_gate")));
            std::vector<float> chan(ld.d_ff, 1.0f);
            if (req.mask && req.granularity->has_channels)
                for (int64_t c = 0; c < ld.d_ff; ++c) chan[c] = mv.channel_on(l, c) ? 1.0f : 0.0f;
            for (int64_t r = 0; r < B * T; ++r) {
                float* ur = up.row(r);
                const float* gr = gate.row(r);
                for (int64_t c = 0; c < ld.d_ff; ++c) ur[c] = ur[c] * silu(gr[c]) * chan[c];
            }
            if (stats) {
                auto& acc = stats->mlp_sq[l];
                for (int64_t r = 0; r < B * T; ++r) {
                    const float* row = up.row(r);
                    for (int64_t c = 0; c < ld.d_ff; ++c) acc[c] += static_cast<double>(row[c]) * row[c];
                }
            }
            Tensor mlp_out = matmul(up, ckpt.at(Checkpoint::layer_tensor(l, "w_down")));
            add_inplace(x, mlp_out);
        }
    }

    Tensor y = rmsnorm(x, ckpt.at("norm_final"), a.rms_eps);
    Tensor logits = matmul(y, ckpt.at("lm_head"));
    if (stats) stats->rows += B * T;
    return logits.reshaped({B, T, a.vocab_size});
}

// -log p(target) for one logits row, max-subtracted, accumulated in double.
double row_nll(const float* logits, int64_t n, int32_t target) {
    float mx = logits[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
    if (!std::isfinite(mx)) fail_numeric("non-finite logits");
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(logits[j]) - mx);
    return std::log(sum) - (static_cast<double>(logits[target]) - mx);
}

}  // namespace

ActivationStats ActivationStats::zeros(const Checkpoint& ckpt) {
    ActivationStats s;
    s.att_sq.resize(ckpt.arch.n_layers);
    s.mlp_sq.resize(ckpt.arch.n_layers);
    for (int64_t l = 0; l < ckpt.arch.n_layers; ++l) {
        s.att_sq[l].assign(ckpt.layer_dims[l].n_heads * ckpt.arch.d_head, 0.0);
        s.mlp_sq[l].assign(ckpt.layer_dims[l].d_ff, 0.0);
    }
    return s;
}

Tensor forward_logits(const Checkpoint& ckpt, const MaskedForwardRequest& req) {
    return forward_impl(ckpt, req, nullptr);
}

NllSum forward_nll(const Checkpoint& ckpt, const MaskedForwardRequest& req) {
    Tensor logits = forward_impl(ckpt, req, nullptr);
    const CalibrationBatch& tok = *req.tokens;
    int64_t V = ckpt.arch.vocab_size;
    NllSum out;
    for (int64_t b = 0; b < tok.batch; ++b) {
        for (int64_t t = 0; t + 1 < tok.seq_len; ++t) {
            const float* row = logits.data.data() + (b * tok.seq_len + t) * V;
            out.sum += row_nll(row, V, tok.ids[b * tok.seq_len + t + 1]);
            out.positions += 1;
        }
    }
    return out;
}

double forward_loss(const Checkpoint& ckpt, const MaskedForwardRequest& req) {
    NllSum s = forward_nll(ckpt, req);
    return s.sum / static_cast<double>(s.positions);
}

void accumulate_activation_stats(const Checkpoint& ckpt, const CalibrationBatch& tokens,
                                 ActivationStats& stats) {
    if (stats.att_sq.empty()) stats = ActivationStats::zeros(ckpt);
    MaskedForwardRequest req;
    req.tokens = &tokens;
    forward_impl(ckpt, req, &stats);
}

SegmentStore teacher_sample(const Checkpoint& ckpt, uint64_t seed, int64_t n_segments,
                            int64_t seq_len, double temperature) {
    if (!(temperature > 0.0)) fail_config("temperature must be > 0");
    const ArchConfig& a = ckpt.arch;
    if (seq_len > a.max_seq_len) fail_config("seq_len exceeds max_seq_len");

    SegmentStore store;
    store.vocab_size = a.vocab_size;
    store.seq_len = seq_len;
    store.ids.assign(static_cast<size_t>(n_segments) * seq_len, 0);

    int64_t dh = a.d_head;
    RopeTable rope(seq_len, dh);
    constexpr int64_t kGenChunk = 64;

    for (int64_t base = 0; base < n_segments; base += kGenChunk) {
        int64_t B = std::min(kGenChunk, n_segments - base);
        std::vector<Rng> streams;
        streams.reserve(B);
        for (int64_t b = 0; b < B; ++b)
            streams.push_back(Rng::stream(seed, 0x7EACull, static_cast<uint64_t>(base + b)));

        // Per-layer KV cache: [B, H_l, T, d_head], flat.
        std::vector<std::vector<float>> kcache(a.n_layers), vcache(a.n_layers);
        for (int64_t l = 0; l < a.n_layers; ++l) {
            size_t sz = static_cast<size_t>(B) * ckpt.layer_dims[l].n_heads * seq_len * dh;
            kcache[l].assign(sz, 0.0f);
            vcache[l].assign(sz, 0.0f);
        }
        auto cache_at = [&](std::vector<float>& cache, int64_t l, int64_t b, int64_t h, int64_t t) {
            int64_t H = ckpt.layer_dims[l].n_heads;
            return cache.data() + ((b * H + h) * seq_len + t) * dh;
        };

        std::vector<int32_t> cur(B);
        for (int64_t b = 0; b < B; ++b) {
            cur[b] = static_cast<int32_t>(streams[b].below(static_cast<uint64_t>(a.vocab_size)));
            store.ids[(base + b) * seq_len] = cur[b];
        }

        std::vector<float> probs(a.vocab_size);
        for (int64_t t = 0; t + 1 < seq_len; ++t) {
            Tensor x = gather_rows(ckpt.at("tok_emb"), cur);  // [B, d]
            for (int64_t l = 0; l < a.n_layers; ++l) {
                const LayerDims& ld = ckpt.layer_dims[l];
                if (ld.n_heads > 0) {
                    Tensor h = rmsnorm(x, ckpt.at(Checkpoint::layer_tensor(l, "norm_attn")), a.rms_eps);
                    Tensor q = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wq")));
                    Tensor k = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wk")));
                    Tensor v = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "wv")));
                    int64_t da = ld.n_heads * dh;
                    Tensor concat = Tensor::zeros({B, da});
                    float scale = 1.0f / std::sqrt(static_cast<float>(dh));
                    for (int64_t b = 0; b < B; ++b) {
                        rope.apply(q.row(b), ld.n_heads, t);
                        rope.apply(k.row(b), ld.n_heads, t);
                        for (int64_t hh = 0; hh < ld.n_heads; ++hh) {
                            std::memcpy(cache_at(kcache[l], l, b, hh, t), k.row(b) + hh * dh, dh * sizeof(float));
                            std::memcpy(cache_at(vcache[l], l, b, hh, t), v.row(b) + hh * dh, dh * sizeof(float));
                            const float* qv = q.row(b) + hh * dh;
                            const float* kbase = cache_at(kcache[l], l, b, hh, 0);
                            float mx = -1e30f;
                            std::vector<float> sc(t + 1);
                            for (int64_t j = 0; j <= t; ++j) {
                                const float* kj = kbase + j * dh;
                                float dot = 0.0f;
                                for (int64_t e = 0; e < dh; ++e) dot += qv[e] * kj[e];
                                sc[j] = dot * scale;
                                mx = std::max(mx, sc[j]);
                            }
                            float sum = 0.0f;
                            for (int64_t j = 0; j <= t; ++j) {
                                sc[j] = std::exp(sc[j] - mx);
                                sum += sc[j];
                            }
                            float inv = 1.0f / sum;
                            float* out = concat.row(b) + hh * dh;
                            const float* vbase = cache_at(vcache[l], l, b, hh, 0);
                            for (int64_t j = 0; j <= t; ++j) {
                                float p = sc[j] * inv;
                                const float* vj = vbase + j * dh;
                                for (int64_t e = 0; e < dh; ++e) out[e] += p * vj[e];
                            }
                        }
                    }
                    Tensor attn_out = matmul(concat, ckpt.at(Checkpoint::layer_tensor(l, "wo")));
                    add_inplace(x, attn_out);
                }
                if (ld.d_ff > 0) {
                    Tensor h = rmsnorm(x, ckpt.at(Checkpoint::layer_tensor(l, "norm_mlp")), a.rms_eps);
                    Tensor up = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "w_up")));
                    Tensor gate = matmul(h, ckpt.at(Checkpoint::layer_tensor(l, "w_gate")));
                    for (int64_t r = 0; r < B; ++r) {
                        float* ur = up.row(r);
                        const float* gr = gate.row(r);
                        for (int64_t c = 0; c < ld.d_ff; ++c) ur[c] = ur[c] * silu(gr[c]);
                    }
                    Tensor mlp_out = matmul(up, ckpt.at(Checkpoint::layer_tensor(l, "w_down")));
                    add_inplace(x, mlp_out);
                }
            }
            Tensor y = rmsnorm(x, ckpt.at("norm_final"), a.rms_eps);
            Tensor logits = matmul(y, ckpt.at("lm_head"));
            for (int64_t b = 0; b < B; ++b) {
                const float* row = logits.row(b);
                float inv_temp = static_cast<float>(1.0 / temperature);
                float mx = -1e30f;
                for (int64_t j = 0; j < a.vocab_size; ++j) mx = std::max(mx, row[j] * inv_temp);
                double sum = 0.0;
                for (int64_t j = 0; j < a.vocab_size; ++j) {
                    probs[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) * inv_temp - mx));
                    sum += probs[j];
                }
                // Linear CDF inversion in index order.
                double u = streams[b].uniform01() * sum;
                double acc = 0.0;
                int32_t pick = static_cast<int32_t>(a.vocab_size - 1);
                for (int64_t j = 0; j < a.vocab_size; ++j) {
                    acc += probs[j];
                    if (u < acc) {
                        pick = static_cast<int32_t>(j);
                        break;
                    }
                }
                cur[b] = pick;
                store.ids[(base + b) * seq_len + t + 1] = pick;
            }
        }
    }
    store.validate();
    return store;
}

}  // namespace maskgrad
