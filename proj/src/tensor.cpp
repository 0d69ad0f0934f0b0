#include "maskgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace maskgrad {

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(t.numel()), 0.0f);
    t.check_invariants();
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    Tensor t;
    t.shape = std::move(new_shape);
    if (t.numel() != numel()) fail_config("reshape changes element count");
    t.data = data;
    return t;
}

void Tensor::check_invariants() const {
    if (shape.empty()) fail_config("tensor must have at least one extent");
    for (int64_t e : shape)
        if (e <= 0) fail_config("tensor extents must be positive");
    if (static_cast<int64_t>(data.size()) != numel()) fail_config("tensor data length does not match shape");
}

namespace {

// Inner kernel: c[0..n) += a_ik * b_row[0..n). The j-loop vectorizes to FMA.
inline void axpy(float* c, float a, const float* b, int64_t n) {
    for (int64_t j = 0; j < n; ++j) c[j] += a * b[j];
}

}  // namespace

// Row-panel kernel: 4 output rows share one sweep of b, which keeps b rows in
// cache and gives the compiler independent accumulator streams. Accumulation
// order over k is identical for every row count, so a row's result does not
// depend on which other rows are in the call.
void matmul_into(float* c, const float* a, const float* b, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, static_cast<size_t>(m) * n * sizeof(float));
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const float* a0 = a + i * k;
        const float* a1 = a0 + k;
        const float* a2 = a1 + k;
        const float* a3 = a2 + k;
        float* c0 = c + i * n;
        float* c1 = c0 + n;
        float* c2 = c1 + n;
        float* c3 = c2 + n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const float* brow = b + kk * n;
            float v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
            for (int64_t j = 0; j < n; ++j) {
                float bj = brow[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) axpy(crow, arow[kk], b + kk * n, n);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) fail_config("matmul expects rank-2 tensors");
    if (a.shape[1] != b.shape[0])
        fail_config("matmul inner extents differ: " + std::to_string(a.shape[1]) + " vs " +
                    std::to_string(b.shape[0]));
    Tensor c = Tensor::zeros({a.shape[0], b.shape[1]});
    matmul_into(c.data.data(), a.data.data(), b.data.data(), a.shape[0], a.shape[1], b.shape[1]);
    return c;
}

void softmax_row_inplace(float* row, int64_t n) {
    float mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    if (!std::isfinite(mx)) fail_numeric("softmax over non-finite row");
    float sum = 0.0f;
    for (int64_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    float inv = 1.0f / sum;
    for (int64_t j = 0; j < n; ++j) row[j] *= inv;
}

Tensor softmax_rows(const Tensor& a) {
    Tensor out = a;
    int64_t n = out.last_extent();
    for (int64_t r = 0; r < out.rows(); ++r) softmax_row_inplace(out.row(r), n);
    return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps) {
    int64_t d = x.last_extent();
    if (gain.numel() != d) fail_config("rmsnorm gain length does not match trailing extent");
    Tensor out = x;
    for (int64_t r = 0; r < out.rows(); ++r) {
        float* row = out.row(r);
        double ms = 0.0;
        for (int64_t j = 0; j < d; ++j) ms += static_cast<double>(row[j]) * row[j];
        float inv = 1.0f / std::sqrt(static_cast<float>(ms / d) + eps);
        for (int64_t j = 0; j < d; ++j) row[j] = row[j] * inv * gain.data[j];
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int32_t>& ids) {
    if (table.rank() != 2) fail_config("gather_rows expects a rank-2 table");
    int64_t d = table.shape[1];
    Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        int32_t id = ids[i];
        if (id < 0 || id >= table.shape[0]) fail_data("row id out of range: " + std::to_string(id));
        std::memcpy(out.row(static_cast<int64_t>(i)), table.row(id), d * sizeof(float));
    }
    return out;
}

void add_inplace(Tensor& x, const Tensor& y) {
    if (x.shape != y.shape) fail_config("add_inplace shape mismatch");
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

}  // namespace maskgrad
