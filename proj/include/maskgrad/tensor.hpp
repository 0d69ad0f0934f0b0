#pragma once

#include <cstdint>
#include <vector>

#include "maskgrad/error.hpp"

namespace maskgrad {

// Dense row-major f32 tensor. No views or strides; copies are fine at the
// scales this project runs at.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> shp, std::vector<float> d) : shape(std::move(shp)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, float value);

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t e : shape) n *= e;
        return n;
    }
    int64_t extent(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    // Leading extent of the 2-D interpretation [rows, row_size].
    int64_t rows() const { return numel() / last_extent(); }
    int64_t last_extent() const { return shape.empty() ? 1 : shape.back(); }

    float* row(int64_t r) { return data.data() + r * last_extent(); }
    const float* row(int64_t r) const { return data.data() + r * last_extent(); }

    // Metadata-only reshape; element count must be preserved.
    Tensor reshaped(std::vector<int64_t> new_shape) const;

    void check_invariants() const;
};

// c[M,N] = a[M,K] * b[K,N]; f32 accumulation, fixed summation order over k so
// results are bit-stable run to run. Rows of c are independent, which keeps
// every row's value independent of how callers batch rows together.
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_into(float* c, const float* a, const float* b, int64_t m, int64_t k, int64_t n);

// Row softmax with per-row max subtraction; rejects non-finite input.
Tensor softmax_rows(const Tensor& a);
void softmax_row_inplace(float* row, int64_t n);

// y = x / sqrt(mean(x^2) + eps) * gain, applied per trailing-D row.
Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps);

// rows of `table` gathered by id: out[i, :] = table[ids[i], :].
Tensor gather_rows(const Tensor& table, const std::vector<int32_t>& ids);

void add_inplace(Tensor& x, const Tensor& y);
float silu(float x);

}  // namespace maskgrad
