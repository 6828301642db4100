// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

// Internal loop kernels shared by the op implementations.

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "ukast/tensor.hpp"

namespace ukast::kernels {

/// C[M,N] += A[M,K] * B[K,N], all row-major. Each output row depends only on
/// the matching row of A, so results do not change with M.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    const std::size_t block = std::max<std::size_t>(16, (64 * 1024) / (sizeof(T) * std::max<std::size_t>(N, 1)));
    for (std::size_t k0 = 0; k0 < K; k0 += block) {
        const std::size_t k1 = std::min(K, k0 + block);
        for (std::size_t i = 0; i < M; ++i) {
            T* __restrict c = C + i * N;
            const T* a = A + i * K;
            for (std::size_t k = k0; k < k1; ++k) {
                const T av = a[k];
                const T* __restrict b = B + k * N;
                for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    }
}

/// C[M,N] += A[K,M]^T * B[K,N].
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t k = 0; k < K; ++k) {
        const T* a = A + k * M;
        const T* __restrict b = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const T av = a[i];
            T* __restrict c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

/// C[M,N] += A[M,K] * B[N,K]^T.
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    std::vector<T> bt(N * K);
    transpose(N, K, B, bt.data());
    gemm_nn(M, N, K, A, bt.data(), C);
}

inline std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// Visits every index of `shape` in row-major order, passing the flat output
/// offset and two strided source offsets.
template <typename F>
void for_each_strided(const Shape& shape, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                      std::size_t base_a, std::size_t base_b, F&& f) {
    const std::size_t rank = shape.size();
    if (rank == 0) {
        f(std::size_t{0}, base_a, base_b);
        return;
    }
    const std::size_t inner = shape[rank - 1];
    const std::size_t ia = sa[rank - 1], ib = sb[rank - 1];
    const std::size_t total = shape_numel(shape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = base_a, ob = base_b;
    for (std::size_t o = 0; o < total; o += inner) {
        for (std::size_t j = 0; j < inner; ++j) f(o + j, oa + j * ia, ob + j * ib);
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < shape[d]) break;
            oa -= sa[d] * shape[d];
            ob -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Strides of `in` aligned to the trailing dims of `out`, 0 on broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    const auto contiguous = contiguous_strides(in);
    const std::size_t offset = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] != 1) strides[offset + i] = contiguous[i];
    }
    return strides;
}

/// outer x axis x inner decomposition of `shape` around `axis`.
struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace ukast::kernels
