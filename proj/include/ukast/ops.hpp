// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ukast/tensor.hpp"

namespace ukast {

// Elementwise binary ops broadcast by the trailing-dimension rule.
template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> div(const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value);

template <typename T>
Tensor<T> neg(const Tensor<T>& x);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);  // d|x|/dx = sign(x), sign(0) = 0
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
template <typename T>
Tensor<T> log(const Tensor<T>& x);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
/// Tanh approximation of GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> operator+(const Tensor<T>& x, const Tensor<T>& y) { return add(x, y); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& x, const Tensor<T>& y) { return sub(x, y); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, const Tensor<T>& y) { return mul(x, y); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& x, const Tensor<T>& y) { return div(x, y); }

/// Batched matrix product x[..., i, k] @ y[..., k, j]; batch dims broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false);
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false);
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis);

/// Normalises along `axis` to zero mean / unit variance, then applies the
/// optional affine `gamma`, `beta` (pass undefined tensors to skip it).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int axis = -1,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
/// Zero-pads at the end of every axis up to `shape`.
template <typename T>
Tensor<T> pad_to(const Tensor<T>& x, const Shape& shape);
/// Crops the leading corner of `x` to `shape`.
template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const Shape& shape);
/// Cyclic shift: out[i] = x[(i - shift) mod n] along `axis`.
template <typename T>
Tensor<T> roll(const Tensor<T>& x, int axis, std::ptrdiff_t shift);
/// Gathers slices along `axis`; repeated indices accumulate in backward.
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, std::span<const std::size_t> indices);

/// Resolves a possibly negative axis against `rank`.
std::size_t normalize_axis(int axis, std::size_t rank);
/// Trailing-dimension broadcast of two shapes.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace ukast
