// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "ukast/tensor.hpp"

namespace ukast {

/// Stride-1 2D convolution. x[B,Ci,H,W], weight[Co,Ci,kh,kw], bias[Co] or
/// undefined. Output is [B,Co,H+2p-kh+1,W+2p-kw+1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding);

/// Transposed convolution with kernel == stride (non-overlapping upsampling).
/// x[B,Ci,H,W], weight[Ci,Co,k,k], bias[Co] -> [B,Co,H*k,W*k].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Batch normalisation over every axis except 1. In training mode batch
/// statistics are used and the running buffers are updated in place.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5));

}  // namespace ukast
