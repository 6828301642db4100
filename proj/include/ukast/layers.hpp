// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ukast/checkpoint.hpp"
#include "ukast/random.hpp"
#include "ukast/tensor.hpp"

namespace ukast {

/// Role of a stored array; drives weight-decay grouping and counting.
enum class ParamKind { weight, bias, norm, rational, embedding, buffer };

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
    ParamKind kind;

    bool trainable() const { return kind != ParamKind::buffer; }
    bool decays() const { return kind == ParamKind::weight; }
};

/// Flat, ordered registry of a model's named arrays. Entries share storage
/// with the layers that registered them.
template <typename T>
class ParamSet {
   public:
    void add(std::string name, Tensor<T> tensor, ParamKind kind);

    const std::vector<NamedParam<T>>& entries() const { return entries_; }
    std::vector<NamedParam<T>> trainable() const;
    const NamedParam<T>* find(const std::string& name) const;
    std::size_t trainable_scalars() const;
    void zero_grad();

    std::vector<NamedArray> to_arrays() const;
    /// Copies values in from `arrays`. Names, order-independent, and shapes
    /// must match exactly; anything else raises CheckpointError.
    void load_arrays(std::span<const NamedArray> arrays);

   private:
    std::vector<NamedParam<T>> entries_;
};

/// y = x W + b with W stored as [in, out].
template <typename T>
struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng);

    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }
    Tensor<T> operator()(const Tensor<T>& x) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Normalisation over the last axis with affine parameters.
template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    LayerNorm() = default;
    explicit LayerNorm(std::size_t features);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [Co, Ci, k, k]
    Tensor<T> bias;
    std::size_t padding = 0;

    Conv2d() = default;
    Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding, bool with_bias, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Non-overlapping upsampling deconvolution (kernel == stride).
template <typename T>
struct ConvTranspose2d {
    Tensor<T> weight;  // [Ci, Co, k, k]
    Tensor<T> bias;

    ConvTranspose2d() = default;
    ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

template <typename T>
struct BatchNorm2d {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t channels);
    Tensor<T> operator()(const Tensor<T>& x, bool training) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Per-sample, per-channel normalisation over the spatial axes.
template <typename T>
struct InstanceNorm2d {
    Tensor<T> gamma;
    Tensor<T> beta;

    InstanceNorm2d() = default;
    explicit InstanceNorm2d(std::size_t channels);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Conv3x3 (no bias) -> BatchNorm -> ReLU.
template <typename T>
struct ConvBlock {
    Conv2d<T> conv;
    BatchNorm2d<T> bn;

    ConvBlock() = default;
    ConvBlock(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& x, bool training) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Tensor of the given shape filled from a truncated normal.
template <typename T>
Tensor<T> trunc_normal_tensor(Shape shape, double stddev, Rng& rng);

}  // namespace ukast
