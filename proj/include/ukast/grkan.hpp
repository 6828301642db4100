// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "ukast/layers.hpp"
#include "ukast/rational.hpp"

namespace ukast {

/// GR-KAN layer: linear(group_rational(x)).
///
/// The d_in input channels are split into `groups` contiguous blocks; every
/// channel of block k goes through the same rational F_k with w = 1. The
/// per-edge scale lives in the linear map that follows.
template <typename T>
class GrKanLayer {
   public:
    GrKanLayer() = default;
    GrKanLayer(std::size_t d_in, std::size_t d_out, std::size_t groups, const RationalParams& init, Rng& rng);

    Tensor<T> operator()(const Tensor<T>& x) const;
    Tensor<T> rational_stage(const Tensor<T>& x) const;

    std::size_t d_in() const { return linear_.in_features(); }
    std::size_t d_out() const { return linear_.out_features(); }
    std::size_t groups() const { return a_.size(); }
    std::size_t unique_function_count() const { return a_.size(); }

    std::vector<Tensor<T>>& numerators() { return a_; }
    std::vector<Tensor<T>>& denominators() { return b_; }
    const std::vector<Tensor<T>>& numerators() const { return a_; }
    const std::vector<Tensor<T>>& denominators() const { return b_; }
    Linear<T>& linear() { return linear_; }
    const Linear<T>& linear() const { return linear_; }

    /// Registers `<rational_prefix>.g{k}.a/b` and `<linear_prefix>.weight/bias`.
    void collect(const std::string& rational_prefix, const std::string& linear_prefix, ParamSet<T>& out) const;

   private:
    std::vector<Tensor<T>> a_;
    std::vector<Tensor<T>> b_;
    Linear<T> linear_;
};

/// g (m + 1 + n) + d_in d_out + d_out.
std::size_t grkan_param_count(std::size_t d_in, std::size_t d_out, std::size_t groups, std::size_t m, std::size_t n);

/// Reference KAN layer with an independent rational on every input-output
/// edge. Only used for parameter and function-count comparison.
class VanillaKanLayer {
   public:
    VanillaKanLayer(std::size_t d_in, std::size_t d_out, std::size_t m, std::size_t n);

    std::size_t unique_function_count() const { return edges_.size(); }
    std::size_t trainable_scalars() const;
    /// out_j = sum_i phi_ij(x_i) + bias_j
    std::vector<double> forward(std::span<const double> x) const;

   private:
    std::size_t d_in_, d_out_;
    std::vector<RationalParams> edges_;  // [d_in * d_out], row-major by input
    std::vector<double> bias_;
};

enum class FfnKind { mlp, grkan };
enum class Activation { gelu, relu, identity };

/// Per-token feed-forward sublayer of a transformer block.
template <typename T>
class FeedForward {
   public:
    virtual ~FeedForward() = default;
    virtual Tensor<T> operator()(const Tensor<T>& x) const = 0;
    virtual void collect(const std::string& prefix, ParamSet<T>& out) const = 0;
    virtual FfnKind kind() const = 0;
};

/// linear2(act(linear1(x))), d -> r d -> d.
template <typename T>
class MlpFfn final : public FeedForward<T> {
   public:
    MlpFfn(std::size_t dim, std::size_t hidden_ratio, Activation act, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& x) const override;
    void collect(const std::string& prefix, ParamSet<T>& out) const override;
    FfnKind kind() const override { return FfnKind::mlp; }

    Linear<T>& linear1() { return fc1_; }
    Linear<T>& linear2() { return fc2_; }

   private:
    Linear<T> fc1_, fc2_;
    Activation act_;
};

/// Two stacked GR-KAN layers, d -> r d -> d, mirroring the MLP's linear shapes.
/// The first rational starts as the identity and the second as a GELU fit.
template <typename T>
class GrKanFfn final : public FeedForward<T> {
   public:
    GrKanFfn(std::size_t dim, std::size_t hidden_ratio, std::size_t groups, std::size_t m, std::size_t n, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& x) const override;
    void collect(const std::string& prefix, ParamSet<T>& out) const override;
    FfnKind kind() const override { return FfnKind::grkan; }

    GrKanLayer<T>& layer1() { return l1_; }
    GrKanLayer<T>& layer2() { return l2_; }

   private:
    GrKanLayer<T> l1_, l2_;
};

struct FfnOptions {
    FfnKind kind = FfnKind::grkan;
    std::size_t hidden_ratio = 4;
    std::size_t groups = 8;
    std::size_t m = 3;
    std::size_t n = 4;
};

template <typename T>
std::unique_ptr<FeedForward<T>> make_ffn(std::size_t dim, const FfnOptions& options, Rng& rng);

/// Cached gelu fit on [-3, 3] with 512 samples for orders (m, n).
const RationalParams& gelu_rational_init(std::size_t m, std::size_t n);

}  // namespace ukast
