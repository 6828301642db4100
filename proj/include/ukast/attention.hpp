// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ukast/layers.hpp"

namespace ukast {

/// Additive logit mask for cross-region token pairs. Finite so grads stay finite.
inline constexpr double kMaskValue = -1e9;

/// Geometry of one windowed attention call.
struct WindowSpec {
    std::size_t window = 4;  // M, tokens per window side
    std::size_t shift = 0;   // 0 or M / 2
    std::size_t heads = 1;
    std::size_t embed = 0;

    std::size_t head_dim() const { return embed / heads; }
    void validate() const;
};

/// Splits images into non-overlapping patches and projects each to C'.
/// Input [B,C,H,W]; H and W are zero-padded bottom/right to patch multiples.
/// Output tokens [B,Ht,Wt,C'] in row-major patch order.
template <typename T>
struct PatchEmbed {
    std::size_t patch_h = 2, patch_w = 2, in_channels = 1, embed = 0;
    Linear<T> proj;  // (C * ph * pw) -> C'

    PatchEmbed() = default;
    PatchEmbed(std::size_t patch_h, std::size_t patch_w, std::size_t in_channels, std::size_t embed, Rng& rng);
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const PatchEmbed<T>& pe);

/// [B,H,W,C] -> [B * nW, M * M, C]; windows ordered row-major per image.
/// H and W must be multiples of M.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& tokens, std::size_t window);

/// Inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::size_t window, std::size_t height, std::size_t width);

/// Multi-head self-attention parameters for one window size.
template <typename T>
struct WindowAttention {
    std::size_t embed = 0, heads = 1, window = 1;
    bool use_rel_bias = true;
    Linear<T> qkv;            // C -> 3C
    Linear<T> proj;           // C -> C
    Tensor<T> rel_bias;       // [(2M-1)^2, heads]
    std::vector<std::size_t> rel_index;  // [N * N] into rel_bias rows

    WindowAttention() = default;
    WindowAttention(std::size_t embed, std::size_t heads, std::size_t window, bool use_rel_bias, Rng& rng);
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Optional capture of the softmax weights, [B * nW, heads, N, N].
template <typename T>
struct AttentionProbe {
    Tensor<T> probabilities;
};

/// W-MSA on tokens [B,H,W,C]. Requires spec.shift == 0.
template <typename T>
Tensor<T> w_msa(const Tensor<T>& tokens, const WindowSpec& spec, const WindowAttention<T>& attn,
                AttentionProbe<T>* probe = nullptr);

/// SW-MSA: cyclic shift by (-s, -s), masked window attention, shift back.
/// With shift 0 this is exactly w_msa.
template <typename T>
Tensor<T> sw_msa(const Tensor<T>& tokens, const WindowSpec& spec, const WindowAttention<T>& attn,
                 AttentionProbe<T>* probe = nullptr);

/// Region id of every position of the shifted, padded grid (Swin labelling).
std::vector<int> shift_region_labels(std::size_t padded_h, std::size_t padded_w, std::size_t window, std::size_t shift);

/// Mask [nW, N, N] with 0 for allowed pairs and kMaskValue for pairs from
/// different regions or whose key is a padding token. Grid (h, w) is the
/// unpadded size; padding is to the next multiple of `window`.
template <typename T>
Tensor<T> attention_mask(std::size_t h, std::size_t w, std::size_t window, std::size_t shift);

/// Concatenates each 2x2 neighbourhood (4C), normalises, reduces to 2C.
template <typename T>
struct PatchMerge {
    LayerNorm<T> norm;      // 4C
    Linear<T> reduction;    // 4C -> 2C, no bias

    PatchMerge() = default;
    PatchMerge(std::size_t channels, Rng& rng);
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// [B,H,W,C] -> [B,ceil(H/2),ceil(W/2),2C].
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& tokens, const PatchMerge<T>& merge);

}  // namespace ukast
