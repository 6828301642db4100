// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ukast/attention.hpp"
#include "ukast/config.hpp"
#include "ukast/grkan.hpp"
#include "ukast/layers.hpp"

namespace ukast {

enum class EncoderKind { vit, swin };

struct StageConfig {
    std::size_t depth = 1;  // block pairs (swin) or blocks (vit)
    std::size_t embed = 24;
    std::size_t heads = 2;
    std::size_t window = 4;
    FfnKind ffn_kind = FfnKind::grkan;
    bool rc_enabled = true;

    void validate() const;
};

struct ModelConfig {
    std::string name = "ukast";
    EncoderKind encoder = EncoderKind::swin;
    std::vector<StageConfig> stages;
    std::size_t patch = 2;
    std::size_t in_channels = 1;
    std::size_t classes = 2;
    std::size_t image_size = 64;  // nominal square input side
    std::size_t decoder_blocks_per_stage = 2;
    // Decoder pyramid for the vit encoder: `levels` scales of width
    // feature_size * 2^k at image / 2^(k+1). Swin uses its stage widths.
    std::size_t levels = 4;
    std::size_t feature_size = 24;
    // Transformer used when make_variant builds a vit row from this config.
    std::size_t vit_embed = 96;
    std::size_t vit_heads = 4;
    std::size_t vit_depth = 4;
    std::size_t hidden_ratio = 4;
    std::size_t groups = 8;
    std::size_t rational_m = 3;
    std::size_t rational_n = 4;
    bool rel_bias = true;

    void validate() const;
    std::size_t level_count() const;
    std::vector<std::size_t> level_widths() const;
    /// Inputs are zero-padded to a multiple of this before the encoder.
    std::size_t input_multiple() const;
    FfnOptions ffn_options(FfnKind kind) const;

    ConfigMap to_map() const;
    std::string to_text() const { return to_map().to_text(); }
    /// Reads `model.*` keys; missing keys keep the values of `defaults`.
    static ModelConfig from_map(const ConfigMap& map, const ModelConfig& defaults);
};

/// 4 Swin stages, embeds 24/48/96/192, one block pair each, heads 2/4/8/8,
/// patch 2, window 4, 64x64 input, GR-KAN + RC.
ModelConfig desk_config();
/// 3 stages, embeds 16/32/64, heads 1/2/4, window 4, 32x32 input.
ModelConfig tiny_config();

/// Ablation rows: vit+mlp, vit+grkan (ukat), swin+mlp, swin+grkan,
/// swin+mlp+rc, swin+grkan+rc (ukast). Scale comes from `base`, a swin config.
ModelConfig make_variant(const std::string& row, const ModelConfig& base);
std::vector<std::string> variant_names();

/// v0 = z + ReLU(InstanceNorm(Conv3x3(z))), on tokens [B,H,W,C].
template <typename T>
struct RcBlock {
    Conv2d<T> conv;
    InstanceNorm2d<T> norm;

    RcBlock() = default;
    RcBlock(std::size_t channels, Rng& rng);
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

template <typename T>
Tensor<T> rc_block(const Tensor<T>& tokens, const RcBlock<T>& rc);

/// z + Attn(LN z), then + FFN(LN .). Attention is global for vit blocks.
template <typename T>
struct TransformerBlock {
    WindowSpec spec;
    LayerNorm<T> norm1;
    WindowAttention<T> attn;
    LayerNorm<T> norm2;
    std::unique_ptr<FeedForward<T>> ffn;

    TransformerBlock() = default;
    TransformerBlock(const WindowSpec& spec, bool rel_bias, const FfnOptions& ffn, Rng& rng);
    Tensor<T> operator()(const Tensor<T>& z) const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// One W-MSA block followed by one SW-MSA block, optionally preceded by RC.
template <typename T>
struct BlockPair {
    bool rc_enabled = false;
    RcBlock<T> rc;
    TransformerBlock<T> regular;  // shift 0
    TransformerBlock<T> shifted;  // shift M / 2

    BlockPair() = default;
    BlockPair(const StageConfig& stage, const ModelConfig& model, Rng& rng);
    /// Registers `<prefix_a>.*` for RC and the regular block and `<prefix_b>.*`
    /// for the shifted block.
    void collect(const std::string& prefix_a, const std::string& prefix_b, ParamSet<T>& out) const;
};

template <typename T>
Tensor<T> swin_kan_block_pair(const Tensor<T>& z, const BlockPair<T>& pair);

/// Deconv x k, channel concat with skip, then conv blocks.
template <typename T>
struct DecoderStage {
    ConvTranspose2d<T> up;
    std::vector<ConvBlock<T>> blocks;

    DecoderStage() = default;
    DecoderStage(std::size_t deep_channels, std::size_t skip_channels, std::size_t out_channels, std::size_t scale,
                 std::size_t block_count, Rng& rng);
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

template <typename T>
Tensor<T> decoder_stage(const Tensor<T>& deep, const Tensor<T>& skip, const DecoderStage<T>& stage, bool training);

/// Upsampling chain from the vit token grid to one decoder level.
template <typename T>
struct VitAdapter {
    std::vector<ConvTranspose2d<T>> ups;
    std::vector<ConvBlock<T>> blocks;

    void collect(const std::string& prefix, ParamSet<T>& out) const;
    Tensor<T> operator()(const Tensor<T>& x, bool training) const;
};

template <typename T>
class Model {
   public:
    Model(const ModelConfig& config, std::uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// images [B,C,H,W] -> logits [B,classes,H,W]. `training` selects batch
    /// statistics in the decoder's batch norms.
    Tensor<T> forward(const Tensor<T>& images, bool training) const;
    /// Encoder skips [B,C_k,H_k,W_k], shallowest first, for a padded input.
    std::vector<Tensor<T>> encode(const Tensor<T>& padded, bool training) const;

    const ModelConfig& config() const { return config_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

   private:
    ModelConfig config_;
    PatchEmbed<T> embed_;
    Tensor<T> pos_embed_;                         // vit only, [tokens, C]
    std::vector<std::vector<BlockPair<T>>> swin_stages_;
    std::vector<PatchMerge<T>> merges_;
    std::vector<TransformerBlock<T>> vit_blocks_;
    std::vector<std::size_t> vit_taps_;           // block index feeding each level
    std::vector<VitAdapter<T>> adapters_;
    ConvBlock<T> stem_;
    std::vector<DecoderStage<T>> up_;             // up_[k]: level k+1 -> level k
    DecoderStage<T> up_full_;
    Conv2d<T> head_;
    ParamSet<T> params_;
};

}  // namespace ukast
