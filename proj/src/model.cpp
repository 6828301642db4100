// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "ukast/nn_ops.hpp"
#include "ukast/ops.hpp"

namespace ukast {

namespace {

const char* ffn_name(FfnKind k) { return k == FfnKind::mlp ? "mlp" : "grkan"; }

FfnKind parse_ffn(const std::string& s) {
    if (s == "mlp") return FfnKind::mlp;
    if (s == "grkan") return FfnKind::grkan;
    throw ConfigError("unknown ffn kind '" + s + "' (expected mlp or grkan)");
}

template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& tokens) {
    return permute(tokens, {0, 3, 1, 2});
}

template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& maps) {
    return permute(maps, {0, 2, 3, 1});
}

}  // namespace

void StageConfig::validate() const {
    if (depth == 0) throw std::invalid_argument("stage depth must be >= 1");
    if (window == 0) throw std::invalid_argument("stage window must be >= 1");
    if (heads == 0 || embed % heads != 0) {
        throw std::invalid_argument("stage embed " + std::to_string(embed) + " is not divisible by " +
                                    std::to_string(heads) + " heads");
    }
}

void ModelConfig::validate() const {
    if (stages.empty()) throw std::invalid_argument("model needs at least one stage");
    for (const auto& s : stages) s.validate();
    if (in_channels == 0 || classes == 0) throw std::invalid_argument("channel and class counts must be positive");
    if (patch == 0) throw std::invalid_argument("patch must be positive");
    if (decoder_blocks_per_stage == 0) throw std::invalid_argument("decoder needs at least one block per stage");
    if (encoder == EncoderKind::swin) {
        if (stages.size() < 2) throw std::invalid_argument("swin encoders need at least 2 stages");
        for (std::size_t s = 0; s + 1 < stages.size(); ++s) {
            if (stages[s + 1].embed != 2 * stages[s].embed) {
                throw std::invalid_argument("swin stage widths must double (patch merging maps C to 2C)");
            }
        }
    } else {
        if (stages.size() != 1) throw std::invalid_argument("vit encoders have exactly one resolution (one stage)");
        if (stages[0].rc_enabled) throw std::invalid_argument("residual convolutions are only defined for swin");
        if (levels == 0 || patch != (std::size_t{1} << levels)) {
            throw std::invalid_argument("vit patch must equal 2^levels");
        }
        if (image_size % patch != 0) throw std::invalid_argument("vit image size must be a multiple of the patch");
        if (feature_size == 0) throw std::invalid_argument("feature_size must be positive");
    }
    for (const auto& s : stages) {
        if (s.ffn_kind == FfnKind::grkan && (groups == 0 || s.embed % groups != 0 ||
                                             (s.embed * hidden_ratio) % groups != 0)) {
            throw std::invalid_argument("GR-KAN groups " + std::to_string(groups) + " must divide width " +
                                        std::to_string(s.embed));
        }
    }
}

std::size_t ModelConfig::level_count() const {
    return encoder == EncoderKind::swin ? stages.size() : levels;
}

std::vector<std::size_t> ModelConfig::level_widths() const {
    std::vector<std::size_t> out;
    if (encoder == EncoderKind::swin) {
        for (const auto& s : stages) out.push_back(s.embed);
    } else {
        for (std::size_t k = 0; k < levels; ++k) out.push_back(feature_size << k);
    }
    return out;
}

std::size_t ModelConfig::input_multiple() const {
    if (encoder == EncoderKind::vit) return patch;
    return patch << (stages.size() - 1);
}

FfnOptions ModelConfig::ffn_options(FfnKind kind) const {
    return FfnOptions{kind, hidden_ratio, groups, rational_m, rational_n};
}

ConfigMap ModelConfig::to_map() const {
    ConfigMap m;
    std::vector<std::size_t> depths, embeds, heads, windows;
    for (const auto& s : stages) {
        depths.push_back(s.depth);
        embeds.push_back(s.embed);
        heads.push_back(s.heads);
        windows.push_back(s.window);
        if (s.ffn_kind != stages[0].ffn_kind || s.rc_enabled != stages[0].rc_enabled) {
            throw ConfigError("per-stage ffn/rc settings cannot be serialised; use uniform stages");
        }
    }
    m.set("model.name", name);
    m.set("model.encoder", encoder == EncoderKind::swin ? "swin" : "vit");
    m.set("model.depths", join_sizes(depths));
    m.set("model.embeds", join_sizes(embeds));
    m.set("model.heads", join_sizes(heads));
    m.set("model.windows", join_sizes(windows));
    m.set("model.ffn", ffn_name(stages.empty() ? FfnKind::grkan : stages[0].ffn_kind));
    m.set("model.rc", !stages.empty() && stages[0].rc_enabled ? "true" : "false");
    m.set("model.patch", std::to_string(patch));
    m.set("model.in_channels", std::to_string(in_channels));
    m.set("model.classes", std::to_string(classes));
    m.set("model.image_size", std::to_string(image_size));
    m.set("model.decoder_blocks", std::to_string(decoder_blocks_per_stage));
    m.set("model.levels", std::to_string(levels));
    m.set("model.feature_size", std::to_string(feature_size));
    m.set("model.vit_embed", std::to_string(vit_embed));
    m.set("model.vit_heads", std::to_string(vit_heads));
    m.set("model.vit_depth", std::to_string(vit_depth));
    m.set("model.hidden_ratio", std::to_string(hidden_ratio));
    m.set("model.groups", std::to_string(groups));
    m.set("model.rational_m", std::to_string(rational_m));
    m.set("model.rational_n", std::to_string(rational_n));
    m.set("model.rel_bias", rel_bias ? "true" : "false");
    return m;
}

ModelConfig ModelConfig::from_map(const ConfigMap& map, const ModelConfig& defaults) {
    ModelConfig c = defaults;
    c.name = map.str("model.name", c.name);
    const std::string enc = map.str("model.encoder", c.encoder == EncoderKind::swin ? "swin" : "vit");
    if (enc == "swin") {
        c.encoder = EncoderKind::swin;
    } else if (enc == "vit") {
        c.encoder = EncoderKind::vit;
    } else {
        throw ConfigError("unknown encoder '" + enc + "'");
    }
    std::vector<std::size_t> depths, embeds, heads, windows;
    for (const auto& s : c.stages) {
        depths.push_back(s.depth);
        embeds.push_back(s.embed);
        heads.push_back(s.heads);
        windows.push_back(s.window);
    }
    depths = map.size_list("model.depths", depths);
    embeds = map.size_list("model.embeds", embeds);
    heads = map.size_list("model.heads", heads);
    windows = map.size_list("model.windows", windows);
    const std::size_t n = embeds.size();
    auto fit = [&](std::vector<std::size_t>& v, const char* key) {
        if (v.size() == 1 && n > 1) v.assign(n, v[0]);
        if (v.size() != n) throw ConfigError(std::string("model.") + key + " must list one value per stage");
    };
    fit(depths, "depths");
    fit(heads, "heads");
    fit(windows, "windows");
    const FfnKind ffn = parse_ffn(map.str("model.ffn", ffn_name(c.stages.empty() ? FfnKind::grkan
                                                                              : c.stages[0].ffn_kind)));
    const bool rc = map.boolean("model.rc", !c.stages.empty() && c.stages[0].rc_enabled);
    c.stages.clear();
    for (std::size_t s = 0; s < n; ++s) c.stages.push_back(StageConfig{depths[s], embeds[s], heads[s], windows[s], ffn, rc});
    c.patch = map.size("model.patch", c.patch);
    c.in_channels = map.size("model.in_channels", c.in_channels);
    c.classes = map.size("model.classes", c.classes);
    c.image_size = map.size("model.image_size", c.image_size);
    c.decoder_blocks_per_stage = map.size("model.decoder_blocks", c.decoder_blocks_per_stage);
    c.levels = map.size("model.levels", c.levels);
    c.feature_size = map.size("model.feature_size", c.feature_size);
    c.vit_embed = map.size("model.vit_embed", c.vit_embed);
    c.vit_heads = map.size("model.vit_heads", c.vit_heads);
    c.vit_depth = map.size("model.vit_depth", c.vit_depth);
    c.hidden_ratio = map.size("model.hidden_ratio", c.hidden_ratio);
    c.groups = map.size("model.groups", c.groups);
    c.rational_m = map.size("model.rational_m", c.rational_m);
    c.rational_n = map.size("model.rational_n", c.rational_n);
    c.rel_bias = map.boolean("model.rel_bias", c.rel_bias);
    return c;
}

ModelConfig desk_config() {
    ModelConfig c;
    c.name = "ukast";
    const std::size_t heads[] = {2, 4, 8, 8};
    for (std::size_t s = 0; s < 4; ++s) c.stages.push_back(StageConfig{1, std::size_t{24} << s, heads[s], 4, FfnKind::grkan, true});
    c.patch = 2;
    c.image_size = 64;
    c.levels = 4;
    c.feature_size = 24;
    c.vit_embed = 96;
    c.vit_heads = 4;
    c.vit_depth = 4;
    return c;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.name = "ukast";
    const std::size_t heads[] = {1, 2, 4};
    for (std::size_t s = 0; s < 3; ++s) c.stages.push_back(StageConfig{1, std::size_t{16} << s, heads[s], 4, FfnKind::grkan, true});
    c.patch = 2;
    c.image_size = 32;
    c.levels = 3;
    c.feature_size = 16;
    c.vit_embed = 32;
    c.vit_heads = 2;
    c.vit_depth = 3;
    return c;
}

std::vector<std::string> variant_names() {
    return {"vit+mlp", "vit+grkan", "swin+mlp", "swin+grkan", "swin+mlp+rc", "swin+grkan+rc"};
}

ModelConfig make_variant(const std::string& row, const ModelConfig& base) {
    std::string key = row;
    if (key == "ukat") key = "vit+grkan";
    if (key == "ukast") key = "swin+grkan+rc";
    if (key == "unetr") key = "vit+mlp";
    if (key == "swinunetr") key = "swin+mlp+rc";

    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto plus = key.find('+', start);
        parts.push_back(key.substr(start, plus - start));
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    bool vit = false, swin = false, mlp = false, grkan = false, rc = false;
    for (const auto& p : parts) {
        if (p == "vit") {
            vit = true;
        } else if (p == "swin") {
            swin = true;
        } else if (p == "mlp") {
            mlp = true;
        } else if (p == "grkan") {
            grkan = true;
        } else if (p == "rc") {
            rc = true;
        } else {
            throw std::invalid_argument("unknown variant component '" + p + "' in '" + row + "'");
        }
    }
    if (vit == swin) throw std::invalid_argument("variant '" + row + "' must name exactly one of vit, swin");
    if (mlp == grkan) throw std::invalid_argument("variant '" + row + "' must name exactly one of mlp, grkan");
    if (vit && rc) throw std::invalid_argument("variant '" + row + "': residual convolutions require the swin encoder");
    if (base.encoder != EncoderKind::swin || base.stages.size() < 2) {
        throw std::invalid_argument("make_variant needs a swin base configuration");
    }

    ModelConfig c = base;
    const FfnKind ffn = grkan ? FfnKind::grkan : FfnKind::mlp;
    c.name = (vit ? "vit+" : "swin+") + std::string(ffn_name(ffn)) + (rc ? "+rc" : "");
    if (swin) {
        for (auto& s : c.stages) {
            s.ffn_kind = ffn;
            s.rc_enabled = rc;
        }
    } else {
        c.encoder = EncoderKind::vit;
        c.levels = base.stages.size();
        c.patch = std::size_t{1} << c.levels;
        c.feature_size = base.stages[0].embed * base.patch / 2;
        const std::size_t grid = c.image_size / c.patch;
        c.stages = {StageConfig{base.vit_depth, base.vit_embed, base.vit_heads, grid, ffn, false}};
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

template <typename T>
RcBlock<T>::RcBlock(std::size_t channels, Rng& rng) : conv(channels, channels, 3, 1, false, rng), norm(channels) {}

template <typename T>
void RcBlock<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    conv.collect(prefix + ".conv", out);
    norm.collect(prefix + ".norm", out);
}

template <typename T>
Tensor<T> rc_block(const Tensor<T>& tokens, const RcBlock<T>& rc) {
    if (tokens.dim() != 4) throw ShapeError("rc_block expects tokens [B,H,W,C], got " + shape_str(tokens.shape()));
    auto y = relu(rc.norm(rc.conv(to_channels_first(tokens))));
    return add(tokens, to_channels_last(y));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(const WindowSpec& s, bool rel_bias, const FfnOptions& ffn_opts, Rng& rng)
    : spec(s), norm1(s.embed), attn(s.embed, s.heads, s.window, rel_bias, rng), norm2(s.embed),
      ffn(make_ffn<T>(s.embed, ffn_opts, rng)) {}

template <typename T>
Tensor<T> TransformerBlock<T>::operator()(const Tensor<T>& z) const {
    auto h = add(sw_msa(norm1(z), spec, attn), z);
    return add((*ffn)(norm2(h)), h);
}

template <typename T>
void TransformerBlock<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    norm1.collect(prefix + ".norm1", out);
    attn.collect(prefix + ".attn", out);
    norm2.collect(prefix + ".norm2", out);
    ffn->collect(prefix + ".ffn", out);
}

template <typename T>
BlockPair<T>::BlockPair(const StageConfig& stage, const ModelConfig& model, Rng& rng) : rc_enabled(stage.rc_enabled) {
    if (rc_enabled) rc = RcBlock<T>(stage.embed, rng);
    const auto opts = model.ffn_options(stage.ffn_kind);
    regular = TransformerBlock<T>(WindowSpec{stage.window, 0, stage.heads, stage.embed}, model.rel_bias, opts, rng);
    shifted = TransformerBlock<T>(WindowSpec{stage.window, stage.window / 2, stage.heads, stage.embed}, model.rel_bias,
                                  opts, rng);
}

template <typename T>
void BlockPair<T>::collect(const std::string& prefix_a, const std::string& prefix_b, ParamSet<T>& out) const {
    if (rc_enabled) rc.collect(prefix_a + ".rc", out);
    regular.collect(prefix_a, out);
    shifted.collect(prefix_b, out);
}

template <typename T>
Tensor<T> swin_kan_block_pair(const Tensor<T>& z, const BlockPair<T>& pair) {
    const auto v0 = pair.rc_enabled ? rc_block(z, pair.rc) : z;
    const auto& a = pair.regular;
    const auto& b = pair.shifted;
    auto z1_hat = add(w_msa(a.norm1(v0), a.spec, a.attn), v0);
    auto z1 = add((*a.ffn)(a.norm2(z1_hat)), z1_hat);
    auto z2_hat = add(sw_msa(b.norm1(z1), b.spec, b.attn), z1);
    return add((*b.ffn)(b.norm2(z2_hat)), z2_hat);
}

template <typename T>
DecoderStage<T>::DecoderStage(std::size_t deep_c, std::size_t skip_c, std::size_t out_c, std::size_t scale,
                              std::size_t block_count, Rng& rng)
    : up(deep_c, out_c, scale, rng) {
    for (std::size_t j = 0; j < block_count; ++j) blocks.emplace_back(j == 0 ? out_c + skip_c : out_c, out_c, 3, rng);
}

template <typename T>
void DecoderStage<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    up.collect(prefix + ".deconv", out);
    for (std::size_t j = 0; j < blocks.size(); ++j) blocks[j].collect(prefix + ".block" + std::to_string(j), out);
}

template <typename T>
Tensor<T> decoder_stage(const Tensor<T>& deep, const Tensor<T>& skip, const DecoderStage<T>& stage, bool training) {
    if (deep.dim() != 4 || skip.dim() != 4) throw ShapeError("decoder_stage expects [B,C,H,W] inputs");
    const std::size_t k = stage.up.weight.shape()[2];
    if (deep.shape()[0] != skip.shape()[0] || deep.shape()[2] * k != skip.shape()[2] ||
        deep.shape()[3] * k != skip.shape()[3]) {
        throw ShapeError("decoder_stage resolution mismatch: deep " + shape_str(deep.shape()) + " x" +
                         std::to_string(k) + " vs skip " + shape_str(skip.shape()));
    }
    auto x = concat(std::vector<Tensor<T>>{stage.up(deep), skip}, 1);
    for (const auto& b : stage.blocks) x = b(x, training);
    return x;
}

template <typename T>
void VitAdapter<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        if (j < ups.size()) ups[j].collect(prefix + ".up" + std::to_string(j) + ".deconv", out);
        blocks[j].collect(prefix + ".up" + std::to_string(j) + ".block", out);
    }
}

template <typename T>
Tensor<T> VitAdapter<T>::operator()(const Tensor<T>& x, bool training) const {
    auto y = x;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        if (j < ups.size()) y = ups[j](y);
        y = blocks[j](y, training);
    }
    return y;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const auto widths = config_.level_widths();
    const std::size_t levels = config_.level_count();

    if (config_.encoder == EncoderKind::swin) {
        embed_ = PatchEmbed<T>(config_.patch, config_.patch, config_.in_channels, config_.stages[0].embed, rng);
        embed_.collect("embed", params_);
        for (std::size_t s = 0; s < config_.stages.size(); ++s) {
            const auto& st = config_.stages[s];
            std::vector<BlockPair<T>> pairs;
            for (std::size_t p = 0; p < st.depth; ++p) {
                pairs.emplace_back(st, config_, rng);
                const std::string stage = "stage" + std::to_string(s);
                pairs.back().collect(stage + ".block" + std::to_string(2 * p),
                                     stage + ".block" + std::to_string(2 * p + 1), params_);
            }
            swin_stages_.push_back(std::move(pairs));
            if (s + 1 < config_.stages.size()) {
                merges_.emplace_back(st.embed, rng);
                merges_.back().collect("stage" + std::to_string(s) + ".merge", params_);
            }
        }
    } else {
        const auto& st = config_.stages[0];
        const std::size_t grid = config_.image_size / config_.patch;
        embed_ = PatchEmbed<T>(config_.patch, config_.patch, config_.in_channels, st.embed, rng);
        embed_.collect("embed", params_);
        pos_embed_ = trunc_normal_tensor<T>(Shape{grid * grid, st.embed}, 0.02, rng);
        params_.add("embed.pos", pos_embed_, ParamKind::embedding);
        const WindowSpec spec{grid, 0, st.heads, st.embed};
        for (std::size_t b = 0; b < st.depth; ++b) {
            vit_blocks_.emplace_back(spec, false, config_.ffn_options(st.ffn_kind), rng);
            vit_blocks_.back().collect("stage0.block" + std::to_string(b), params_);
        }
        for (std::size_t k = 0; k < levels; ++k) {
            const std::size_t tap = std::max<std::size_t>(1, ((k + 1) * st.depth + levels - 1) / levels) - 1;
            vit_taps_.push_back(tap);
            VitAdapter<T> ad;
            const std::size_t steps = levels - 1 - k;
            if (steps == 0) {
                ad.blocks.emplace_back(st.embed, widths[k], 1, rng);
            } else {
                for (std::size_t j = 0; j < steps; ++j) {
                    ad.ups.emplace_back(j == 0 ? st.embed : widths[k], widths[k], 2, rng);
                    ad.blocks.emplace_back(widths[k], widths[k], 3, rng);
                }
            }
            ad.collect("adapter" + std::to_string(k), params_);
            adapters_.push_back(std::move(ad));
        }
    }

    stem_ = ConvBlock<T>(config_.in_channels, widths[0], 3, rng);
    stem_.collect("decoder.stem", params_);
    for (std::size_t k = 0; k + 1 < levels; ++k) {
        up_.emplace_back(widths[k + 1], widths[k], widths[k], 2, config_.decoder_blocks_per_stage, rng);
    }
    for (std::size_t k = levels - 1; k-- > 0;) up_[k].collect("decoder.up" + std::to_string(k), params_);
    const std::size_t full_scale = config_.encoder == EncoderKind::swin ? config_.patch : 2;
    up_full_ = DecoderStage<T>(widths[0], widths[0], widths[0], full_scale, config_.decoder_blocks_per_stage, rng);
    up_full_.collect("decoder.up_full", params_);
    head_ = Conv2d<T>(widths[0], config_.classes, 1, 0, true, rng);
    head_.collect("head", params_);
}

template <typename T>
std::vector<Tensor<T>> Model<T>::encode(const Tensor<T>& padded, bool training) const {
    std::vector<Tensor<T>> skips;
    auto x = patch_embed(padded, embed_);
    if (config_.encoder == EncoderKind::swin) {
        for (std::size_t s = 0; s < swin_stages_.size(); ++s) {
            for (const auto& pair : swin_stages_[s]) x = swin_kan_block_pair(x, pair);
            skips.push_back(to_channels_first(x));
            if (s < merges_.size()) x = patch_merge(x, merges_[s]);
        }
        return skips;
    }
    const std::size_t grid = config_.image_size / config_.patch;
    if (x.shape()[1] != grid || x.shape()[2] != grid) {
        throw ShapeError("vit encoder expects " + std::to_string(config_.image_size) + "x" +
                         std::to_string(config_.image_size) + " inputs");
    }
    x = add(x, reshape(pos_embed_, Shape{grid, grid, x.shape()[3]}));
    std::vector<Tensor<T>> taps(vit_blocks_.size());
    for (std::size_t b = 0; b < vit_blocks_.size(); ++b) {
        x = vit_blocks_[b](x);
        taps[b] = x;
    }
    for (std::size_t k = 0; k < adapters_.size(); ++k) {
        skips.push_back(adapters_[k](to_channels_first(taps[vit_taps_[k]]), training));
    }
    return skips;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, bool training) const {
    if (images.dim() != 4 || images.shape()[1] != config_.in_channels) {
        throw ShapeError("model expects images [B," + std::to_string(config_.in_channels) + ",H,W], got " +
                         shape_str(images.shape()));
    }
    const auto& s = images.shape();
    const std::size_t mult = config_.input_multiple();
    const std::size_t hp = (s[2] + mult - 1) / mult * mult, wp = (s[3] + mult - 1) / mult * mult;
    const auto x = pad_to(images, Shape{s[0], s[1], hp, wp});
    const auto skips = encode(x, training);
    auto d = skips.back();
    for (std::size_t k = up_.size(); k-- > 0;) d = decoder_stage(d, skips[k], up_[k], training);
    d = decoder_stage(d, stem_(x, training), up_full_, training);
    return crop_to(head_(d), Shape{s[0], config_.classes, s[2], s[3]});
}

#define UKAST_INSTANTIATE_MODEL(T)                                                                  \
    template struct RcBlock<T>;                                                                     \
    template struct TransformerBlock<T>;                                                            \
    template struct BlockPair<T>;                                                                   \
    template struct DecoderStage<T>;                                                                \
    template struct VitAdapter<T>;                                                                  \
    template class Model<T>;                                                                        \
    template Tensor<T> rc_block(const Tensor<T>&, const RcBlock<T>&);                               \
    template Tensor<T> swin_kan_block_pair(const Tensor<T>&, const BlockPair<T>&);                  \
    template Tensor<T> decoder_stage(const Tensor<T>&, const Tensor<T>&, const DecoderStage<T>&, bool);

UKAST_INSTANTIATE_MODEL(float)
UKAST_INSTANTIATE_MODEL(double)

}  // namespace ukast
