// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/attention.hpp"

#include <cmath>

#include "ukast/ops.hpp"

namespace ukast {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

template <typename T>
void require_tokens(const Tensor<T>& tokens, const char* what) {
    if (tokens.dim() != 4) {
        throw ShapeError(std::string(what) + " expects tokens [B,H,W,C], got " + shape_str(tokens.shape()));
    }
}

}  // namespace

void WindowSpec::validate() const {
    if (window == 0) throw std::invalid_argument("window size must be positive");
    if (shift >= window) throw std::invalid_argument("shift must be smaller than the window");
    if (heads == 0 || embed % heads != 0) {
        throw std::invalid_argument("embed " + std::to_string(embed) + " is not divisible by " + std::to_string(heads) +
                                    " heads");
    }
}

template <typename T>
PatchEmbed<T>::PatchEmbed(std::size_t ph, std::size_t pw, std::size_t in_ch, std::size_t emb, Rng& rng)
    : patch_h(ph), patch_w(pw), in_channels(in_ch), embed(emb), proj(in_ch * ph * pw, emb, true, rng) {}

template <typename T>
void PatchEmbed<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    proj.collect(prefix + ".proj", out);
}

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const PatchEmbed<T>& pe) {
    if (image.dim() != 4) throw ShapeError("patch_embed expects [B,C,H,W], got " + shape_str(image.shape()));
    const auto& s = image.shape();
    if (s[1] != pe.in_channels) {
        throw ShapeError("patch_embed expects " + std::to_string(pe.in_channels) + " channels, got " +
                         shape_str(image.shape()));
    }
    const std::size_t B = s[0], C = s[1];
    const std::size_t Hp = round_up(s[2], pe.patch_h), Wp = round_up(s[3], pe.patch_w);
    const std::size_t Ht = Hp / pe.patch_h, Wt = Wp / pe.patch_w;
    auto x = pad_to(image, Shape{B, C, Hp, Wp});
    x = reshape(x, Shape{B, C, Ht, pe.patch_h, Wt, pe.patch_w});
    x = permute(x, {0, 2, 4, 1, 3, 5});
    x = reshape(x, Shape{B, Ht, Wt, C * pe.patch_h * pe.patch_w});
    return pe.proj(x);
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& tokens, std::size_t window) {
    require_tokens(tokens, "window_partition");
    const auto& s = tokens.shape();
    if (s[1] % window != 0 || s[2] % window != 0) {
        throw ShapeError("grid " + shape_str(tokens.shape()) + " is not a multiple of window " + std::to_string(window));
    }
    const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
    auto x = reshape(tokens, Shape{B, H / window, window, W / window, window, C});
    x = permute(x, {0, 1, 3, 2, 4, 5});
    return reshape(x, Shape{B * (H / window) * (W / window), window * window, C});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::size_t window, std::size_t height, std::size_t width) {
    if (windows.dim() != 3 || height % window != 0 || width % window != 0) {
        throw ShapeError("window_reverse: bad windows " + shape_str(windows.shape()));
    }
    const std::size_t nw = (height / window) * (width / window);
    const std::size_t C = windows.shape()[2];
    if (windows.shape()[0] % nw != 0 || windows.shape()[1] != window * window) {
        throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " do not tile a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    const std::size_t B = windows.shape()[0] / nw;
    auto x = reshape(windows, Shape{B, height / window, width / window, window, window, C});
    x = permute(x, {0, 1, 3, 2, 4, 5});
    return reshape(x, Shape{B, height, width, C});
}

template <typename T>
WindowAttention<T>::WindowAttention(std::size_t emb, std::size_t h, std::size_t m, bool rel, Rng& rng)
    : embed(emb), heads(h), window(m), use_rel_bias(rel), qkv(emb, 3 * emb, true, rng), proj(emb, emb, true, rng) {
    WindowSpec{m, 0, h, emb}.validate();
    if (use_rel_bias) {
        const std::size_t side = 2 * m - 1;
        rel_bias = trunc_normal_tensor<T>(Shape{side * side, h}, 0.02, rng);
        const std::size_t n = m * m;
        rel_index.resize(n * n);
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                const std::size_t dy = p / m + (m - 1) - q / m;
                const std::size_t dx = p % m + (m - 1) - q % m;
                rel_index[p * n + q] = dy * side + dx;
            }
        }
    }
}

template <typename T>
void WindowAttention<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    qkv.collect(prefix + ".qkv", out);
    proj.collect(prefix + ".proj", out);
    if (use_rel_bias) out.add(prefix + ".rel_bias", rel_bias, ParamKind::embedding);
}

std::vector<int> shift_region_labels(std::size_t hp, std::size_t wp, std::size_t window, std::size_t shift) {
    auto band = [&](std::size_t i, std::size_t extent) {
        if (shift == 0) return 0;
        if (i < extent - window) return 0;
        if (i < extent - shift) return 1;
        return 2;
    };
    std::vector<int> labels(hp * wp);
    for (std::size_t i = 0; i < hp; ++i)
        for (std::size_t j = 0; j < wp; ++j) labels[i * wp + j] = 3 * band(i, hp) + band(j, wp);
    return labels;
}

template <typename T>
Tensor<T> attention_mask(std::size_t h, std::size_t w, std::size_t window, std::size_t shift) {
    const std::size_t hp = round_up(h, window), wp = round_up(w, window);
    const auto labels = shift_region_labels(hp, wp, window, shift);
    const std::size_t nh = hp / window, nwc = wp / window, n = window * window;
    std::vector<T> mask(nh * nwc * n * n, T(0));
    for (std::size_t wi = 0; wi < nh; ++wi) {
        for (std::size_t wj = 0; wj < nwc; ++wj) {
            T* m = mask.data() + (wi * nwc + wj) * n * n;
            for (std::size_t p = 0; p < n; ++p) {
                const std::size_t pi = wi * window + p / window, pj = wj * window + p % window;
                for (std::size_t q = 0; q < n; ++q) {
                    const std::size_t qi = wi * window + q / window, qj = wj * window + q % window;
                    // Original (pre-shift) coordinates of the key.
                    const std::size_t oi = (qi + shift) % hp, oj = (qj + shift) % wp;
                    const bool padded = oi >= h || oj >= w;
                    if (padded || labels[pi * wp + pj] != labels[qi * wp + qj]) m[p * n + q] = static_cast<T>(kMaskValue);
                }
            }
        }
    }
    return Tensor<T>(Shape{nh * nwc, n, n}, std::move(mask));
}

namespace {

template <typename T>
Tensor<T> windowed_attention(const Tensor<T>& tokens, const WindowSpec& spec, const WindowAttention<T>& attn,
                             AttentionProbe<T>* probe) {
    require_tokens(tokens, "window attention");
    spec.validate();
    const auto& s = tokens.shape();
    const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
    if (C != spec.embed || C != attn.embed) {
        throw ShapeError("attention embed mismatch: tokens " + shape_str(tokens.shape()) + ", spec " +
                         std::to_string(spec.embed));
    }
    if (attn.window != spec.window || attn.heads != spec.heads) {
        throw std::invalid_argument("attention parameters were built for another window/head configuration");
    }
    const std::size_t M = spec.window, shift = spec.shift;
    const std::size_t Hp = round_up(H, M), Wp = round_up(W, M);
    const std::size_t nW = (Hp / M) * (Wp / M), N = M * M, h = spec.heads, hd = spec.head_dim();
    const bool padded = Hp != H || Wp != W;

    auto x = pad_to(tokens, Shape{B, Hp, Wp, C});
    if (shift > 0) {
        x = roll(x, 1, -static_cast<std::ptrdiff_t>(shift));
        x = roll(x, 2, -static_cast<std::ptrdiff_t>(shift));
    }
    auto windows = window_partition(x, M);  // [B*nW, N, C]
    const std::size_t Bw = B * nW;

    auto qkv = attn.qkv(windows);                     // [Bw, N, 3C]
    qkv = reshape(qkv, Shape{Bw, N, 3, h, hd});
    qkv = permute(qkv, {2, 0, 3, 1, 4});              // [3, Bw, h, N, hd]
    const Shape head_shape{Bw, h, N, hd};
    auto q = reshape(slice(qkv, 0, 0, 1), head_shape);
    auto k = reshape(slice(qkv, 0, 1, 1), head_shape);
    auto v = reshape(slice(qkv, 0, 2, 1), head_shape);

    q = mul_scalar(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
    auto logits = matmul(q, permute(k, {0, 1, 3, 2}));  // [Bw, h, N, N]
    if (attn.use_rel_bias) {
        auto bias = index_select(attn.rel_bias, 0, std::span<const std::size_t>(attn.rel_index));  // [N*N, h]
        bias = reshape(permute(bias, {1, 0}), Shape{h, N, N});
        logits = add(logits, bias);
    }
    if (shift > 0 || padded) {
        auto mask = reshape(attention_mask<T>(H, W, M, shift), Shape{nW, 1, N, N});
        logits = reshape(add(reshape(logits, Shape{B, nW, h, N, N}), mask), Shape{Bw, h, N, N});
    }
    auto probs = softmax(logits, -1);
    if (probe != nullptr) probe->probabilities = probs.detach();
    auto out = matmul(probs, v);                       // [Bw, h, N, hd]
    out = reshape(permute(out, {0, 2, 1, 3}), Shape{Bw, N, C});
    out = attn.proj(out);

    auto grid = window_reverse(out, M, Hp, Wp);
    if (shift > 0) {
        grid = roll(grid, 1, static_cast<std::ptrdiff_t>(shift));
        grid = roll(grid, 2, static_cast<std::ptrdiff_t>(shift));
    }
    return crop_to(grid, Shape{B, H, W, C});
}

}  // namespace

template <typename T>
Tensor<T> w_msa(const Tensor<T>& tokens, const WindowSpec& spec, const WindowAttention<T>& attn,
                AttentionProbe<T>* probe) {
    if (spec.shift != 0) throw std::invalid_argument("w_msa requires shift == 0");
    return windowed_attention(tokens, spec, attn, probe);
}

template <typename T>
Tensor<T> sw_msa(const Tensor<T>& tokens, const WindowSpec& spec, const WindowAttention<T>& attn,
                 AttentionProbe<T>* probe) {
    if (spec.shift != 0 && spec.shift != spec.window / 2) {
        throw std::invalid_argument("sw_msa requires shift == window / 2 (or 0)");
    }
    return windowed_attention(tokens, spec, attn, probe);
}

template <typename T>
PatchMerge<T>::PatchMerge(std::size_t channels, Rng& rng)
    : norm(4 * channels), reduction(4 * channels, 2 * channels, false, rng) {}

template <typename T>
void PatchMerge<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    norm.collect(prefix + ".norm", out);
    reduction.collect(prefix + ".reduction", out);
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& tokens, const PatchMerge<T>& merge) {
    require_tokens(tokens, "patch_merge");
    const auto& s = tokens.shape();
    const std::size_t B = s[0], C = s[3];
    if (merge.reduction.in_features() != 4 * C) {
        throw ShapeError("patch_merge built for " + std::to_string(merge.reduction.in_features() / 4) +
                         " channels, got " + shape_str(tokens.shape()));
    }
    const std::size_t Hp = round_up(s[1], 2), Wp = round_up(s[2], 2);
    auto x = pad_to(tokens, Shape{B, Hp, Wp, C});
    x = reshape(x, Shape{B, Hp / 2, 2, Wp / 2, 2, C});
    // Concatenation order (h,w): (0,0), (1,0), (0,1), (1,1).
    x = permute(x, {0, 1, 3, 4, 2, 5});
    x = reshape(x, Shape{B, Hp / 2, Wp / 2, 4 * C});
    return merge.reduction(merge.norm(x));
}

#define UKAST_INSTANTIATE_ATTN(T)                                                                          \
    template struct PatchEmbed<T>;                                                                         \
    template struct WindowAttention<T>;                                                                    \
    template struct PatchMerge<T>;                                                                         \
    template Tensor<T> patch_embed(const Tensor<T>&, const PatchEmbed<T>&);                               \
    template Tensor<T> window_partition(const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> window_reverse(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
    template Tensor<T> attention_mask<T>(std::size_t, std::size_t, std::size_t, std::size_t);             \
    template Tensor<T> w_msa(const Tensor<T>&, const WindowSpec&, const WindowAttention<T>&,              \
                             AttentionProbe<T>*);                                                          \
    template Tensor<T> sw_msa(const Tensor<T>&, const WindowSpec&, const WindowAttention<T>&,             \
                              AttentionProbe<T>*);                                                         \
    template Tensor<T> patch_merge(const Tensor<T>&, const PatchMerge<T>&);

UKAST_INSTANTIATE_ATTN(float)
UKAST_INSTANTIATE_ATTN(double)

}  // namespace ukast
