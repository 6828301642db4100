// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written with plain loops. None of them calls
// the tensor ops they are compared against.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ukast/attention.hpp"
#include "ukast/data.hpp"
#include "ukast/grkan.hpp"
#include "ukast/rational.hpp"

namespace ukast::oracle {

/// Pre-shift region of row r in a padded extent of `n` for window M and
/// shift s: tokens that wrap around (r < s), tokens that end up in the last
/// window without wrapping (r >= n - M + s), and the rest.
inline int band(std::size_t r, std::size_t n, std::size_t M, std::size_t s) {
    if (s == 0) return 0;
    if (r < s) return 2;
    if (r >= n - M + s) return 1;
    return 0;
}

/// May the query at padded position (r, c) attend to the key at (r2, c2)?
/// Both must share a window after the cyclic shift, come from the same
/// pre-shift region, and the key must be a real token.
inline bool allowed(std::size_t r, std::size_t c, std::size_t r2, std::size_t c2, std::size_t H, std::size_t W,
                    std::size_t Hp, std::size_t Wp, std::size_t M, std::size_t s) {
    if (r2 >= H || c2 >= W) return false;
    const std::size_t sr = (r + Hp - s) % Hp, sc = (c + Wp - s) % Wp;
    const std::size_t sr2 = (r2 + Hp - s) % Hp, sc2 = (c2 + Wp - s) % Wp;
    if (sr / M != sr2 / M || sc / M != sc2 / M) return false;
    return band(r, Hp, M, s) == band(r2, Hp, M, s) && band(c, Wp, M, s) == band(c2, Wp, M, s);
}

/// Windowed multi-head attention on tokens [B,H,W,C], one query at a time.
/// `weights`, if given, receives softmax weights [B,H,W,heads,Hp,Wp] over
/// every padded key position (0 for disallowed keys).
inline std::vector<double> window_attention(const std::vector<double>& x, std::size_t B, std::size_t H, std::size_t W,
                                            std::size_t C, const WindowSpec& spec,
                                            const WindowAttention<double>& attn,
                                            std::vector<double>* weights = nullptr) {
    const std::size_t M = spec.window, s = spec.shift, h = spec.heads, hd = C / h;
    const std::size_t Hp = (H + M - 1) / M * M, Wp = (W + M - 1) / M * M;
    const auto wq = attn.qkv.weight.data(), bq = attn.qkv.bias.data();
    const auto wp = attn.proj.weight.data(), bp = attn.proj.bias.data();
    const double scale = 1.0 / std::sqrt(double(hd));

    auto token = [&](std::size_t b, std::size_t r, std::size_t c) {
        std::vector<double> t(C, 0.0);
        if (r < H && c < W)
            for (std::size_t i = 0; i < C; ++i) t[i] = x[((b * H + r) * W + c) * C + i];
        return t;
    };
    // part 0/1/2 = q/k/v, column part*C + head*hd + d.
    auto project = [&](const std::vector<double>& t, std::size_t part, std::size_t head) {
        std::vector<double> out(hd);
        for (std::size_t d = 0; d < hd; ++d) {
            const std::size_t col = part * C + head * hd + d;
            double acc = bq[col];
            for (std::size_t i = 0; i < C; ++i) acc += t[i] * wq[i * 3 * C + col];
            out[d] = acc;
        }
        return out;
    };

    std::vector<double> out(B * H * W * C, 0.0);
    if (weights != nullptr) weights->assign(B * H * W * h * Hp * Wp, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                std::vector<double> concat(C, 0.0);
                for (std::size_t head = 0; head < h; ++head) {
                    const auto q = project(token(b, r, c), 0, head);
                    std::vector<double> logits(Hp * Wp, -std::numeric_limits<double>::infinity());
                    double mx = -std::numeric_limits<double>::infinity();
                    for (std::size_t r2 = 0; r2 < Hp; ++r2) {
                        for (std::size_t c2 = 0; c2 < Wp; ++c2) {
                            if (!allowed(r, c, r2, c2, H, W, Hp, Wp, M, s)) continue;
                            const auto k = project(token(b, r2, c2), 1, head);
                            double l = 0.0;
                            for (std::size_t d = 0; d < hd; ++d) l += q[d] * scale * k[d];
                            if (attn.use_rel_bias) {
                                const long dy = long((r + Hp - s) % Hp % M) - long((r2 + Hp - s) % Hp % M);
                                const long dx = long((c + Wp - s) % Wp % M) - long((c2 + Wp - s) % Wp % M);
                                const std::size_t idx = std::size_t((dy + long(M) - 1) * long(2 * M - 1) + dx + long(M) - 1);
                                l += attn.rel_bias.data()[idx * h + head];
                            }
                            logits[r2 * Wp + c2] = l;
                            mx = std::max(mx, l);
                        }
                    }
                    double z = 0.0;
                    for (auto& l : logits) {
                        l = std::isinf(l) ? 0.0 : std::exp(l - mx);
                        z += l;
                    }
                    for (std::size_t j = 0; j < Hp * Wp; ++j) {
                        const double p = logits[j] / z;
                        if (weights != nullptr) (*weights)[(((b * H + r) * W + c) * h + head) * Hp * Wp + j] = p;
                        if (p == 0.0) continue;
                        const auto v = project(token(b, j / Wp, j % Wp), 2, head);
                        for (std::size_t d = 0; d < hd; ++d) concat[head * hd + d] += p * v[d];
                    }
                }
                for (std::size_t o = 0; o < C; ++o) {
                    double acc = bp[o];
                    for (std::size_t i = 0; i < C; ++i) acc += concat[i] * wp[i * C + o];
                    out[((b * H + r) * W + c) * C + o] = acc;
                }
            }
        }
    }
    return out;
}

/// GR-KAN layer on rows of x [rows, d_in]: channel c uses group c * g / d_in.
inline std::vector<double> grkan_layer(const std::vector<double>& x, std::size_t rows, const GrKanLayer<double>& layer) {
    const std::size_t din = layer.d_in(), dout = layer.d_out(), g = layer.groups();
    std::vector<RationalParams> fns(g);
    for (std::size_t k = 0; k < g; ++k) {
        const auto a = layer.numerators()[k].data();
        fns[k].a.assign(a.begin(), a.end());
        if (k < layer.denominators().size()) {
            const auto bb = layer.denominators()[k].data();
            fns[k].b.assign(bb.begin(), bb.end());
        }
        fns[k].w = 1.0;
    }
    const auto w = layer.linear().weight.data();
    const auto bias = layer.linear().bias.data();
    std::vector<double> out(rows * dout);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> phi(din);
        for (std::size_t c = 0; c < din; ++c) phi[c] = pau_value(x[r * din + c], fns[c * g / din]);
        for (std::size_t o = 0; o < dout; ++o) {
            double acc = bias[o];
            for (std::size_t c = 0; c < din; ++c) acc += phi[c] * w[c * dout + o];
            out[r * dout + o] = acc;
        }
    }
    return out;
}

struct DiceCe {
    double total, dice, ce;
};

/// 0.5 (1 - mean_c (2 I_c + eps) / (S_c + eps)) + 0.5 mean pixel CE, with
/// I_c and S_c pooled over the batch. logits [B,K,H,W].
inline DiceCe dice_ce(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels, std::size_t B,
                      std::size_t K, std::size_t HW, double eps) {
    std::vector<double> inter(K, 0.0), denom(K, 0.0);
    double ce = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < HW; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, logits[(b * K + k) * HW + p]);
            double z = 0.0;
            for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[(b * K + k) * HW + p] - mx);
            const std::size_t y = labels[b * HW + p];
            for (std::size_t k = 0; k < K; ++k) {
                const double prob = std::exp(logits[(b * K + k) * HW + p] - mx) / z;
                denom[k] += prob + (k == y ? 1.0 : 0.0);
                if (k == y) inter[k] += prob;
            }
            ce -= logits[(b * K + y) * HW + p] - mx - std::log(z);
        }
    }
    double dice = 0.0;
    for (std::size_t k = 0; k < K; ++k) dice += (2.0 * inter[k] + eps) / (denom[k] + eps);
    DiceCe r;
    r.dice = 1.0 - dice / double(K);
    r.ce = ce / double(B * HW);
    r.total = 0.5 * r.dice + 0.5 * r.ce;
    return r;
}

/// Tiles are placed every `stride` pixels; if the last one stops short of the
/// border, one more tile is flush with it.
inline std::vector<std::uint32_t> coverage(std::size_t H, std::size_t W, std::size_t tile, std::size_t stride) {
    auto origins = [&](std::size_t extent) {
        std::vector<std::size_t> o;
        if (tile >= extent) return std::vector<std::size_t>{0};
        std::size_t p = 0;
        for (; p + tile <= extent; p += stride) o.push_back(p);
        if (o.back() + tile < extent) o.push_back(extent - tile);
        return o;
    };
    std::vector<std::uint32_t> cover(H * W, 0);
    for (auto y0 : origins(H))
        for (auto x0 : origins(W))
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    if (y >= y0 && y < y0 + std::min(tile, H) && x >= x0 && x < x0 + std::min(tile, W)) ++cover[y * W + x];
    return cover;
}

struct PauFuzzStats {
    std::size_t samples = 0;
    std::size_t non_finite = 0;
    std::size_t denominator_below_one = 0;
    std::size_t poles_of_unsafe_form = 0;  // |1 + Q(x)| < 1e-9: where P / (1 + Q) would blow up
    std::size_t roots_of_q = 0;            // |Q(x)| < 1e-9 with x != 0
    std::size_t huge_inputs = 0;           // |x| >= 1e5
};

/// Random coefficients and inputs, a quarter of them placed exactly on a root
/// of 1 + Q or Q. Values, all partials and the float tensor path must be finite.
inline PauFuzzStats fuzz_pau(std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    PauFuzzStats st;
    std::vector<float> xs;
    std::vector<RationalParams> ps;
    for (std::size_t i = 0; i < samples; ++i) {
        RationalParams p = RationalParams::zero();
        const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
        for (auto& v : p.a) v = scale * rng.normal();
        for (auto& v : p.b) v = scale * rng.normal();
        p.w = rng.normal();
        double x = 0.0;
        switch (i % 4) {
            case 0:
                x = 3.0 * rng.normal();
                break;
            case 1: {
                const double mag = std::pow(10.0, rng.uniform(-6.0, 6.0));
                x = rng.bernoulli(0.5) ? mag : -mag;
                break;
            }
            case 2: {  // choose b1 so that Q(x) = -1 (or 0) exactly at x
                x = rng.normal();
                if (std::abs(x) < 1e-3) x = 0.5;
                const double target = rng.bernoulli(0.5) ? -1.0 : 0.0;
                double rest = 0.0, xp = x * x;
                for (std::size_t k = 1; k < p.b.size(); ++k, xp *= x) rest += p.b[k] * xp;
                p.b[0] = (target - rest) / x;
                break;
            }
            default:
                x = (i % 8 == 3) ? 0.0 : (rng.bernoulli(0.5) ? 1e6 : -1e6);
        }
        const auto t = rational_terms(x, p.a, p.b);
        const double denom = 1.0 + std::abs(t.q);
        const double y = pau_value(x, p);
        const auto g = pau_backward(x, p);
        bool finite = std::isfinite(y) && std::isfinite(g.dx) && std::isfinite(g.dw);
        for (double v : g.da) finite = finite && std::isfinite(v);
        for (double v : g.db) finite = finite && std::isfinite(v);
        ++st.samples;
        st.non_finite += finite ? 0 : 1;
        st.denominator_below_one += denom >= 1.0 ? 0 : 1;
        st.poles_of_unsafe_form += std::abs(1.0 + t.q) < 1e-9 ? 1 : 0;
        st.roots_of_q += (std::abs(t.q) < 1e-9 && x != 0.0) ? 1 : 0;
        st.huge_inputs += std::abs(x) >= 1e5 ? 1 : 0;
        if (i % 64 == 0) {
            xs.push_back(static_cast<float>(x));
            ps.push_back(p);
        }
    }
    // Float tensor path, one unit per sampled coefficient set.
    for (std::size_t i = 0; i < xs.size(); ++i) {
        RationalUnit<float> unit(ps[i]);
        Tensor<float> xt(Shape{1}, std::vector<float>{xs[i]});
        const float y = pau_forward(xt, unit).item();
        st.non_finite += std::isfinite(y) ? 0 : 1;
    }
    return st;
}

/// out[i][j] = in[j][w-1-i] per quarter turn, applied k times.
template <typename V>
std::vector<V> rotate_ccw(std::vector<V> x, std::size_t c, std::size_t h, std::size_t w, int k) {
    for (int t = 0; t < ((k % 4) + 4) % 4; ++t) {
        std::vector<V> out(x.size());
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < h; ++j) out[(ch * w + i) * h + j] = x[(ch * h + j) * w + (w - 1 - i)];
        x = std::move(out);
        std::swap(h, w);
    }
    return x;
}

}  // namespace ukast::oracle
