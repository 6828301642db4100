// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "test_util.hpp"
#include "ukast/attention.hpp"
#include "ukast/gradcheck.hpp"

using namespace ukast;
using ukast::testing::randn;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

WindowAttention<double> random_attention(std::size_t C, std::size_t heads, std::size_t M, bool rel_bias, Rng& rng) {
    WindowAttention<double> attn(C, heads, M, rel_bias, rng);
    for (auto* t : {&attn.qkv.weight, &attn.qkv.bias, &attn.proj.weight, &attn.proj.bias}) {
        for (auto& v : t->data_mut()) v = 0.5 * rng.normal();
    }
    if (rel_bias)
        for (auto& v : attn.rel_bias.data_mut()) v = rng.normal();
    return attn;
}

double oracle_gap(const Tensor<double>& x, const WindowSpec& spec, const WindowAttention<double>& attn) {
    const auto& s = x.shape();
    const auto got = spec.shift == 0 ? w_msa(x, spec, attn) : sw_msa(x, spec, attn);
    const auto ref = oracle::window_attention(values(x), s[0], s[1], s[2], s[3], spec, attn);
    return ukast::testing::max_abs_diff<double>(got.data(), ref);
}

// Plain multi-head attention over all H*W tokens with the same op sequence
// as the windowed path but no padding, shifting or partitioning.
Tensor<double> global_msa(const Tensor<double>& x, const WindowAttention<double>& attn) {
    const auto& s = x.shape();
    const std::size_t B = s[0], N = s[1] * s[2], C = s[3], h = attn.heads, hd = C / h;
    auto t = reshape(x, Shape{B, N, C});
    auto qkv = permute(reshape(attn.qkv(t), Shape{B, N, 3, h, hd}), {2, 0, 3, 1, 4});
    auto q = reshape(slice(qkv, 0, 0, 1), Shape{B, h, N, hd});
    auto k = reshape(slice(qkv, 0, 1, 1), Shape{B, h, N, hd});
    auto v = reshape(slice(qkv, 0, 2, 1), Shape{B, h, N, hd});
    q = mul_scalar(q, 1.0 / std::sqrt(double(hd)));
    auto p = softmax(matmul(q, permute(k, {0, 1, 3, 2})), -1);
    auto out = reshape(permute(matmul(p, v), {0, 2, 1, 3}), Shape{B, N, C});
    return reshape(attn.proj(out), s);
}

}  // namespace

TEST(PatchEmbed, SinglePatchIsFlattened) {
    Rng rng(1);
    PatchEmbed<double> pe(4, 4, 1, 16, rng);
    auto w = pe.proj.weight.data_mut();
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t o = 0; o < 16; ++o) w[i * 16 + o] = i == o ? 1.0 : 0.0;
    for (auto& b : pe.proj.bias.data_mut()) b = 0.0;
    auto image = randn({1, 1, 4, 4}, rng);
    auto tokens = patch_embed(image, pe);
    EXPECT_EQ(tokens.shape(), (Shape{1, 1, 1, 16}));
    EXPECT_TRUE(ukast::testing::bit_equal(reshape(tokens, Shape{1, 1, 4, 4}), image));
}

TEST(PatchEmbed, OddSizeIsPaddedToPatchMultiple) {
    Rng rng(2);
    PatchEmbed<double> pe(4, 4, 1, 8, rng);
    EXPECT_EQ(patch_embed(randn({1, 1, 5, 5}, rng), pe).shape(), (Shape{1, 2, 2, 8}));
}

TEST(PatchEmbed, OrthogonalProjectionReconstructs) {
    Rng rng(3);
    const std::size_t C = 2, P = 2, D = C * P * P;
    PatchEmbed<double> pe(P, P, C, D, rng);
    // Gram-Schmidt on a random matrix gives an orthogonal projection.
    std::vector<std::vector<double>> q;
    while (q.size() < D) {
        std::vector<double> v(D);
        for (auto& e : v) e = rng.normal();
        for (const auto& u : q) {
            double dot = 0;
            for (std::size_t i = 0; i < D; ++i) dot += v[i] * u[i];
            for (std::size_t i = 0; i < D; ++i) v[i] -= dot * u[i];
        }
        double n = 0;
        for (double e : v) n += e * e;
        for (auto& e : v) e /= std::sqrt(n);
        q.push_back(v);
    }
    auto w = pe.proj.weight.data_mut();
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t o = 0; o < D; ++o) w[i * D + o] = q[o][i];
    for (auto& b : pe.proj.bias.data_mut()) b = 0.0;

    auto image = randn({2, C, 6, 4}, rng);
    auto tokens = patch_embed(image, pe);  // [2,3,2,D]
    const auto tk = tokens.data();
    const auto img = image.data();
    double worst = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t ty = 0; ty < 3; ++ty)
            for (std::size_t tx = 0; tx < 2; ++tx)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < P; ++i)
                        for (std::size_t j = 0; j < P; ++j) {
                            const std::size_t f = (c * P + i) * P + j;
                            double rec = 0.0;
                            for (std::size_t o = 0; o < D; ++o) rec += tk[((b * 3 + ty) * 2 + tx) * D + o] * w[f * D + o];
                            const double orig = img[((b * C + c) * 6 + ty * P + i) * 4 + tx * P + j];
                            worst = std::max(worst, std::abs(rec - orig));
                        }
    EXPECT_LT(worst, 1e-5);
}

TEST(WindowPartition, SingleWindow) {
    Rng rng(4);
    auto w = window_partition(randn({1, 2, 2, 3}, rng), 2);
    EXPECT_EQ(w.shape(), (Shape{1, 4, 3}));
}

TEST(WindowPartition, IndexArithmetic) {
    // Token (r, c) carries the value 10 r + c.
    std::vector<double> v(16);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) v[r * 4 + c] = 10.0 * r + c;
    auto w = window_partition(Tensor<double>({1, 4, 4, 1}, v), 2);
    ASSERT_EQ(w.shape(), (Shape{4, 4, 1}));
    // Windows are row-major over the 2x2 window grid, slots row-major inside:
    // (2,3) is in window (1,1) = 3 at slot (0,1) = 1.
    EXPECT_EQ(w.at(3 * 4 + 1), 23.0);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const std::size_t win = (r / 2) * 2 + c / 2, slot = (r % 2) * 2 + c % 2;
            EXPECT_EQ(w.at(win * 4 + slot), 10.0 * r + c);
        }
    }
}

TEST(WindowPartition, RoundTrip) {
    Rng rng(5);
    auto x = randn({2, 8, 8, 3}, rng);
    EXPECT_TRUE(ukast::testing::bit_equal(window_reverse(window_partition(x, 4), 4, 8, 8), x));
    EXPECT_THROW(window_partition(x, 3), ShapeError);
}

TEST(WMsa, OneWindowEqualsGlobalAttention) {
    Rng rng(6);
    auto attn = random_attention(8, 2, 4, false, rng);
    auto x = randn({2, 4, 4, 8}, rng);
    const auto windowed = w_msa(x, WindowSpec{4, 0, 2, 8}, attn);
    EXPECT_TRUE(ukast::testing::bit_equal(windowed, global_msa(x, attn)));
}

TEST(WMsa, MatchesLoopOracle) {
    Rng rng(7);
    for (auto [grid, M] : {std::pair<std::size_t, std::size_t>{4, 2}, {8, 4}, {8, 2}}) {
        auto attn = random_attention(8, 2, M, true, rng);
        auto x = randn({2, grid, grid, 8}, rng);
        EXPECT_LT(oracle_gap(x, WindowSpec{M, 0, 2, 8}, attn), 1e-6) << grid << " " << M;
    }
}

TEST(WMsa, PaddedGridMatchesLoopOracle) {
    Rng rng(8);
    auto attn = random_attention(6, 3, 4, true, rng);
    EXPECT_LT(oracle_gap(randn({1, 5, 7, 6}, rng), WindowSpec{4, 0, 3, 6}, attn), 1e-6);
}

TEST(WMsa, IdenticalTokensGiveUniformWeights) {
    Rng rng(9);
    auto attn = random_attention(4, 2, 2, false, rng);
    Tensor<double> x({1, 4, 4, 4}, 0.3);
    AttentionProbe<double> probe;
    w_msa(x, WindowSpec{2, 0, 2, 4}, attn, &probe);
    for (double p : probe.probabilities.data()) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(WMsa, RowsSumToOne) {
    Rng rng(10);
    auto attn = random_attention(8, 2, 4, true, rng);
    AttentionProbe<double> probe;
    sw_msa(randn({2, 8, 8, 8}, rng), WindowSpec{4, 2, 2, 8}, attn, &probe);
    const auto p = probe.probabilities.data();
    for (std::size_t row = 0; row < p.size() / 16; ++row) {
        double s = 0;
        for (std::size_t j = 0; j < 16; ++j) s += p[row * 16 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(WMsa, RejectsShift) {
    Rng rng(11);
    auto attn = random_attention(4, 1, 2, true, rng);
    EXPECT_THROW(w_msa(randn({1, 4, 4, 4}, rng), WindowSpec{2, 1, 1, 4}, attn), std::invalid_argument);
}

TEST(SwMsa, MatchesLoopOracle) {
    Rng rng(12);
    for (auto [grid, M] : {std::pair<std::size_t, std::size_t>{4, 2}, {8, 4}, {8, 2}, {4, 4}}) {
        auto attn = random_attention(8, 2, M, true, rng);
        auto x = randn({2, grid, grid, 8}, rng);
        EXPECT_LT(oracle_gap(x, WindowSpec{M, M / 2, 2, 8}, attn), 1e-6) << grid << " " << M;
    }
}

TEST(SwMsa, PaddedGridMatchesLoopOracle) {
    Rng rng(13);
    auto attn = random_attention(4, 2, 4, true, rng);
    EXPECT_LT(oracle_gap(randn({1, 6, 5, 4}, rng), WindowSpec{4, 2, 2, 4}, attn), 1e-6);
}

TEST(SwMsa, ZeroShiftIsWMsa) {
    Rng rng(14);
    auto attn = random_attention(8, 2, 4, true, rng);
    auto x = randn({1, 8, 8, 8}, rng);
    const WindowSpec spec{4, 0, 2, 8};
    EXPECT_TRUE(ukast::testing::bit_equal(sw_msa(x, spec, attn), w_msa(x, spec, attn)));
}

TEST(SwMsa, OneWindowGridHasFourRegions) {
    const auto labels = shift_region_labels(4, 4, 4, 2);
    EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), 4u);

    Rng rng(15);
    auto attn = random_attention(4, 1, 4, true, rng);
    AttentionProbe<double> probe;
    sw_msa(randn({1, 4, 4, 4}, rng), WindowSpec{4, 2, 1, 4}, attn, &probe);
    const auto mask = attention_mask<double>(4, 4, 4, 2);
    const auto p = probe.probabilities.data();
    std::size_t masked = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        if (mask.at(i) != 0.0) {
            ++masked;
            EXPECT_LT(p[i], 1e-30);
        }
    }
    // 4 regions of 4 tokens: each query sees only its own 4.
    EXPECT_EQ(masked, 256u - 4u * 16u);
}

TEST(SwMsa, MaskMatchesPreShiftRegionsExhaustively) {
    struct Case {
        std::size_t h, w, M, s;
    };
    for (const Case c : {Case{4, 4, 2, 1}, Case{8, 8, 4, 2}, Case{8, 8, 2, 1}, Case{6, 5, 4, 2}, Case{5, 7, 4, 0}}) {
        const std::size_t Hp = (c.h + c.M - 1) / c.M * c.M, Wp = (c.w + c.M - 1) / c.M * c.M;
        const std::size_t nWc = Wp / c.M, N = c.M * c.M;
        const auto mask = attention_mask<double>(c.h, c.w, c.M, c.s);
        ASSERT_EQ(mask.shape(), (Shape{(Hp / c.M) * nWc, N, N}));
        for (std::size_t win = 0; win < mask.shape()[0]; ++win) {
            for (std::size_t i = 0; i < N; ++i) {
                for (std::size_t j = 0; j < N; ++j) {
                    // Slot -> shifted position -> original padded position.
                    const std::size_t sr = (win / nWc) * c.M + i / c.M, sc = (win % nWc) * c.M + i % c.M;
                    const std::size_t sr2 = (win / nWc) * c.M + j / c.M, sc2 = (win % nWc) * c.M + j % c.M;
                    const std::size_t r = (sr + c.s) % Hp, col = (sc + c.s) % Wp;
                    const std::size_t r2 = (sr2 + c.s) % Hp, col2 = (sc2 + c.s) % Wp;
                    const bool ok = oracle::allowed(r, col, r2, col2, c.h, c.w, Hp, Wp, c.M, c.s);
                    EXPECT_EQ(mask.at((win * N + i) * N + j), ok ? 0.0 : kMaskValue)
                        << c.h << "x" << c.w << " M" << c.M << " s" << c.s << " win " << win << " " << i << "," << j;
                }
            }
        }
    }
}

TEST(SwMsa, RejectsOtherShifts) {
    Rng rng(16);
    auto attn = random_attention(4, 1, 4, true, rng);
    EXPECT_THROW(sw_msa(randn({1, 8, 8, 4}, rng), WindowSpec{4, 1, 1, 4}, attn), std::invalid_argument);
}

TEST(PatchMerge, Shapes) {
    Rng rng(17);
    PatchMerge<double> merge(3, rng);
    EXPECT_EQ(patch_merge(randn({1, 2, 2, 3}, rng), merge).shape(), (Shape{1, 1, 1, 6}));
    auto y = patch_merge(randn({2, 8, 4, 3}, rng), merge);
    EXPECT_EQ(y.shape(), (Shape{2, 4, 2, 6}));
    EXPECT_EQ(y.numel() / 6, (2u * 8 * 4) / 4);
    EXPECT_EQ(patch_merge(randn({1, 5, 3, 3}, rng), merge).shape(), (Shape{1, 3, 2, 6}));
}

TEST(PatchMerge, ConcatenationOrder) {
    Rng rng(18);
    const std::size_t C = 2;
    PatchMerge<double> merge(C, rng);
    auto x = randn({1, 2, 2, C}, rng);
    const auto y = patch_merge(x, merge);
    // (h, w) order (0,0), (1,0), (0,1), (1,1), then layer norm and reduction.
    std::vector<double> cat;
    for (auto [dh, dw] : {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}})
        for (std::size_t c = 0; c < C; ++c) cat.push_back(x.at((dh * 2 + dw) * C + c));
    double mean = 0, var = 0;
    for (double v : cat) mean += v / cat.size();
    for (double v : cat) var += (v - mean) * (v - mean) / cat.size();
    const auto w = merge.reduction.weight.data();
    for (std::size_t o = 0; o < 2 * C; ++o) {
        double acc = 0;
        for (std::size_t i = 0; i < 4 * C; ++i) acc += (cat[i] - mean) / std::sqrt(var + 1e-5) * w[i * 2 * C + o];
        EXPECT_NEAR(y.at(o), acc, 1e-12);
    }
}

TEST(Attention, Gradcheck) {
    for (const auto& r : run_gradcheck_suite("attention")) EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
}
