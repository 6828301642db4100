// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "ukast/gradcheck.hpp"
#include "ukast/model.hpp"
#include "ukast/train.hpp"

using namespace ukast;
using ukast::testing::randn;

namespace {

bool ends_with(const std::string& s, const std::string& tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

Tensor<float> random_images(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data_mut()) v = float(rng.normal());
    return t;
}

double max_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(double(a.at(i)) - b.at(i)));
    return worst;
}

}  // namespace

TEST(RcBlock, ZeroConvIsIdentity) {
    Rng rng(1);
    RcBlock<double> rc(4, rng);
    for (auto& v : rc.conv.weight.data_mut()) v = 0.0;
    auto z = randn({2, 3, 5, 4}, rng);
    EXPECT_TRUE(ukast::testing::bit_equal(rc_block(z, rc), z));
}

TEST(RcBlock, AddsNonNegativeCorrection) {
    Rng rng(2);
    RcBlock<double> rc(3, rng);
    auto z = randn({1, 4, 4, 3}, rng);
    const auto y = rc_block(z, rc);
    for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_GE(y.at(i) - z.at(i), -1e-15);
}

TEST(BlockPair, ZeroedSublayersAreIdentity) {
    for (bool rc : {false, true}) {
        for (FfnKind kind : {FfnKind::mlp, FfnKind::grkan}) {
            Rng rng(3);
            ModelConfig cfg = tiny_config();
            StageConfig st{1, 16, 2, 4, kind, rc};
            BlockPair<double> pair(st, cfg, rng);
            ParamSet<double> ps;
            pair.collect("a", "b", ps);
            for (const auto& p : ps.entries()) {
                const bool zero = p.name.find("attn.proj") != std::string::npos ||
                                  p.name.find("ffn.linear2") != std::string::npos ||
                                  (p.name.find(".rc.conv") != std::string::npos);
                auto t = p.tensor;
                if (zero)
                    for (auto& v : t.data_mut()) v = 0.0;
            }
            auto z = randn({1, 8, 8, 16}, rng);
            EXPECT_TRUE(ukast::testing::bit_equal(swin_kan_block_pair(z, pair), z)) << rc << " " << int(kind);
        }
    }
}

TEST(BlockPair, RegistersTwoBlocks) {
    Rng rng(4);
    BlockPair<double> pair(StageConfig{1, 16, 2, 4, FfnKind::grkan, true}, tiny_config(), rng);
    ParamSet<double> ps;
    pair.collect("stage0.block0", "stage0.block1", ps);
    EXPECT_NE(ps.find("stage0.block0.rc.conv.weight"), nullptr);
    EXPECT_NE(ps.find("stage0.block0.attn.qkv.weight"), nullptr);
    EXPECT_NE(ps.find("stage0.block1.ffn.rational2.g0.b"), nullptr);
    EXPECT_EQ(ps.find("stage0.block1.rc.conv.weight"), nullptr);
    EXPECT_EQ(pair.shifted.spec.shift, 2u);
    EXPECT_EQ(pair.regular.spec.shift, 0u);
}

TEST(BlockPair, Gradcheck) {
    for (const auto& r : run_gradcheck_suite("block")) EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
}

TEST(DecoderStage, SkipEntersAfterUpsampledChannels) {
    Rng rng(5);
    DecoderStage<double> stage(8, 4, 6, 2, 1, rng);
    // Zero the conv taps reading the skip channels (inputs 6..9).
    auto w = stage.blocks[0].conv.weight.data_mut();
    for (std::size_t o = 0; o < 6; ++o)
        for (std::size_t i = 6; i < 10; ++i)
            for (std::size_t k = 0; k < 9; ++k) w[(o * 10 + i) * 9 + k] = 0.0;
    auto deep = randn({2, 8, 3, 3}, rng);
    const auto a = decoder_stage(deep, randn({2, 4, 6, 6}, rng), stage, false);
    const auto b = decoder_stage(deep, randn({2, 4, 6, 6}, rng), stage, false);
    EXPECT_EQ(a.shape(), (Shape{2, 6, 6, 6}));
    EXPECT_TRUE(ukast::testing::bit_equal(a, b));
    EXPECT_THROW(decoder_stage(deep, randn({2, 4, 5, 6}, rng), stage, false), ShapeError);
}

TEST(Model, OutputShapeAndPadding) {
    Model<float> model(desk_config(), 1);
    EXPECT_EQ(model.forward(random_images({1, 1, 64, 64}, 2), false).shape(), (Shape{1, 2, 64, 64}));
    Model<float> tiny(tiny_config(), 1);
    EXPECT_EQ(tiny.forward(random_images({2, 1, 30, 37}, 3), false).shape(), (Shape{2, 2, 30, 37}));
    EXPECT_THROW(tiny.forward(random_images({1, 3, 32, 32}, 3), false), ShapeError);
}

TEST(Model, EncoderSkipsHalveResolution) {
    Model<float> model(tiny_config(), 1);
    const auto skips = model.encode(random_images({1, 1, 32, 32}, 4), false);
    ASSERT_EQ(skips.size(), 3u);
    EXPECT_EQ(skips[0].shape(), (Shape{1, 16, 16, 16}));
    EXPECT_EQ(skips[1].shape(), (Shape{1, 32, 8, 8}));
    EXPECT_EQ(skips[2].shape(), (Shape{1, 64, 4, 4}));
}

TEST(Model, AllVariantsRun) {
    for (const auto& row : variant_names()) {
        Model<float> model(make_variant(row, tiny_config()), 7);
        const auto y = model.forward(random_images({1, 1, 32, 32}, 5), false);
        EXPECT_EQ(y.shape(), (Shape{1, 2, 32, 32})) << row;
        for (float v : y.data()) ASSERT_TRUE(std::isfinite(v)) << row;
    }
}

TEST(Model, DeterministicForSeed) {
    const auto x = random_images({1, 1, 32, 32}, 6);
    Model<float> a(tiny_config(), 9), b(tiny_config(), 9), c(tiny_config(), 10);
    EXPECT_TRUE(ukast::testing::bit_equal(a.forward(x, false), b.forward(x, false)));
    EXPECT_GT(max_diff(a.forward(x, false), c.forward(x, false)), 0.0);
}

TEST(Model, GrKanInitTracksMlpCounterpart) {
    // Same seed draws the same linear weights; the rational pair starts as
    // identity then a gelu fit, so only the fit error separates the rows.
    const auto x = random_images({1, 1, 32, 32}, 7);
    Model<float> mlp(make_variant("swin+mlp+rc", tiny_config()), 21);
    Model<float> kan(make_variant("swin+grkan+rc", tiny_config()), 21);
    const double gap = max_diff(mlp.forward(x, false), kan.forward(x, false));
    EXPECT_LT(gap, 1e-2);
}

TEST(Model, SingleSampleOverfit) {
    ModelConfig cfg = tiny_config();
    Model<float> model(cfg, 11);
    const auto x = random_images({1, 1, 32, 32}, 8);
    std::vector<std::uint8_t> labels(32 * 32);
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c) labels[r * 32 + c] = (r - 16.0) * (r - 16.0) + (c - 12.0) * (c - 12.0) < 64;
    AdamW<float> opt(model.params().trainable(), AdamWOptions{});
    double first = 0.0;
    for (int step = 0; step < 50; ++step) {
        Tape<float> tape;
        Tensor<float> loss;
        {
            Tape<float>::Scope scope(tape);
            model.params().zero_grad();
            loss = dice_ce_loss(model.forward(x, true), labels, 2);
        }
        tape.backward(loss);
        opt.step(2e-3);
        if (step == 0) first = loss.at(0);
    }
    const double last = dice_ce_loss(model.forward(x, true), labels, 2).at(0);
    EXPECT_LT(last, first / 10) << first << " -> " << last;
    std::cout << "overfit loss " << first << " -> " << last << "\n";
}

TEST(Variants, RowsAndAliases) {
    const auto base = tiny_config();
    const auto ukast = make_variant("ukast", base);
    EXPECT_EQ(ukast.name, "swin+grkan+rc");
    for (const auto& s : ukast.stages) {
        EXPECT_EQ(s.ffn_kind, FfnKind::grkan);
        EXPECT_TRUE(s.rc_enabled);
    }
    const auto swin = make_variant("swin+mlp", base);
    for (const auto& s : swin.stages) {
        EXPECT_EQ(s.ffn_kind, FfnKind::mlp);
        EXPECT_FALSE(s.rc_enabled);
    }
    const auto ukat = make_variant("ukat", base);
    EXPECT_EQ(ukat.name, "vit+grkan");
    EXPECT_EQ(ukat.encoder, EncoderKind::vit);
    ASSERT_EQ(ukat.stages.size(), 1u);
    EXPECT_EQ(ukat.patch, 8u);
    EXPECT_EQ(ukat.levels, 3u);
    EXPECT_EQ(make_variant("unetr", base).name, "vit+mlp");
    EXPECT_EQ(make_variant("swinunetr", base).name, "swin+mlp+rc");
    EXPECT_EQ(variant_names().size(), 6u);
}

TEST(Variants, InvalidRowsAreRejected) {
    const auto base = tiny_config();
    EXPECT_THROW(make_variant("vit+grkan+rc", base), std::invalid_argument);
    EXPECT_THROW(make_variant("swin", base), std::invalid_argument);
    EXPECT_THROW(make_variant("swin+vit+mlp", base), std::invalid_argument);
    EXPECT_THROW(make_variant("swin+kan", base), std::invalid_argument);
    EXPECT_THROW(make_variant("ukast", make_variant("ukat", base)), std::invalid_argument);
}

TEST(ModelConfig, TextRoundTrip) {
    for (const auto& cfg : {desk_config(), tiny_config(), make_variant("vit+mlp", tiny_config())}) {
        const auto back = ModelConfig::from_map(cfg.to_map(), ModelConfig{});
        EXPECT_EQ(back.to_text(), cfg.to_text());
    }
}

TEST(ModelConfig, ValidationErrors) {
    auto cfg = tiny_config();
    cfg.stages[1].embed = 30;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.groups = 3;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.stages.resize(1);
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ModelConfig, DeskParameterNames) {
    Model<float> model(desk_config(), 0);
    const auto& ps = model.params();
    EXPECT_NE(ps.find("embed.proj.weight"), nullptr);
    EXPECT_NE(ps.find("stage3.block1.ffn.rational1.g7.a"), nullptr);
    EXPECT_NE(ps.find("stage2.merge.reduction.weight"), nullptr);
    EXPECT_EQ(ps.find("stage3.merge.reduction.weight"), nullptr);
    EXPECT_NE(ps.find("head.weight"), nullptr);
    std::size_t rel = 0;
    for (const auto& p : ps.entries())
        if (ends_with(p.name, "rel_bias")) {
            ++rel;
            EXPECT_FALSE(p.decays());
        }
    EXPECT_EQ(rel, 8u);
}

TEST(Model, EveryTrainableTensorReceivesGradient) {
    for (const auto& row : variant_names()) {
        Model<float> model(make_variant(row, tiny_config()), 12);
        const auto x = random_images({2, 1, 32, 32}, 13);
        Rng rng(14);
        std::vector<std::uint8_t> labels(2 * 32 * 32);
        for (auto& l : labels) l = std::uint8_t(rng.below(2));
        Tape<float> tape;
        Tensor<float> loss;
        {
            Tape<float>::Scope scope(tape);
            loss = dice_ce_loss(model.forward(x, true), labels, 2);
        }
        tape.backward(loss);
        for (const auto& p : model.params().trainable()) {
            const auto g = p.tensor.grad();
            ASSERT_EQ(g.size(), p.tensor.numel()) << row << " " << p.name;
            double norm = 0.0;
            for (float v : g) norm += double(v) * v;
            EXPECT_TRUE(std::isfinite(norm)) << row << " " << p.name;
            EXPECT_GT(norm, 0.0) << row << " " << p.name;
        }
    }
}

TEST(Model, DecoderNamesSharedAcrossEncoders) {
    Model<float> vit(make_variant("vit+mlp", tiny_config()), 0);
    Model<float> swin(make_variant("swin+mlp", tiny_config()), 0);
    std::size_t shared = 0;
    for (const auto& p : swin.params().entries()) {
        if (p.name.rfind("decoder.", 0) != 0 && p.name.rfind("head.", 0) != 0) continue;
        const auto* q = vit.params().find(p.name);
        ASSERT_NE(q, nullptr) << p.name;
        EXPECT_EQ(q->tensor.shape(), p.tensor.shape()) << p.name;
        ++shared;
    }
    EXPECT_GT(shared, 10u);
}

TEST(Model, FiniteLossForAllNamedVariants) {
    std::vector<std::string> rows = variant_names();
    rows.push_back("ukat");
    rows.push_back("ukast");
    ASSERT_EQ(rows.size(), 8u);
    const auto x = random_images({2, 1, 32, 32}, 15);
    std::vector<std::uint8_t> labels(2 * 32 * 32);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 == 0;
    for (const auto& row : rows) {
        Model<float> model(make_variant(row, tiny_config()), 16);
        EXPECT_TRUE(std::isfinite(dice_ce_loss(model.forward(x, true), labels, 2).at(0))) << row;
    }
}
