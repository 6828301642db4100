// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ukast/attention.hpp"
#include "ukast/grkan.hpp"
#include "ukast/model.hpp"
#include "ukast/nn_ops.hpp"
#include "ukast/ops.hpp"
#include "ukast/rational.hpp"
#include "ukast/train.hpp"

namespace ukast {

namespace {

// Gradients with a smaller norm are compared absolutely. A bias followed by a
// normalisation has an exactly zero gradient, and the ratio of two roundoff
// terms is meaningless.
constexpr double kAbsFloor = 1e-3;

double weighted_sum(const Tensor<double>& out, const std::vector<double>& r) {
    const auto d = out.data();
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * r[i];
    return s;
}

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_entries, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (max_entries == 0 || max_entries >= n) return idx;
    for (std::size_t i = 0; i < max_entries; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(max_entries);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport check_gradients(const std::string& name, const std::function<Tensor<double>()>& f,
                                std::vector<std::pair<std::string, Tensor<double>>> wrt, double tolerance,
                                const GradCheckOptions& options) {
    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;
    Rng rng(options.seed);

    const auto shape = f().shape();
    std::vector<double> r(shape_numel(shape));
    for (auto& v : r) v = rng.normal();
    const Tensor<double> weights(shape, r);

    for (auto& [n, t] : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        const auto out = f();
        tape.backward(sum_all(mul(out, weights)));
    }

    const double h = options.step;
    for (auto& [n, t] : wrt) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        const auto idx = probe_indices(t.numel(), options.max_entries, rng);
        for (auto i : idx) {
            auto data = t.data_mut();
            const double orig = data[i];
            data[i] = orig + h;
            const double lp = weighted_sum(f(), r);
            data[i] = orig - h;
            const double lm = weighted_sum(f(), r);
            data[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), kAbsFloor});
        report.inputs.push_back(GradCheckInput{n, err, idx.size()});
        report.max_error = std::max(report.max_error, err);
        t.zero_grad();
    }
    report.passed = report.max_error < tolerance && std::isfinite(report.max_error);
    return report;
}

std::vector<std::string> gradcheck_scopes() {
    return {"elementwise", "matmul", "softmax", "layer_norm", "rational", "grkan",
            "conv",        "deconv", "attention", "block",     "loss"};
}

namespace {

using T = double;
using Wrt = std::vector<std::pair<std::string, Tensor<T>>>;

constexpr double kTol = 1e-4;
constexpr double kCompositeTol = 1e-3;

Tensor<T> randn(Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor<T>(std::move(shape), std::move(v));
}

Tensor<T> rand_positive(Shape shape, Rng& rng) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(0.5, 2.0);
    return Tensor<T>(std::move(shape), std::move(v));
}

Wrt params_of(const ParamSet<T>& ps) {
    Wrt out;
    for (const auto& p : ps.entries())
        if (p.trainable()) out.emplace_back(p.name, p.tensor);
    return out;
}

Wrt with_input(Wrt params, const std::string& name, const Tensor<T>& x) {
    params.emplace(params.begin(), name, x);
    return params;
}

void elementwise(std::vector<GradCheckReport>& out, Rng& rng) {
    auto x = randn({3, 4}, rng), y = randn({4}, rng), p = rand_positive({3, 4}, rng);
    out.push_back(check_gradients("add (broadcast)", [=] { return add(x, y); }, {{"x", x}, {"y", y}}, kTol));
    out.push_back(check_gradients("sub (broadcast)", [=] { return sub(x, y); }, {{"x", x}, {"y", y}}, kTol));
    out.push_back(check_gradients("mul (broadcast)", [=] { return mul(x, y); }, {{"x", x}, {"y", y}}, kTol));
    out.push_back(check_gradients("div", [=] { return div(x, p); }, {{"x", x}, {"p", p}}, kTol));
    out.push_back(check_gradients("scalar ops", [=] { return add_scalar(mul_scalar(x, 1.7), -0.3); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("neg/abs", [=] { return add(neg(x), abs(x)); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("exp", [=] { return exp(x); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("log", [=] { return log(p); }, {{"p", p}}, kTol));
    out.push_back(check_gradients("sqrt", [=] { return sqrt(p); }, {{"p", p}}, kTol));
    out.push_back(check_gradients("tanh", [=] { return tanh(x); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("relu", [=] { return relu(x); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("gelu", [=] { return gelu(x); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("sum/mean axes", [=] { return add(sum(x, {0}), mean(x, {0})); }, {{"x", x}}, kTol));
    auto z = randn({2, 3, 4}, rng);
    out.push_back(check_gradients("reshape/permute/slice", [=] {
        return slice(permute(reshape(z, Shape{6, 4}), {1, 0}), 1, 1, 3);
    }, {{"z", z}}, kTol));
    const std::vector<std::size_t> pick{2, 0, 2, 1};
    out.push_back(check_gradients("roll/index_select/concat", [=] {
        auto r = roll(z, 2, -1);
        return concat(std::vector<Tensor<T>>{index_select(r, 1, std::span<const std::size_t>(pick)), z}, 1);
    }, {{"z", z}}, kTol));
    out.push_back(check_gradients("pad/crop", [=] { return crop_to(pad_to(z, Shape{3, 4, 5}), Shape{2, 2, 3}); },
                                  {{"z", z}}, kTol));
}

void matmuls(std::vector<GradCheckReport>& out, Rng& rng) {
    auto a = randn({3, 5}, rng), b = randn({5, 4}, rng);
    out.push_back(check_gradients("matmul 2d", [=] { return matmul(a, b); }, {{"a", a}, {"b", b}}, kTol));
    auto ba = randn({2, 3, 3, 5}, rng), bb = randn({3, 5, 2}, rng);
    out.push_back(check_gradients("matmul batched", [=] { return matmul(ba, bb); }, {{"a", ba}, {"b", bb}}, kTol));
    auto c = randn({2, 3, 5}, rng);
    out.push_back(check_gradients("matmul folded", [=] { return matmul(c, b); }, {{"a", c}, {"b", b}}, kTol));
}

void softmaxes(std::vector<GradCheckReport>& out, Rng& rng) {
    auto x = randn({2, 3, 5}, rng);
    out.push_back(check_gradients("softmax", [=] { return softmax(x, -1); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("softmax axis 1", [=] { return softmax(x, 1); }, {{"x", x}}, kTol));
    out.push_back(check_gradients("log_softmax", [=] { return log_softmax(x, 1); }, {{"x", x}}, kTol));
}

void layer_norms(std::vector<GradCheckReport>& out, Rng& rng) {
    auto x = randn({4, 6}, rng), g = randn({6}, rng), b = randn({6}, rng);
    out.push_back(check_gradients("layer_norm", [=] { return layer_norm(x, g, b, -1); },
                                  {{"x", x}, {"gamma", g}, {"beta", b}}, kTol));
    auto y = randn({2, 3, 4}, rng);
    out.push_back(check_gradients("layer_norm plain", [=] { return layer_norm(y, Tensor<T>(), Tensor<T>(), -1); },
                                  {{"x", y}}, kTol));
}

void rationals(std::vector<GradCheckReport>& out, Rng& rng) {
    RationalParams p = RationalParams::identity();
    for (auto& v : p.a) v += 0.3 * rng.normal();
    for (auto& v : p.b) v = 0.5 * rng.normal();
    p.w = 1.3;
    RationalUnit<T> unit(p);
    auto x = randn({5, 7}, rng, 1.5);
    out.push_back(check_gradients("pau", [=] { return pau_forward(x, unit); },
                                  {{"x", x}, {"a", unit.a}, {"b", unit.b}, {"w", unit.w}}, kTol));
    std::vector<Tensor<T>> as, bs;
    for (int g = 0; g < 2; ++g) {
        as.push_back(randn({4}, rng, 0.5));
        bs.push_back(randn({4}, rng, 0.5));
    }
    auto xg = randn({3, 6}, rng, 1.5);
    Wrt wrt{{"x", xg}};
    for (int g = 0; g < 2; ++g) {
        wrt.emplace_back("a" + std::to_string(g), as[g]);
        wrt.emplace_back("b" + std::to_string(g), bs[g]);
    }
    out.push_back(check_gradients("group_rational", [=] {
        return group_rational(xg, std::span<const Tensor<T>>(as), std::span<const Tensor<T>>(bs));
    }, wrt, kTol));
}

// Identity-initialised denominators sit on the |Q| kink; move off it.
void offset_denominators(const ParamSet<T>& ps, Rng& rng) {
    for (const auto& p : ps.entries()) {
        if (p.kind != ParamKind::rational || p.name.back() != 'b') continue;
        auto t = p.tensor;
        for (auto& v : t.data_mut()) v += T(0.3 * rng.normal());
    }
}

void grkans(std::vector<GradCheckReport>& out, Rng& rng) {
    RationalParams p = RationalParams::identity();
    p.b = {0.2, -0.1, 0.05, 0.1};
    GrKanLayer<T> layer(8, 6, 4, p, rng);
    ParamSet<T> ps;
    layer.collect("r", "l", ps);
    auto x = randn({3, 8}, rng);
    out.push_back(check_gradients("grkan layer", [=] { return layer(x); }, with_input(params_of(ps), "x", x), kTol));

    auto ffn = std::make_shared<GrKanFfn<T>>(8, 4, 4, 3, 4, rng);
    ParamSet<T> fs;
    ffn->collect("ffn", fs);
    offset_denominators(fs, rng);
    auto xf = randn({2, 3, 8}, rng);
    out.push_back(check_gradients("grkan ffn", [=] { return (*ffn)(xf); }, with_input(params_of(fs), "x", xf), kTol,
                                  GradCheckOptions{1e-5, 20260, 48}));
}

void convs(std::vector<GradCheckReport>& out, Rng& rng) {
    auto x = randn({2, 3, 5, 5}, rng), w = randn({4, 3, 3, 3}, rng, 0.3), b = randn({4}, rng);
    out.push_back(check_gradients("conv2d 3x3", [=] { return conv2d(x, w, b, 1); }, {{"x", x}, {"w", w}, {"b", b}},
                                  kTol));
    auto w1 = randn({4, 3, 1, 1}, rng);
    out.push_back(check_gradients("conv2d 1x1", [=] { return conv2d(x, w1, Tensor<T>(), 0); }, {{"x", x}, {"w", w1}},
                                  kTol));
    auto g = randn({3}, rng), be = randn({3}, rng);
    auto rm = Tensor<T>::zeros({3}), rv = Tensor<T>::ones({3});
    out.push_back(check_gradients("batch_norm", [=]() mutable { return batch_norm(x, g, be, rm, rv, true); },
                                  {{"x", x}, {"gamma", g}, {"beta", be}}, kTol));
    InstanceNorm2d<T> in(3);
    in.gamma = randn({3, 1}, rng);
    in.beta = randn({3, 1}, rng);
    out.push_back(check_gradients("instance_norm", [=] { return in(x); },
                                  {{"x", x}, {"gamma", in.gamma}, {"beta", in.beta}}, kTol));
}

void deconvs(std::vector<GradCheckReport>& out, Rng& rng) {
    auto x = randn({2, 3, 3, 3}, rng), w = randn({3, 2, 2, 2}, rng), b = randn({2}, rng);
    out.push_back(check_gradients("conv_transpose2d", [=] { return conv_transpose2d(x, w, b); },
                                  {{"x", x}, {"w", w}, {"b", b}}, kTol));
}

void attentions(std::vector<GradCheckReport>& out, Rng& rng) {
    const WindowSpec w{2, 0, 2, 8}, sw{2, 1, 2, 8};
    auto attn = std::make_shared<WindowAttention<T>>(8, 2, 2, true, rng);
    for (auto& v : attn->rel_bias.data_mut()) v = rng.normal();
    ParamSet<T> ps;
    attn->collect("attn", ps);
    auto x = randn({1, 4, 4, 8}, rng);
    out.push_back(check_gradients("w_msa", [=] { return w_msa(x, w, *attn); }, with_input(params_of(ps), "x", x), kTol));
    out.push_back(check_gradients("sw_msa", [=] { return sw_msa(x, sw, *attn); }, with_input(params_of(ps), "x", x),
                                  kTol));
    auto xp = randn({1, 3, 3, 8}, rng);
    out.push_back(check_gradients("sw_msa padded", [=] { return sw_msa(xp, sw, *attn); },
                                  with_input(params_of(ps), "x", xp), kTol));
    auto merge = std::make_shared<PatchMerge<T>>(4, rng);
    ParamSet<T> ms;
    merge->collect("merge", ms);
    auto xm = randn({2, 4, 4, 4}, rng);
    out.push_back(check_gradients("patch_merge", [=] { return patch_merge(xm, *merge); },
                                  with_input(params_of(ms), "x", xm), kTol));
    auto pe = std::make_shared<PatchEmbed<T>>(2, 2, 2, 6, rng);
    ParamSet<T> es;
    pe->collect("embed", es);
    auto img = randn({1, 2, 5, 5}, rng);
    out.push_back(check_gradients("patch_embed", [=] { return patch_embed(img, *pe); },
                                  with_input(params_of(es), "x", img), kTol));
}

void blocks(std::vector<GradCheckReport>& out, Rng& rng) {
    ModelConfig cfg;
    cfg.groups = 4;
    cfg.hidden_ratio = 2;
    const StageConfig st{1, 8, 2, 2, FfnKind::grkan, true};

    auto rc = std::make_shared<RcBlock<T>>(8, rng);
    ParamSet<T> rs;
    rc->collect("rc", rs);
    auto z = randn({1, 4, 4, 8}, rng);
    out.push_back(check_gradients("rc_block", [=] { return rc_block(z, *rc); }, with_input(params_of(rs), "z", z), kTol,
                                  GradCheckOptions{1e-5, 20260, 64}));

    auto pair = std::make_shared<BlockPair<T>>(st, cfg, rng);
    for (auto* blk : {&pair->regular, &pair->shifted}) {
        for (auto& v : blk->attn.rel_bias.data_mut()) v = 0.5 * rng.normal();
    }
    ParamSet<T> ps;
    pair->collect("block0", "block1", ps);
    offset_denominators(ps, rng);
    out.push_back(check_gradients("swin_kan_block_pair", [=] { return swin_kan_block_pair(z, *pair); },
                                  with_input(params_of(ps), "z", z), kCompositeTol, GradCheckOptions{1e-5, 20260, 48}));

    auto dec = std::make_shared<DecoderStage<T>>(6, 4, 4, 2, 2, rng);
    ParamSet<T> ds;
    dec->collect("up", ds);
    auto deep = randn({2, 6, 2, 2}, rng), skip = randn({2, 4, 4, 4}, rng);
    out.push_back(check_gradients("decoder_stage", [=] { return decoder_stage(deep, skip, *dec, true); },
                                  with_input(with_input(params_of(ds), "skip", skip), "deep", deep), kCompositeTol,
                                  GradCheckOptions{1e-5, 20260, 48}));
}

void losses(std::vector<GradCheckReport>& out, Rng& rng) {
    auto logits = randn({2, 3, 4, 4}, rng);
    std::vector<std::uint8_t> labels(2 * 16);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
    out.push_back(check_gradients("dice_ce_loss", [=] { return dice_ce_loss(logits, labels, 3); }, {{"logits", logits}},
                                  kTol));
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(const std::string& scope) {
    const auto scopes = gradcheck_scopes();
    if (scope != "all" && std::find(scopes.begin(), scopes.end(), scope) == scopes.end()) {
        throw std::invalid_argument("unknown gradcheck scope '" + scope + "'");
    }
    std::vector<GradCheckReport> out;
    Rng rng(4242);
    auto want = [&](const char* s) { return scope == "all" || scope == s; };
    if (want("elementwise")) elementwise(out, rng);
    if (want("matmul")) matmuls(out, rng);
    if (want("softmax")) softmaxes(out, rng);
    if (want("layer_norm")) layer_norms(out, rng);
    if (want("rational")) rationals(out, rng);
    if (want("grkan")) grkans(out, rng);
    if (want("conv")) convs(out, rng);
    if (want("deconv")) deconvs(out, rng);
    if (want("attention")) attentions(out, rng);
    if (want("block")) blocks(out, rng);
    if (want("loss")) losses(out, rng);
    return out;
}

}  // namespace ukast
