// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Arguments select a subset of criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "ukast/attention.hpp"
#include "ukast/complexity.hpp"
#include "ukast/gradcheck.hpp"
#include "ukast/grkan.hpp"
#include "ukast/model.hpp"
#include "ukast/sweep.hpp"
#include "ukast/train.hpp"

using namespace ukast;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

std::vector<const SynthSample*> ptrs(const std::vector<SynthSample>& v) {
    std::vector<const SynthSample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1 ------------------------------------------------------------------------

Outcome gradients() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto reports = run_gradcheck_suite("all");
    const double secs = seconds_since(t0);
    const std::set<std::string> composite{"swin_kan_block_pair", "decoder_stage"};
    double worst = 0.0, worst_composite = 0.0;
    for (const auto& r : reports) {
        const double limit = composite.count(r.name) ? 1e-3 : 1e-4;
        (composite.count(r.name) ? worst_composite : worst) =
            std::max(composite.count(r.name) ? worst_composite : worst, r.max_error);
        o.require(r.max_error < limit, r.name + " error " + fmt(r.max_error));
    }
    for (const auto& s : gradcheck_scopes()) o.require(!run_gradcheck_suite(s).empty(), "scope " + s + " empty");
    o.require(secs < 120.0, "runtime " + fmt(secs) + " s");
    o.detail = std::to_string(reports.size()) + " cases, worst " + fmt(worst) + " (composite " + fmt(worst_composite) +
               "), " + fmt(secs) + " s" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 2 ------------------------------------------------------------------------

Outcome pau_safety() {
    Outcome o;
    const auto st = oracle::fuzz_pau(1'000'000, 2026);
    o.require(st.samples == 1'000'000, "sample count");
    o.require(st.non_finite == 0, std::to_string(st.non_finite) + " non-finite outputs");
    o.require(st.denominator_below_one == 0, std::to_string(st.denominator_below_one) + " denominators below 1");
    o.require(st.roots_of_q > 0 && st.poles_of_unsafe_form > 0, "no exact roots of Q exercised");
    o.require(st.huge_inputs > 0, "no huge inputs exercised");
    o.detail = "1e6 samples, " + std::to_string(st.roots_of_q) + " exact Q roots, " +
               std::to_string(st.poles_of_unsafe_form) + " poles of P/Q, " + std::to_string(st.huge_inputs) +
               " |x|>=1e5; non-finite " + std::to_string(st.non_finite) + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 3 ------------------------------------------------------------------------

WindowAttention<double> random_attention(std::size_t C, std::size_t heads, std::size_t M, bool rel_bias, Rng& rng) {
    WindowAttention<double> attn(C, heads, M, rel_bias, rng);
    for (auto* t : {&attn.qkv.weight, &attn.qkv.bias, &attn.proj.weight, &attn.proj.bias})
        for (auto& v : t->data_mut()) v = 0.5 * rng.normal();
    if (rel_bias)
        for (auto& v : attn.rel_bias.data_mut()) v = rng.normal();
    return attn;
}

// Plain multi-head attention over all tokens, no windows.
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

Outcome attention() {
    Outcome o;
    Rng rng(3);
    {
        const auto attn = random_attention(8, 2, 4, false, rng);
        auto x = ukast::testing::randn({2, 4, 4, 8}, rng);
        o.require(ukast::testing::bit_equal(w_msa(x, WindowSpec{4, 0, 2, 8}, attn), global_msa(x, attn)),
                  "one-window W-MSA differs from global attention");
    }
    double worst = 0.0;
    std::size_t runs = 0;
    struct Grid {
        std::size_t h, w, M;
    };
    for (const Grid g : {Grid{4, 4, 2}, Grid{8, 8, 4}, Grid{8, 8, 2}, Grid{6, 5, 4}}) {
        for (std::size_t shift : {std::size_t{0}, g.M / 2}) {
            const auto attn = random_attention(8, 2, g.M, true, rng);
            auto x = ukast::testing::randn({2, g.h, g.w, 8}, rng);
            const WindowSpec spec{g.M, shift, 2, 8};
            const auto y = shift == 0 ? w_msa(x, spec, attn) : sw_msa(x, spec, attn);
            const auto ref = oracle::window_attention({x.data().begin(), x.data().end()}, 2, g.h, g.w, 8, spec, attn);
            const double d = ukast::testing::max_abs_diff<double>(y.data(), ref);
            worst = std::max(worst, d);
            ++runs;
            o.require(d < 1e-6, std::to_string(g.h) + "x" + std::to_string(g.w) + " M" + std::to_string(g.M) + " s" +
                                    std::to_string(shift) + " diff " + fmt(d));
        }
    }
    std::size_t pairs = 0, masked = 0, wrong = 0;
    for (const Grid g : {Grid{4, 4, 2}, Grid{8, 8, 4}, Grid{8, 8, 2}, Grid{6, 5, 4}}) {
        const std::size_t s = g.M / 2, M = g.M, N = M * M;
        const std::size_t Hp = (g.h + M - 1) / M * M, Wp = (g.w + M - 1) / M * M, nWc = Wp / M;
        const auto mask = attention_mask<double>(g.h, g.w, M, s);
        for (std::size_t win = 0; win < mask.shape()[0]; ++win)
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    const std::size_t r = ((win / nWc) * M + i / M + s) % Hp, c = ((win % nWc) * M + i % M + s) % Wp;
                    const std::size_t r2 = ((win / nWc) * M + j / M + s) % Hp, c2 = ((win % nWc) * M + j % M + s) % Wp;
                    const bool ok = oracle::allowed(r, c, r2, c2, g.h, g.w, Hp, Wp, M, s);
                    ++pairs;
                    masked += !ok;
                    wrong += ok != (mask.at((win * N + i) * N + j) == 0.0);
                }
    }
    o.require(wrong == 0, std::to_string(wrong) + " mask entries disagree");
    o.detail = "one window == global bit-exact; " + std::to_string(runs) + " W/SW-MSA runs, worst oracle diff " +
               fmt(worst) + "; " + std::to_string(pairs) + " mask pairs (" + std::to_string(masked) + " masked)" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 4 ------------------------------------------------------------------------

Outcome grkan_structure() {
    Outcome o;
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t g = 1 + rng.below(6), din = g * (1 + rng.below(5)), dout = 1 + rng.below(20);
        const std::size_t m = 1 + rng.below(5), n = rng.below(6);
        const GrKanLayer<double> layer(din, dout, g, RationalParams::identity(m, n), rng);
        ParamSet<double> ps;
        layer.collect("r", "l", ps);
        o.require(ps.trainable_scalars() == g * (m + 1 + n) + din * dout + dout, "count trial " + std::to_string(trial));
    }
    // Group sensitivity: perturbing group k changes exactly its channels.
    const std::size_t d = 12, g = 4;
    GrKanLayer<double> layer(d, 3, g, RationalParams::identity(), rng);
    o.require(layer.unique_function_count() == g, "unique functions");
    auto x = ukast::testing::randn({5, d}, rng);
    const auto base = layer.rational_stage(x);
    for (std::size_t k = 0; k < g; ++k) {
        auto a = layer.numerators()[k];
        a.data_mut()[2] += 0.5;
        const auto moved = layer.rational_stage(x);
        a.data_mut()[2] -= 0.5;
        for (std::size_t i = 0; i < base.numel(); ++i) {
            const bool changed = moved.at(i) != base.at(i);
            if (changed != ((i % d) / (d / g) == k)) o.require(false, "group " + std::to_string(k) + " leaks");
        }
    }
    const VanillaKanLayer vanilla(32, 32, 3, 4);
    const GrKanLayer<double> grouped(32, 32, 8, RationalParams::identity(), rng);
    o.require(vanilla.unique_function_count() / grouped.unique_function_count() == 32 * 32 / 8, "reduction factor");
    o.detail = "20 random counts exact; " + std::to_string(g) + " shared functions; vanilla " +
               std::to_string(vanilla.unique_function_count()) + " -> grouped " +
               std::to_string(grouped.unique_function_count()) + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 5 ------------------------------------------------------------------------

Outcome table3_deltas() {
    Outcome o;
    std::string shown;
    for (const auto& base : {desk_config(), tiny_config()}) {
        const std::size_t side = base.image_size;
        std::size_t ffns = 0;
        for (const auto& s : base.stages) ffns += 2 * s.depth;
        const std::uint64_t surplus = 2 * base.groups * (base.rational_m + 1 + base.rational_n) * ffns;
        for (const std::string rc : {"", "+rc"}) {
            const auto mlp = count(make_variant("swin+mlp" + rc, base), side, side);
            const auto kan = count(make_variant("swin+grkan" + rc, base), side, side);
            o.require(kan.gflops() < mlp.gflops(), "grkan flops not lower" + rc);
            o.require(kan.total_params - mlp.total_params == surplus, "surplus mismatch" + rc);
            if (side == 64 && rc == "+rc") {
                shown = "desk swin+rc: mlp " + fmt(mlp.gflops(), 6) + " GFLOPs/" + std::to_string(mlp.total_params) +
                        " params, grkan " + fmt(kan.gflops(), 6) + "/" + std::to_string(kan.total_params);
            }
        }
        for (const std::string ffn : {"mlp", "grkan"}) {
            const auto plain = count(make_variant("swin+" + ffn, base), side, side);
            const auto rc = count(make_variant("swin+" + ffn + "+rc", base), side, side);
            o.require(rc.gflops() > plain.gflops() && rc.total_params > plain.total_params, "rc not above " + ffn);
        }
    }
    o.detail = shown + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 6 ------------------------------------------------------------------------

constexpr double kInitAgreementBound = 1e-2;

Outcome stage_equations() {
    Outcome o;
    for (bool rc : {false, true}) {
        for (FfnKind kind : {FfnKind::mlp, FfnKind::grkan}) {
            Rng rng(6);
            BlockPair<double> pair(StageConfig{1, 16, 2, 4, kind, rc}, tiny_config(), rng);
            ParamSet<double> ps;
            pair.collect("a", "b", ps);
            for (const auto& p : ps.entries()) {
                if (p.name.find("attn.proj") == std::string::npos && p.name.find("ffn.linear2") == std::string::npos &&
                    p.name.find(".rc.conv") == std::string::npos)
                    continue;
                auto t = p.tensor;
                for (auto& v : t.data_mut()) v = 0.0;
            }
            auto z = ukast::testing::randn({2, 8, 8, 16}, rng);
            o.require(ukast::testing::bit_equal(swin_kan_block_pair(z, pair), z), "zeroed pair not identity");
        }
    }
    Rng rng(7);
    auto x = ukast::testing::randn<float>({2, 1, 32, 32}, rng);
    Model<float> mlp(make_variant("swin+mlp+rc", tiny_config()), 21);
    Model<float> kan(make_variant("swin+grkan+rc", tiny_config()), 21);
    const double gap = ukast::testing::max_abs_diff(mlp.forward(x, false), kan.forward(x, false));
    o.require(gap < kInitAgreementBound, "init gap " + fmt(gap));
    o.detail = "zeroed pairs are identity (4 variants); mlp vs grkan logits at init differ by " + fmt(gap) +
               " (bound " + fmt(kInitAgreementBound) + ")" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 7 and 10 share the overfit runs -----------------------------------------

struct OverfitRun {
    RunManifest manifest;
    double dice = 0.0;
    double seconds = 0.0;
};

const Dataset& overfit_data() {
    static const Dataset d = generate(SynthSpec{8, 0, 32, 1, 2}, 7);
    return d;
}

TrainOptions overfit_options(const std::filesystem::path& out) {
    TrainOptions t;
    t.epochs = 300;
    t.batch = 8;
    t.lr = 2e-3;
    t.seed = 3;
    t.augment = false;
    t.val_every = 300;
    t.out_dir = out;
    return t;
}

OverfitRun overfit(const std::filesystem::path& out) {
    const auto t0 = Clock::now();
    Model<float> model(make_variant("ukast", tiny_config()), 11);
    const auto train = ptrs(overfit_data().train);
    OverfitRun r;
    r.manifest = fit(model, train, train, overfit_options(out));
    r.dice = evaluate(model, train, 32).mean;
    r.seconds = seconds_since(t0);
    return r;
}

const std::filesystem::path& scratch() {
    static const auto dir = ukast::testing::scratch_dir("acceptance");
    return dir;
}

const std::pair<OverfitRun, OverfitRun>& overfit_pair() {
    static const auto runs = std::make_pair(overfit(scratch() / "overfit_a"), overfit(scratch() / "overfit_b"));
    return runs;
}

Outcome end_to_end() {
    Outcome o;
    const auto& [a, b] = overfit_pair();
    o.require(a.manifest.steps == 300, "steps " + std::to_string(a.manifest.steps));
    o.require(a.dice >= 0.95, "train Dice " + fmt(a.dice, 4));
    o.require(a.dice == b.dice && a.manifest.to_text() == b.manifest.to_text(), "runs differ");
    o.require(a.seconds < 600.0, "runtime " + fmt(a.seconds) + " s");

    // The CLI evaluates the saved checkpoint on the exported samples.
    const auto data_dir = scratch() / "overfit_data";
    export_dataset(overfit_data(), data_dir);
    std::ostringstream out, err;
    const int code = cli::run({"eval", "--checkpoint", (scratch() / "overfit_a" / "last").string(), "--data",
                               data_dir.string(), "--split", "train", "--format", "csv"},
                              out, err);
    double cli_dice = -1.0;
    {
        std::istringstream in(out.str());
        for (std::string line; std::getline(in, line);)
            if (line.rfind("mean,", 0) == 0) cli_dice = std::stod(line.substr(5));
    }
    o.require(code == 0, "cli eval exit " + std::to_string(code) + " " + err.str());
    o.require(cli_dice >= 0.95, "cli eval Dice " + fmt(cli_dice, 4));
    o.detail = "train Dice " + fmt(a.dice, 4) + " after 300 steps, repeat identical, " + fmt(a.seconds) +
               " s per run; cli eval Dice " + fmt(cli_dice, 4) + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 8 ------------------------------------------------------------------------

Outcome data_efficiency() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto data = generate(SynthSpec{80, 16, 32, 1, 2}, 2026);
    SweepOptions opts;
    opts.base = tiny_config();
    opts.train.epochs = 10;
    opts.train.batch = 8;
    opts.train.lr = 2e-3;
    opts.workers = worker_limit();
    const auto res = run_sweep(data, opts);
    for (const auto& c : res.cells) o.require(c.ok, "cell " + c.variant + " failed: " + c.error);
    o.require(res.cells.size() == 4 * 2 * 3, "cell count");
    std::string deltas;
    for (const auto& v : res.variants) {
        for (std::size_t i = 0; i + 1 < res.fractions.size(); ++i) {
            const double lo = res.mean(v, res.fractions[i]), hi = res.mean(v, res.fractions[i + 1]);
            o.require(hi >= lo - 0.02, v + " drops " + fmt(lo, 4) + " -> " + fmt(hi, 4));
        }
    }
    for (double f : res.fractions) {
        const double d = res.mean("swin+grkan+rc", f) - res.mean("swin+mlp+rc", f);
        deltas += (deltas.empty() ? "" : " ") + fmt(d, 3);
    }
    std::cout << res.table_text();
    o.detail = "24 cells in " + fmt(seconds_since(t0)) + " s; grkan-mlp deltas (reported) " + deltas +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 9 ------------------------------------------------------------------------

Outcome tiler() {
    Outcome o;
    Model<float> model(tiny_config(), 3);
    const auto s = generate_sample(SynthSpec{1, 0, 32, 1, 2}, 1, 0);
    const LogitFn fn = [&](const Tensor<float>& x) { return model.forward(x, false); };
    const auto tiled = sliding_window_infer(fn, Tensor<float>({1, 32, 32}, s.image), 32);
    const auto plain = model.forward(Tensor<float>({1, 1, 32, 32}, s.image), false);
    o.require(std::equal(tiled.data().begin(), tiled.data().end(), plain.data().begin()), "single tile differs");
    std::size_t grids = 0;
    for (auto [h, w, t] : {std::tuple<std::size_t, std::size_t, std::size_t>{64, 64, 32}, {50, 37, 16}, {96, 64, 32}}) {
        o.require(coverage_counts(h, w, t, 0.5) == oracle::coverage(h, w, t, t / 2), "coverage " + std::to_string(h));
        ++grids;
    }
    const auto c = coverage_counts(64, 64, 32, 0.5);
    o.require(*std::min_element(c.begin(), c.end()) >= 1 && *std::max_element(c.begin(), c.end()) <= 4, "64/32 bounds");
    o.detail = "image==tile bit-exact; coverage matches oracle on " + std::to_string(grids) + " grids" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 10 -----------------------------------------------------------------------

Outcome persistence() {
    Outcome o;
    const auto& [a, b] = overfit_pair();
    o.require(read_file(scratch() / "overfit_a" / "manifest.txt") == read_file(scratch() / "overfit_b" / "manifest.txt"),
              "manifest files differ");
    o.require(a.manifest.to_text() == b.manifest.to_text(), "manifests differ");
    const auto train = ptrs(overfit_data().train);
    const auto loaded = load_model(scratch() / "overfit_a" / "last");
    const auto again = evaluate(*loaded, train, 32);
    o.require(again.mean == a.dice, "reloaded Dice " + fmt(again.mean, 17) + " vs " + fmt(a.dice, 17));
    o.detail = "manifests byte-identical; reloaded checkpoint Dice " + fmt(again.mean, 17) +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradients},
        {"PAU safety fuzz", pau_safety},
        {"attention oracles", attention},
        {"GR-KAN structure", grkan_structure},
        {"MLP vs GR-KAN cost deltas", table3_deltas},
        {"stage equations", stage_equations},
        {"end-to-end overfit", end_to_end},
        {"data-efficiency sweep", data_efficiency},
        {"inference tiler", tiler},
        {"determinism and persistence", persistence},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) continue;
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        failed += !r.pass;
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << r.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
