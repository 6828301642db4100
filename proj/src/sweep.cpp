// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <thread>

namespace ukast {

namespace {

std::string percent(double f) { return std::to_string(static_cast<int>(std::lround(f * 100.0))) + "%"; }

std::string fixed4(double v) {
    if (std::isnan(v)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string signed4(double v) {
    if (std::isnan(v)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

std::size_t worker_limit() {
    const char* env = std::getenv("UKAST_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<std::size_t>(v) : 1;
}

double SweepResult::mean(const std::string& variant, double fraction) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
        if (c.ok && c.variant == variant && c.fraction == fraction) {
            total += c.dice;
            ++n;
        }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / double(n);
}

std::string SweepResult::mlp_counterpart(const std::string& variant) {
    const auto pos = variant.find("grkan");
    if (pos == std::string::npos) return "";
    std::string out = variant;
    out.replace(pos, 5, "mlp");
    return out;
}

std::string SweepResult::table_text() const {
    std::size_t width = 10;
    for (const auto& v : variants) width = std::max(width, v.size() + 2);
    std::string out = pad("variant", width);
    for (double f : fractions) out += pad(percent(f), 20);
    out += "\n";
    for (const auto& v : variants) {
        out += pad(v, width);
        const std::string base = mlp_counterpart(v);
        const bool has_base = !base.empty() && std::find(variants.begin(), variants.end(), base) != variants.end();
        for (double f : fractions) {
            std::string cell = fixed4(mean(v, f));
            std::size_t failed = 0;
            for (const auto& c : cells)
                if (!c.ok && c.variant == v && c.fraction == f) ++failed;
            if (has_base) cell += " (" + signed4(mean(v, f) - mean(base, f)) + ")";
            if (failed > 0) cell += " [" + std::to_string(failed) + " failed]";
            out += pad(cell, 20);
        }
        out += "\n";
    }
    return out;
}

std::string SweepResult::table_csv() const {
    std::string out = "variant";
    for (double f : fractions) out += "," + percent(f);
    out += "\n";
    for (const auto& v : variants) {
        out += v;
        for (double f : fractions) out += "," + fixed4(mean(v, f));
        out += "\n";
    }
    for (const auto& v : variants) {
        const std::string base = mlp_counterpart(v);
        if (base.empty() || std::find(variants.begin(), variants.end(), base) == variants.end()) continue;
        out += "delta:" + v;
        for (double f : fractions) out += "," + signed4(mean(v, f) - mean(base, f));
        out += "\n";
    }
    return out;
}

SweepResult run_sweep(const Dataset& data, const SweepOptions& options) {
    if (options.variants.empty()) throw std::invalid_argument("sweep needs at least one variant");
    if (options.fractions.empty()) throw std::invalid_argument("sweep needs at least one fraction");
    if (options.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
    if (data.test.empty()) throw std::invalid_argument("sweep needs a test split");

    SweepResult result;
    result.fractions = options.fractions;
    result.variants = options.variants;
    for (const auto& v : options.variants)
        for (double f : options.fractions)
            for (auto s : options.seeds) result.cells.push_back(SweepCell{v, f, s, false, 0.0, {}});

    std::vector<const SynthSample*> test;
    for (const auto& s : data.test) test.push_back(&s);

    auto run_cell = [&](SweepCell& cell) {
        try {
            auto cfg = make_variant(cell.variant, options.base);
            cfg.in_channels = data.spec.channels;
            cfg.classes = data.spec.classes;
            std::vector<const SynthSample*> train;
            for (auto i : fraction_ids(data.train.size(), cell.fraction, data.seed)) train.push_back(&data.train[i]);
            Model<float> model(cfg, cell.seed);
            TrainOptions opts = options.train;
            opts.seed = cell.seed;
            opts.verbose = false;
            opts.val_every = opts.epochs;  // score once, at the end
            if (!options.out_dir.empty()) {
                opts.out_dir = options.out_dir / (cell.variant + "_" + percent(cell.fraction) + "_seed" +
                                                  std::to_string(cell.seed));
            }
            fit(model, train, {}, opts);
            const std::size_t tile = opts.tile == 0 ? cfg.image_size : opts.tile;
            cell.dice = evaluate(model, test, tile).mean;
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, result.cells.size()));
    if (workers == 1) {
        for (auto& c : result.cells) run_cell(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < result.cells.size(); i = next++) run_cell(result.cells[i]);
            });
        }
        for (auto& t : pool) t.join();
    }

    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        std::ofstream(options.out_dir / "sweep.txt") << result.table_text();
        std::ofstream(options.out_dir / "sweep.csv") << result.table_csv();
    }
    return result;
}

}  // namespace ukast
