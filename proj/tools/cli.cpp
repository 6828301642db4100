// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ukast/checkpoint.hpp"
#include "ukast/complexity.hpp"
#include "ukast/config.hpp"
#include "ukast/data.hpp"
#include "ukast/gradcheck.hpp"
#include "ukast/model.hpp"
#include "ukast/sweep.hpp"
#include "ukast/train.hpp"

namespace ukast::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Variant names come from flags, so a bad one is a usage error.
ModelConfig variant_config(const std::string& name, const ModelConfig& base) {
    try {
        return make_variant(name, base);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::string seed, fraction, variant, out, data, format = "text";
    // synth-data
    std::string count, test_count, size, classes, channels;
    // eval
    std::string checkpoint, split = "test", tile;
    // flops
    bool per_layer = false;
    // gradcheck
    std::string scope = "all";
    // sweep
    std::string workers;
    bool quiet = false;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Built-in defaults < config file < --set < dedicated flags.
ConfigMap settings(const Flags& f, const CLI::App& sub) {
    ConfigMap map;
    if (!f.config.empty()) map = ConfigMap::load(f.config);
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        ConfigMap one = ConfigMap::parse(s);
        map.overlay(one);
    }
    auto put = [&](const char* flag, const std::string& key, const std::string& value) {
        if (sub.get_option_no_throw(flag) != nullptr && sub.count(flag) > 0) map.set(key, value);
    };
    put("--seed", sub.get_name() == "synth-data" ? "data.seed" : "train.seed", f.seed);
    put("--fraction", "data.fraction", f.fraction);
    put("--variant", "model.variant", f.variant);
    put("--out", "run.out", f.out);
    put("--data", "data.dir", f.data);
    put("--count", "data.train_count", f.count);
    put("--test-count", "data.test_count", f.test_count);
    put("--size", "data.size", f.size);
    put("--classes", "data.classes", f.classes);
    put("--channels", "data.channels", f.channels);
    put("--tile", "train.tile", f.tile);
    put("--workers", "sweep.workers", f.workers);
    return map;
}

ModelConfig model_base(const ConfigMap& map) {
    const std::string preset = map.str("model.preset", "desk");
    ModelConfig base;
    if (preset == "desk") {
        base = desk_config();
    } else if (preset == "tiny") {
        base = tiny_config();
    } else {
        throw ConfigError("model.preset must be desk or tiny, got '" + preset + "'");
    }
    return ModelConfig::from_map(map, base);
}

ModelConfig model_config(const ConfigMap& map) {
    ModelConfig cfg = model_base(map);
    const std::string variant = map.str("model.variant", "");
    return variant.empty() ? cfg : variant_config(variant, cfg);
}

Dataset open_data(const ConfigMap& map) {
    const std::string dir = map.str("data.dir", "");
    if (dir.empty()) throw UsageError("no data directory given (--data or data.dir)");
    if (!fs::is_directory(dir)) throw UsageError("data directory not found: " + dir);
    return load_dataset(dir);
}

std::string fixed(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string signed_fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%+.*f", digits, v);
    return buf;
}

void check_format(const std::string& format) {
    if (format != "text" && format != "csv") throw UsageError("--format must be text or csv");
}

int cmd_synth(const ConfigMap& map, std::ostream& out) {
    SynthSpec spec;
    spec.train_count = map.size("data.train_count", spec.train_count);
    spec.test_count = map.size("data.test_count", spec.test_count);
    spec.size = map.size("data.size", spec.size);
    spec.classes = map.size("data.classes", spec.classes);
    spec.channels = map.size("data.channels", spec.channels);
    const auto seed = static_cast<std::uint64_t>(map.integer("data.seed", 0));
    const std::string dir = map.str("run.out", "");
    if (dir.empty()) throw UsageError("synth-data needs --out");
    const Dataset data = generate(spec, seed);
    export_dataset(data, dir);
    out << "wrote " << data.train.size() << " train and " << data.test.size() << " test samples (" << spec.size
        << "x" << spec.size << ", " << spec.classes << " classes, seed " << seed << ") to " << dir << "\n";
    return 0;
}

int cmd_train(const ConfigMap& map, bool quiet, std::ostream& out) {
    const Dataset data = open_data(map);
    ModelConfig cfg = model_config(map);
    cfg.in_channels = data.spec.channels;
    cfg.classes = data.spec.classes;
    TrainOptions opts = TrainOptions::from_map(map, TrainOptions{});
    opts.out_dir = map.str("run.out", "");
    opts.verbose = !quiet;
    const double fraction = map.real("data.fraction", 1.0);

    std::vector<const SynthSample*> train, val;
    for (auto i : fraction_ids(data.train.size(), fraction, data.seed)) train.push_back(&data.train[i]);
    for (const auto& s : data.test) val.push_back(&s);

    Model<float> model(cfg, opts.seed);
    const RunManifest manifest = fit(model, train, val, opts);
    out << cfg.name << ": " << train.size() << " training samples, " << manifest.steps << " steps";
    if (manifest.best_dice >= 0.0) {
        out << ", best val dice " << fixed(manifest.best_dice) << " (epoch " << manifest.best_epoch << ")";
    }
    out << "\n";
    return 0;
}

int cmd_eval(const ConfigMap& map, const Flags& f, std::ostream& out) {
    if (f.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
    if (!fs::is_directory(f.checkpoint)) throw UsageError("checkpoint directory not found: " + f.checkpoint);
    const Dataset data = open_data(map);
    auto model = load_model(f.checkpoint);
    if (model->config().classes != data.spec.classes || model->config().in_channels != data.spec.channels) {
        throw std::runtime_error("checkpoint expects " + std::to_string(model->config().in_channels) + " channel(s) and " +
                                 std::to_string(model->config().classes) + " classes; data has " +
                                 std::to_string(data.spec.channels) + " and " + std::to_string(data.spec.classes));
    }
    if (f.split != "test" && f.split != "train") throw UsageError("--split must be test or train");
    std::vector<const SynthSample*> samples;
    for (const auto& s : f.split == "test" ? data.test : data.train) samples.push_back(&s);
    const std::size_t tile = map.size("train.tile", 0) == 0 ? model->config().image_size : map.size("train.tile", 0);
    const DiceResult r = evaluate(*model, samples, tile);

    if (f.format == "csv") {
        out << "class,dice\n";
        for (std::size_t k = 0; k < r.per_class.size(); ++k) out << k + 1 << "," << fixed(r.per_class[k], 6) << "\n";
        out << "mean," << fixed(r.mean, 6) << "\n";
    } else {
        out << model->config().name << " on " << samples.size() << " " << f.split << " samples (tile " << tile << ")\n";
        for (std::size_t k = 0; k < r.per_class.size(); ++k) {
            out << "  class " << k + 1 << "  dice " << fixed(r.per_class[k]) << "\n";
        }
        out << "  mean     dice " << fixed(r.mean) << "\n";
    }
    return 0;
}

int cmd_flops(const ConfigMap& map, const Flags& f, std::ostream& out) {
    const ModelConfig base = model_base(map);
    std::vector<std::string> variants = split_list(map.str("model.variant", ""));
    if (variants.empty()) variants = variant_names();
    const std::size_t size = map.size("data.size", base.image_size);

    std::vector<CostReport> reports;
    for (const auto& v : variants) reports.push_back(count(variant_config(v, base), size, size));
    auto find = [&](const std::string& name) -> const CostReport* {
        for (std::size_t i = 0; i < variants.size(); ++i)
            if (variant_config(variants[i], base).name == name) return &reports[i];
        return nullptr;
    };

    if (f.format == "csv") {
        out << "variant,params,macs,gflops,delta_params,delta_gflops\n";
    } else {
        out << "cost table " << kCostTableVersion << ", input " << size << "x" << size << "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-16s %12s %14s %10s %10s %11s\n", "variant", "params", "MACs", "GFLOPs",
                      "d_params", "d_GFLOPs");
        out << buf;
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const CostReport* mlp = find(SweepResult::mlp_counterpart(r.model));
        std::string dp, dg;
        if (mlp != nullptr) {
            dp = (r.total_params >= mlp->total_params ? "+" : "-") +
                 std::to_string(r.total_params >= mlp->total_params ? r.total_params - mlp->total_params
                                                                     : mlp->total_params - r.total_params);
            dg = signed_fixed(r.gflops() - mlp->gflops(), 6);
        }
        if (f.format == "csv") {
            out << r.model << "," << r.total_params << "," << r.total_macs << "," << fixed(r.gflops(), 6) << "," << dp
                << "," << dg << "\n";
        } else {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%-16s %12llu %14llu %10s %10s %11s\n", r.model.c_str(),
                          static_cast<unsigned long long>(r.total_params), static_cast<unsigned long long>(r.total_macs),
                          fixed(r.gflops(), 6).c_str(), dp.c_str(), dg.c_str());
            out << buf;
        }
    }
    if (f.per_layer) {
        for (const auto& r : reports) out << "\n" << (f.format == "csv" ? r.to_csv() : r.to_text(true));
    }
    return 0;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
    const auto scopes = gradcheck_scopes();
    if (f.scope != "all" && std::find(scopes.begin(), scopes.end(), f.scope) == scopes.end()) {
        throw UsageError("unknown scope '" + f.scope + "'");
    }
    const auto reports = run_gradcheck_suite(f.scope);
    std::size_t passed = 0;
    for (const auto& r : reports) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-28s max rel err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_error,
                      r.tolerance, r.passed ? "ok" : "FAILED");
        out << buf;
        if (!r.passed) {
            for (const auto& in : r.inputs) {
                if (in.rel_error >= r.tolerance) out << "    " << in.name << " " << in.rel_error << "\n";
            }
        }
        passed += r.passed ? 1 : 0;
    }
    out << passed << "/" << reports.size() << " checks passed\n";
    return passed == reports.size() ? 0 : 1;
}

int cmd_sweep(const ConfigMap& map, const Flags& f, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    SweepOptions opts;
    if (sub.count("--variant") > 0 || map.has("model.variant")) {
        opts.variants = split_list(map.str("model.variant", ""));
        if (opts.variants.empty()) throw UsageError("sweep needs at least one variant");
    }
    if (map.has("data.fraction")) {
        opts.fractions.clear();
        for (const auto& s : split_list(map.str("data.fraction", ""))) opts.fractions.push_back(std::stod(s));
        if (opts.fractions.empty()) throw UsageError("sweep needs at least one fraction");
    }
    if (map.has("train.seed")) {
        opts.seeds.clear();
        for (const auto& s : split_list(map.str("train.seed", ""))) opts.seeds.push_back(std::stoull(s));
        if (opts.seeds.empty()) throw UsageError("sweep needs at least one seed");
    }
    ConfigMap train_map = map;
    train_map.set("train.seed", "0");
    opts.train = TrainOptions::from_map(train_map, TrainOptions{});
    opts.base = model_base(map);
    opts.workers = std::min(map.size("sweep.workers", worker_limit()), worker_limit());
    opts.out_dir = map.str("run.out", "");
    for (const auto& v : opts.variants) variant_config(v, opts.base);  // reject bad names before any training

    const Dataset data = open_data(map);
    const SweepResult result = run_sweep(data, opts);
    out << (f.format == "csv" ? result.table_csv() : result.table_text());
    std::size_t failed = 0;
    for (const auto& c : result.cells) {
        if (!c.ok) {
            ++failed;
            err << "cell " << c.variant << " " << c.fraction << " seed " << c.seed << " failed: " << c.error << "\n";
        }
    }
    return failed == result.cells.size() ? 1 : 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ukast: segmentation with windowed attention and group-rational KAN feed-forward layers"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", f.config, "key = value settings file")->check(CLI::ExistingFile);
        s->add_option("--set", f.sets, "override one setting, key=value (repeatable)");
    };
    auto format = [&](CLI::App* s) { s->add_option("--format", f.format, "text or csv"); };

    auto* synth = app.add_subcommand("synth-data", "generate and export the synthetic benchmark");
    common(synth);
    synth->add_option("--count", f.count, "training samples");
    synth->add_option("--test-count", f.test_count, "test samples");
    synth->add_option("--size", f.size, "image side length");
    synth->add_option("--classes", f.classes, "classes including background");
    synth->add_option("--channels", f.channels, "image channels");
    synth->add_option("--seed", f.seed, "dataset seed");
    synth->add_option("--out", f.out, "output directory");

    auto* train = app.add_subcommand("train", "train one model on a nested fraction of the data");
    common(train);
    train->add_option("--data", f.data, "dataset directory");
    train->add_option("--seed", f.seed, "model and training seed");
    train->add_option("--fraction", f.fraction, "fraction of the training split");
    train->add_option("--variant", f.variant, "model row, e.g. swin+grkan+rc");
    train->add_option("--out", f.out, "run directory");
    train->add_flag("--quiet", f.quiet, "no per-epoch log");

    auto* eval = app.add_subcommand("eval", "Dice of a checkpoint by sliding-window inference");
    common(eval);
    eval->add_option("--checkpoint", f.checkpoint, "directory written by train (best/ or last/)");
    eval->add_option("--data", f.data, "dataset directory");
    eval->add_option("--split", f.split, "test or train");
    eval->add_option("--tile", f.tile, "tile side, 0 for the model's image size");
    format(eval);

    auto* flops = app.add_subcommand("flops", "parameter and FLOP counts per variant");
    common(flops);
    flops->add_option("--variant", f.variant, "comma-separated rows (default: all)");
    flops->add_option("--size", f.size, "input side length");
    flops->add_flag("--per-layer", f.per_layer, "also print per-layer rows");
    format(flops);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad->add_option("--scope", f.scope, "one of " + [] {
        std::string s;
        for (const auto& x : gradcheck_scopes()) s += x + ", ";
        return s + "all";
    }());

    auto* sweep = app.add_subcommand("sweep", "variant x fraction x seed data-efficiency table");
    common(sweep);
    sweep->add_option("--data", f.data, "dataset directory");
    sweep->add_option("--variant", f.variant, "comma-separated rows");
    sweep->add_option("--fraction", f.fraction, "comma-separated fractions");
    sweep->add_option("--seed", f.seed, "comma-separated seeds");
    sweep->add_option("--out", f.out, "output directory for per-cell runs and tables");
    sweep->add_option("--workers", f.workers, "parallel cells (capped by UKAST_THREADS)");
    format(sweep);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        check_format(f.format);
        if (synth->parsed()) return cmd_synth(settings(f, *synth), out);
        if (train->parsed()) return cmd_train(settings(f, *train), f.quiet, out);
        if (eval->parsed()) return cmd_eval(settings(f, *eval), f, out);
        if (flops->parsed()) return cmd_flops(settings(f, *flops), f, out);
        if (grad->parsed()) return cmd_gradcheck(f, out);
        if (sweep->parsed()) return cmd_sweep(settings(f, *sweep), f, *sweep, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace ukast::cli
