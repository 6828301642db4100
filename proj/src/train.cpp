// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>

#include "ukast/checkpoint.hpp"
#include "ukast/ops.hpp"

namespace ukast {

template <typename T>
AdamW<T>::AdamW(std::vector<NamedParam<T>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

template <typename T>
void AdamW<T>::step(double lr) {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) throw TrainingError("adamw_step: parameter '" + p.name + "' has no gradient");
    }
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        auto w = p.tensor.data_mut();
        const auto g = p.tensor.grad();
        const double decay = p.decays() ? 1.0 - lr * options_.weight_decay : 1.0;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = static_cast<double>(g[k]);
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
            double wk = static_cast<double>(w[k]);
            if (p.decays()) wk *= decay;
            w[k] = static_cast<T>(wk - update);
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

double cosine_lr(std::size_t step, std::size_t total, double base) {
    if (step > total) {
        throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " exceeds total " + std::to_string(total));
    }
    if (total == 0) return base;
    return base * (1.0 + std::cos(std::numbers::pi * double(step) / double(total))) / 2.0;
}

template <typename T>
LossTerms<T> dice_ce_terms(const Tensor<T>& logits, std::span<const std::uint8_t> labels, std::size_t classes) {
    if (logits.dim() != 4 || logits.shape()[1] != classes) {
        throw ShapeError("dice_ce_loss expects logits [B," + std::to_string(classes) + ",H,W], got " +
                         shape_str(logits.shape()));
    }
    const auto& s = logits.shape();
    const std::size_t B = s[0], K = s[1], HW = s[2] * s[3];
    if (labels.size() != B * HW) throw ShapeError("dice_ce_loss: label count does not match logits");
    std::vector<T> onehot(B * K * HW, T(0));
    std::vector<T> counts(K, T(0));
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < HW; ++p) {
            const std::size_t c = labels[b * HW + p];
            if (c >= K) throw std::invalid_argument("dice_ce_loss: label " + std::to_string(c) + " out of range");
            onehot[(b * K + c) * HW + p] = T(1);
            counts[c] += T(1);
        }
    }
    const Tensor<T> y(s, std::move(onehot));
    const Tensor<T> ysum(Shape{K}, std::move(counts));
    const auto p = softmax(logits, 1);
    const auto inter = sum(mul(p, y), {0, 2, 3});
    const auto psum = sum(p, {0, 2, 3});
    const T eps = static_cast<T>(kDiceSmooth);
    const auto dice = div(add_scalar(mul_scalar(inter, T(2)), eps), add_scalar(add(psum, ysum), eps));
    LossTerms<T> out;
    out.dice = add_scalar(neg(mean_all(dice)), T(1));
    out.ce = mul_scalar(sum_all(mul(log_softmax(logits, 1), y)), static_cast<T>(-1.0 / double(B * HW)));
    out.total = add(mul_scalar(out.dice, T(0.5)), mul_scalar(out.ce, T(0.5)));
    return out;
}

template LossTerms<float> dice_ce_terms(const Tensor<float>&, std::span<const std::uint8_t>, std::size_t);
template LossTerms<double> dice_ce_terms(const Tensor<double>&, std::span<const std::uint8_t>, std::size_t);

DiceResult dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, std::size_t classes) {
    if (pred.size() != target.size()) throw ShapeError("dice_score: masks differ in size");
    if (classes < 2) throw std::invalid_argument("dice_score needs at least 2 classes");
    std::vector<std::size_t> inter(classes, 0), a(classes, 0), b(classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] >= classes || target[i] >= classes) throw std::invalid_argument("dice_score: label out of range");
        ++a[pred[i]];
        ++b[target[i]];
        if (pred[i] == target[i]) ++inter[pred[i]];
    }
    DiceResult r;
    for (std::size_t c = 1; c < classes; ++c) {
        const std::size_t denom = a[c] + b[c];
        r.per_class.push_back(denom == 0 ? 1.0 : 2.0 * double(inter[c]) / double(denom));
    }
    double total = 0.0;
    for (double d : r.per_class) total += d;
    r.mean = total / double(r.per_class.size());
    return r;
}

std::vector<std::uint8_t> argmax_labels(const Tensor<float>& logits) {
    if (logits.dim() != 3) throw ShapeError("argmax_labels expects [K,H,W], got " + shape_str(logits.shape()));
    const std::size_t K = logits.shape()[0], HW = logits.shape()[1] * logits.shape()[2];
    const auto d = logits.data();
    std::vector<std::uint8_t> out(HW, 0);
    for (std::size_t p = 0; p < HW; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (d[k * HW + p] > d[best * HW + p]) best = k;
        out[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

DiceResult evaluate(const Model<float>& model, const std::vector<const SynthSample*>& samples, std::size_t tile) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    const std::size_t K = model.config().classes;
    const LogitFn fn = [&model](const Tensor<float>& batch) { return model.forward(batch, false); };
    DiceResult acc;
    acc.per_class.assign(K - 1, 0.0);
    for (const auto* s : samples) {
        const Tensor<float> image(Shape{s->channels, s->height, s->width}, s->image);
        const auto pred = argmax_labels(sliding_window_infer(fn, image, tile));
        const auto d = dice_score(pred, s->mask, K);
        for (std::size_t c = 0; c + 1 < K; ++c) acc.per_class[c] += d.per_class[c];
    }
    double total = 0.0;
    for (auto& v : acc.per_class) {
        v /= double(samples.size());
        total += v;
    }
    acc.mean = total / double(acc.per_class.size());
    return acc;
}

ConfigMap TrainOptions::to_map() const {
    ConfigMap m;
    m.set("train.epochs", std::to_string(epochs));
    m.set("train.batch", std::to_string(batch));
    m.set("train.lr", format_real(lr));
    m.set("train.weight_decay", format_real(adamw.weight_decay));
    m.set("train.beta1", format_real(adamw.beta1));
    m.set("train.beta2", format_real(adamw.beta2));
    m.set("train.eps", format_real(adamw.eps));
    m.set("train.seed", std::to_string(seed));
    m.set("train.augment", augment ? "true" : "false");
    m.set("train.crop", std::to_string(aug.crop));
    m.set("train.hflip", aug.hflip ? "true" : "false");
    m.set("train.vflip", aug.vflip ? "true" : "false");
    m.set("train.rot90", aug.rot90 ? "true" : "false");
    m.set("train.noise", format_real(aug.noise_sigma));
    m.set("train.val_every", std::to_string(val_every));
    m.set("train.tile", std::to_string(tile));
    return m;
}

TrainOptions TrainOptions::from_map(const ConfigMap& map, const TrainOptions& d) {
    TrainOptions o = d;
    o.epochs = map.size("train.epochs", d.epochs);
    o.batch = map.size("train.batch", d.batch);
    o.lr = map.real("train.lr", d.lr);
    o.adamw.weight_decay = map.real("train.weight_decay", d.adamw.weight_decay);
    o.adamw.beta1 = map.real("train.beta1", d.adamw.beta1);
    o.adamw.beta2 = map.real("train.beta2", d.adamw.beta2);
    o.adamw.eps = map.real("train.eps", d.adamw.eps);
    o.seed = static_cast<std::uint64_t>(map.integer("train.seed", static_cast<std::int64_t>(d.seed)));
    o.augment = map.boolean("train.augment", d.augment);
    o.aug.crop = map.size("train.crop", d.aug.crop);
    o.aug.hflip = map.boolean("train.hflip", d.aug.hflip);
    o.aug.vflip = map.boolean("train.vflip", d.aug.vflip);
    o.aug.rot90 = map.boolean("train.rot90", d.aug.rot90);
    o.aug.noise_sigma = map.real("train.noise", d.aug.noise_sigma);
    o.val_every = map.size("train.val_every", d.val_every);
    o.tile = map.size("train.tile", d.tile);
    return o;
}

std::string RunManifest::to_text() const {
    std::string out = "ukast-run 1\n";
    out += "seed " + std::to_string(seed) + "\n";
    out += "steps " + std::to_string(steps) + "\n";
    out += "[config]\n" + config + "[epochs]\n";
    for (const auto& e : epochs) {
        out += "epoch " + std::to_string(e.epoch) + " train_loss " + format_real(e.train_loss) + " lr_end " +
               format_real(e.lr_end);
        if (e.validated) out += " val_dice " + format_real(e.val_dice);
        out += "\n";
    }
    if (best_dice >= 0.0) out += "best_epoch " + std::to_string(best_epoch) + " best_dice " + format_real(best_dice) + "\n";
    return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw TrainingError("cannot write " + path.string());
}

}  // namespace

RunManifest fit(Model<float>& model, const std::vector<const SynthSample*>& train,
                const std::vector<const SynthSample*>& val, const TrainOptions& options) {
    if (train.empty()) throw TrainingError("fit: empty training set");
    if (options.batch == 0 || options.epochs == 0) throw TrainingError("fit: batch and epochs must be positive");
    const auto start = std::chrono::steady_clock::now();
    const auto& cfg = model.config();
    const std::size_t K = cfg.classes;
    AugmentOptions aug = options.aug;
    if (aug.crop == 0) aug.crop = cfg.image_size;
    const std::size_t tile = options.tile == 0 ? cfg.image_size : options.tile;
    const std::size_t n = train.size();
    const std::size_t batches = (n + options.batch - 1) / options.batch;
    const std::size_t total = options.epochs * batches;

    if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

    RunManifest manifest;
    manifest.seed = options.seed;
    manifest.config = cfg.to_text() + options.to_map().to_text();
    std::string ids;
    for (const auto* s : train) ids += (ids.empty() ? "" : ",") + std::to_string(s->id);
    manifest.config += "data.train_ids = " + ids + "\n";
    AdamW<float> opt(model.params().trainable(), options.adamw);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle(mix_seed(options.seed, 0x5a3f1e0000ull + epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::uint64_t batch_seed = mix_seed(mix_seed(options.seed, 0xba7c4ull), step);
            std::vector<SynthSample> owned;
            std::vector<const SynthSample*> batch;
            const std::size_t lo = b * options.batch, hi = std::min(n, lo + options.batch);
            owned.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                const auto* s = train[order[i]];
                if (options.augment) {
                    Rng rng(mix_seed(batch_seed, i - lo));
                    owned.push_back(augment(*s, rng, aug));
                    batch.push_back(&owned.back());
                } else {
                    batch.push_back(s);
                }
            }
            const auto images = stack_images(batch);
            const auto labels = stack_masks(batch);

            Tape<float> tape;
            double loss_value = 0.0;
            {
                Tape<float>::Scope scope(tape);
                model.params().zero_grad();
                const auto logits = model.forward(images, true);
                const auto loss = dice_ce_loss(logits, labels, K);
                loss_value = static_cast<double>(loss.item());
                if (!std::isfinite(loss_value)) {
                    char seed_hex[32];
                    std::snprintf(seed_hex, sizeof seed_hex, "0x%016llx", static_cast<unsigned long long>(batch_seed));
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(b) + " (step " + std::to_string(step) + ", batch seed " +
                                        seed_hex + ")");
                }
                tape.backward(loss);
            }
            lr = cosine_lr(step, total - 1, options.lr);
            opt.step(lr);
            ++step;
            loss_sum += loss_value * double(batch.size());
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / double(n);
        rec.lr_end = lr;
        const bool last = epoch + 1 == options.epochs;
        if (!val.empty() && (last || (options.val_every > 0 && (epoch + 1) % options.val_every == 0))) {
            rec.validated = true;
            rec.val_dice = evaluate(model, val, tile).mean;
            if (rec.val_dice > manifest.best_dice) {
                manifest.best_dice = rec.val_dice;
                manifest.best_epoch = epoch;
                if (!options.out_dir.empty()) save_model(model, options.out_dir / "best");
            }
        }
        manifest.epochs.push_back(rec);
        manifest.steps = step;
        if (options.verbose) {
            std::cerr << "epoch " << epoch << " loss " << rec.train_loss;
            if (rec.validated) std::cerr << " val_dice " << rec.val_dice;
            std::cerr << "\n";
        }
        if (!options.out_dir.empty()) write_text(options.out_dir / "manifest.txt", manifest.to_text());
    }
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!options.out_dir.empty()) {
        save_model(model, options.out_dir / "last");
        write_text(options.out_dir / "timing.txt", "wall_seconds " + format_real(manifest.wall_seconds) + "\n");
    }
    return manifest;
}

void save_model(const Model<float>& model, const std::filesystem::path& dir) {
    save_checkpoint(dir, model.params().to_arrays());
    write_text(dir / "model.cfg", model.config().to_text());
}

std::unique_ptr<Model<float>> load_model(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "model.cfg")) {
        throw CheckpointError("checkpoint manifest mismatch: " + (dir / "model.cfg").string() + " is missing");
    }
    const auto cfg = ModelConfig::from_map(ConfigMap::load((dir / "model.cfg").string()), desk_config());
    auto model = std::make_unique<Model<float>>(cfg, 0);
    const auto arrays = load_checkpoint(dir);
    model->params().load_arrays(arrays);
    return model;
}

}  // namespace ukast
