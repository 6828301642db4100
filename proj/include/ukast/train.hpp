// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ukast/data.hpp"
#include "ukast/layers.hpp"
#include "ukast/model.hpp"

namespace ukast {

class TrainingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct AdamWOptions {
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay on ParamKind::weight tensors only.
template <typename T>
class AdamW {
   public:
    AdamW(std::vector<NamedParam<T>> params, AdamWOptions options);

    /// One update at learning rate `lr`. Every parameter must hold a grad.
    void step(double lr);
    std::size_t step_count() const { return step_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

   private:
    std::vector<NamedParam<T>> params_;
    AdamWOptions options_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t step_ = 0;
};

/// base * (1 + cos(pi * step / total)) / 2; `total == 0` gives base.
double cosine_lr(std::size_t step, std::size_t total, double base);

inline constexpr double kDiceSmooth = 1e-5;

template <typename T>
struct LossTerms {
    Tensor<T> total;  // 0.5 * dice + 0.5 * ce
    Tensor<T> dice;   // 1 - mean_c soft Dice over all classes
    Tensor<T> ce;     // mean pixel cross-entropy
};

/// logits [B,K,H,W], labels [B*H*W]. Soft Dice per class is pooled over the
/// batch before averaging over classes.
template <typename T>
LossTerms<T> dice_ce_terms(const Tensor<T>& logits, std::span<const std::uint8_t> labels, std::size_t classes);

template <typename T>
Tensor<T> dice_ce_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels, std::size_t classes) {
    return dice_ce_terms(logits, labels, classes).total;
}

struct DiceResult {
    std::vector<double> per_class;  // foreground classes 1..K-1
    double mean = 0.0;
};

/// Hard Dice 2|A n B| / (|A| + |B|) per foreground class; 1 when both are empty.
DiceResult dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, std::size_t classes);

/// Argmax over the class axis of [K,H,W] logits.
std::vector<std::uint8_t> argmax_labels(const Tensor<float>& logits);

/// Sliding-window prediction per sample, Dice averaged over samples.
DiceResult evaluate(const Model<float>& model, const std::vector<const SynthSample*>& samples, std::size_t tile);

struct TrainOptions {
    std::size_t epochs = 40;
    std::size_t batch = 8;
    double lr = 2e-4;
    AdamWOptions adamw;
    std::uint64_t seed = 0;
    bool augment = true;
    AugmentOptions aug;      // crop 0 uses the model's image size
    std::size_t val_every = 1;  // epochs between validations; the last epoch always validates
    std::size_t tile = 0;       // 0 uses the model's image size
    std::filesystem::path out_dir;  // empty disables manifest/checkpoint files
    bool verbose = false;

    ConfigMap to_map() const;
    static TrainOptions from_map(const ConfigMap& map, const TrainOptions& defaults);
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    bool validated = false;
    double val_dice = 0.0;
    double lr_end = 0.0;
};

/// Append-only log of one training run. Wall time is kept out of the text
/// form (it goes to a sidecar) so identical runs serialise identically.
struct RunManifest {
    std::uint64_t seed = 0;
    std::string config;  // key = value snapshot, including data.train_ids
    std::vector<EpochRecord> epochs;
    double best_dice = -1.0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    double wall_seconds = 0.0;

    std::string to_text() const;
};

/// Trains `model` on `train` and validates on `val` (may be empty).
RunManifest fit(Model<float>& model, const std::vector<const SynthSample*>& train,
                const std::vector<const SynthSample*>& val, const TrainOptions& options);

/// `<dir>/model.cfg` plus the tensor checkpoint.
void save_model(const Model<float>& model, const std::filesystem::path& dir);
std::unique_ptr<Model<float>> load_model(const std::filesystem::path& dir);

}  // namespace ukast
