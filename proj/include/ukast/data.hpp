// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ukast/random.hpp"
#include "ukast/tensor.hpp"

namespace ukast {

/// One image with its label map. Pixels are stored row-major, channel first.
struct SynthSample {
    std::uint64_t id = 0;
    std::size_t channels = 1, height = 0, width = 0;
    std::vector<float> image;         // [C,H,W]
    std::vector<std::uint8_t> mask;   // [H,W]
};

struct SynthSpec {
    std::size_t train_count = 64;
    std::size_t test_count = 16;
    std::size_t size = 64;  // square images
    std::size_t channels = 1;
    std::size_t classes = 2;
};

struct Dataset {
    SynthSpec spec;
    std::uint64_t seed = 0;
    std::vector<SynthSample> train;
    std::vector<SynthSample> test;
};

class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Sample `id` of the synthetic benchmark: 1-3 anti-aliased ellipses or
/// lobed blobs on a textured background, plus per-image noise. A pure
/// function of (seed, id); the foreground fraction is kept in [0.02, 0.6].
SynthSample generate_sample(const SynthSpec& spec, std::uint64_t seed, std::uint64_t id);

/// Train ids are 0..train_count-1, test ids follow.
Dataset generate(const SynthSpec& spec, std::uint64_t seed);

/// Training indices for `fraction` of `train_count` samples: a prefix of a
/// seeded permutation, so smaller fractions are subsets of larger ones.
std::vector<std::size_t> fraction_ids(std::size_t train_count, double fraction, std::uint64_t seed);

struct AugmentOptions {
    std::size_t crop = 0;  // 0 keeps the full image
    bool hflip = true;
    bool vflip = true;
    bool rot90 = true;
    double noise_sigma = 0.02;
};

/// Random crop, 50% horizontal flip, 50% vertical flip, k*90 degree
/// counter-clockwise rotation, then Gaussian noise on the image only.
SynthSample augment(const SynthSample& sample, Rng& rng, const AugmentOptions& options);

/// Geometric helpers, applied to every channel of a [C,H,W] buffer.
template <typename V>
std::vector<V> flip_horizontal(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w);
template <typename V>
std::vector<V> flip_vertical(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w);
/// Counter-clockwise quarter turns: out[i][j] = in[j][w-1-i] for k = 1.
template <typename V>
std::vector<V> rotate90(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w, int k);

/// Writes one `.img` (float32) and one `.mask` (uint8) file per sample and
/// an `index.txt` manifest.
void export_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Stacks samples into images [B,C,H,W] and labels [B*H*W].
Tensor<float> stack_images(const std::vector<const SynthSample*>& samples);
std::vector<std::uint8_t> stack_masks(const std::vector<const SynthSample*>& samples);

/// Tile origins along one axis: stride apart, last one clamped to end at
/// `extent`.
std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t tile, std::size_t stride);
std::size_t tile_stride(std::size_t tile, double overlap);

/// How many tiles cover each pixel, [H*W].
std::vector<std::uint32_t> coverage_counts(std::size_t height, std::size_t width, std::size_t tile,
                                           double overlap = 0.5);

using LogitFn = std::function<Tensor<float>(const Tensor<float>&)>;

/// image [C,H,W] -> logits [K,H,W]. Tiles of size `tile` on a stride of
/// tile * (1 - overlap) are run through `model` as one batch [n,C,tile,tile]
/// and their logits averaged uniformly.
Tensor<float> sliding_window_infer(const LogitFn& model, const Tensor<float>& image, std::size_t tile,
                                   double overlap = 0.5);

}  // namespace ukast
