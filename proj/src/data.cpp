// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ukast {

namespace {

constexpr std::size_t kSupersample = 4;
constexpr double kMinForeground = 0.02;
constexpr double kMaxForeground = 0.6;
constexpr int kMaxAttempts = 1000;

struct Shape2d {
    double cx, cy, a, b, cos_t, sin_t;
    bool blob;
    int lobes;
    double wobble, phase;
    std::uint8_t label;
    double intensity;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * cos_t + dy * sin_t) / a;
        const double v = (-dx * sin_t + dy * cos_t) / b;
        const double r2 = u * u + v * v;
        double limit = 1.0;
        if (blob) limit += wobble * std::sin(lobes * std::atan2(v, u) + phase);
        return r2 <= limit * limit;
    }
    double reach() const { return std::max(a, b) * (1.0 + (blob ? wobble : 0.0)) + 1.0; }
};

bool render(const SynthSpec& spec, Rng& rng, SynthSample& out) {
    const std::size_t S = spec.size, C = spec.channels;
    const double size = static_cast<double>(S);
    const double base = rng.uniform(0.15, 0.35);
    struct Wave {
        double amp, fx, fy, phase;
    };
    Wave waves[3];
    for (auto& w : waves) {
        w.amp = rng.uniform(0.02, 0.06);
        w.fx = rng.uniform(0.5, 4.0);
        w.fy = rng.uniform(0.5, 4.0);
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    static constexpr double kContrast[] = {0.45, 0.3, 0.18};
    const double contrast = kContrast[rng.below(3)];
    const std::size_t shape_count = 1 + rng.below(3);
    std::vector<Shape2d> shapes(shape_count);
    for (auto& sh : shapes) {
        sh.label = static_cast<std::uint8_t>(spec.classes <= 2 ? 1 : 1 + rng.below(spec.classes - 1));
        const double rank = spec.classes <= 2 ? 0.0 : double(sh.label - 1) / double(std::max<std::size_t>(1, spec.classes - 2));
        sh.intensity = std::clamp(base + contrast * (0.6 + 0.4 * rank) * rng.uniform(0.9, 1.1), 0.0, 1.0);
        sh.cx = rng.uniform(0.15, 0.85) * size;
        sh.cy = rng.uniform(0.15, 0.85) * size;
        sh.a = rng.uniform(0.06, 0.22) * size;
        sh.b = rng.uniform(0.06, 0.22) * size;
        const double theta = rng.uniform(0.0, std::numbers::pi);
        sh.cos_t = std::cos(theta);
        sh.sin_t = std::sin(theta);
        sh.blob = rng.bernoulli(0.5);
        sh.lobes = 3 + static_cast<int>(rng.below(3));
        sh.wobble = rng.uniform(0.1, 0.25);
        sh.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double noise = rng.uniform(0.01, 0.04);

    std::vector<double> value(S * S);
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
            double t = base;
            for (const auto& w : waves) {
                t += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * j + w.fy * i) / size + w.phase);
            }
            value[i * S + j] = t;
        }
    }
    out.mask.assign(S * S, 0);
    const double inv = 1.0 / double(kSupersample * kSupersample);
    for (const auto& sh : shapes) {
        const double r = sh.reach();
        const auto lo_i = static_cast<std::size_t>(std::max(0.0, std::floor(sh.cy - r)));
        const auto hi_i = static_cast<std::size_t>(std::min(size, std::ceil(sh.cy + r)));
        const auto lo_j = static_cast<std::size_t>(std::max(0.0, std::floor(sh.cx - r)));
        const auto hi_j = static_cast<std::size_t>(std::min(size, std::ceil(sh.cx + r)));
        for (std::size_t i = lo_i; i < hi_i; ++i) {
            for (std::size_t j = lo_j; j < hi_j; ++j) {
                std::size_t hits = 0;
                for (std::size_t si = 0; si < kSupersample; ++si)
                    for (std::size_t sj = 0; sj < kSupersample; ++sj)
                        hits += sh.contains(j + (sj + 0.5) / kSupersample, i + (si + 0.5) / kSupersample);
                if (hits == 0) continue;
                const double alpha = hits * inv;
                value[i * S + j] = value[i * S + j] * (1.0 - alpha) + sh.intensity * alpha;
                if (2 * hits >= kSupersample * kSupersample) out.mask[i * S + j] = sh.label;
            }
        }
    }
    const auto fg = std::count_if(out.mask.begin(), out.mask.end(), [](std::uint8_t m) { return m != 0; });
    const double frac = double(fg) / double(S * S);
    if (frac < kMinForeground || frac > kMaxForeground) return false;

    out.image.resize(C * S * S);
    for (std::size_t c = 0; c < C; ++c) {
        const double gain = 1.0 - 0.1 * double(c);
        for (std::size_t p = 0; p < S * S; ++p) {
            out.image[c * S * S + p] = static_cast<float>(std::clamp(value[p] * gain + noise * rng.normal(), 0.0, 1.0));
        }
    }
    return true;
}

void write_u32_le(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

}  // namespace

SynthSample generate_sample(const SynthSpec& spec, std::uint64_t seed, std::uint64_t id) {
    if (spec.size < 8 || spec.channels == 0 || spec.classes < 2 || spec.classes > 255) {
        throw DataError("invalid synthetic spec (size >= 8, channels >= 1, 2 <= classes <= 255)");
    }
    SynthSample s;
    s.id = id;
    s.channels = spec.channels;
    s.height = s.width = spec.size;
    const std::uint64_t stream = mix_seed(seed, id);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(mix_seed(stream, static_cast<std::uint64_t>(attempt)));
        if (render(spec, rng, s)) return s;
    }
    throw DataError("could not draw sample " + std::to_string(id) + " within the foreground bounds");
}

Dataset generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.train_count == 0) throw DataError("train_count must be positive");
    Dataset d;
    d.spec = spec;
    d.seed = seed;
    for (std::size_t i = 0; i < spec.train_count; ++i) d.train.push_back(generate_sample(spec, seed, i));
    for (std::size_t i = 0; i < spec.test_count; ++i) d.test.push_back(generate_sample(spec, seed, spec.train_count + i));
    return d;
}

std::vector<std::size_t> fraction_ids(std::size_t train_count, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("fraction must be in (0, 1]");
    std::vector<std::size_t> perm(train_count);
    for (std::size_t i = 0; i < train_count; ++i) perm[i] = i;
    Rng rng(mix_seed(seed, 0x5eedf4ac7u));
    for (std::size_t i = train_count; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * double(train_count))), 1,
                                              train_count);
    perm.resize(keep);
    std::sort(perm.begin(), perm.end());
    return perm;
}

template <typename V>
std::vector<V> flip_horizontal(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w) {
    std::vector<V> out(x.size());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) out[(k * h + i) * w + j] = x[(k * h + i) * w + (w - 1 - j)];
    return out;
}

template <typename V>
std::vector<V> flip_vertical(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w) {
    std::vector<V> out(x.size());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) out[(k * h + i) * w + j] = x[(k * h + (h - 1 - i)) * w + j];
    return out;
}

template <typename V>
std::vector<V> rotate90(const std::vector<V>& x, std::size_t c, std::size_t h, std::size_t w, int k) {
    k = ((k % 4) + 4) % 4;
    std::vector<V> cur = x;
    for (int r = 0; r < k; ++r) {
        // [h,w] -> [w,h], out[i][j] = in[j][w-1-i]
        std::vector<V> out(cur.size());
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < h; ++j) out[(ch * w + i) * h + j] = cur[(ch * h + j) * w + (w - 1 - i)];
        cur = std::move(out);
        std::swap(h, w);
    }
    return cur;
}

template std::vector<float> flip_horizontal(const std::vector<float>&, std::size_t, std::size_t, std::size_t);
template std::vector<std::uint8_t> flip_horizontal(const std::vector<std::uint8_t>&, std::size_t, std::size_t, std::size_t);
template std::vector<float> flip_vertical(const std::vector<float>&, std::size_t, std::size_t, std::size_t);
template std::vector<std::uint8_t> flip_vertical(const std::vector<std::uint8_t>&, std::size_t, std::size_t, std::size_t);
template std::vector<float> rotate90(const std::vector<float>&, std::size_t, std::size_t, std::size_t, int);
template std::vector<std::uint8_t> rotate90(const std::vector<std::uint8_t>&, std::size_t, std::size_t, std::size_t, int);

SynthSample augment(const SynthSample& sample, Rng& rng, const AugmentOptions& options) {
    const std::size_t C = sample.channels, H = sample.height, W = sample.width;
    const std::size_t crop = options.crop == 0 ? std::min(H, W) : options.crop;
    const std::size_t ch = options.crop == 0 ? H : crop, cw = options.crop == 0 ? W : crop;
    if (ch > H || cw > W) throw DataError("crop " + std::to_string(crop) + " exceeds image size");
    const std::size_t top = H > ch ? rng.below(H - ch + 1) : 0;
    const std::size_t left = W > cw ? rng.below(W - cw + 1) : 0;

    SynthSample out;
    out.id = sample.id;
    out.channels = C;
    out.height = ch;
    out.width = cw;
    out.image.resize(C * ch * cw);
    out.mask.resize(ch * cw);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < ch; ++i)
            for (std::size_t j = 0; j < cw; ++j)
                out.image[(c * ch + i) * cw + j] = sample.image[(c * H + top + i) * W + left + j];
    for (std::size_t i = 0; i < ch; ++i)
        for (std::size_t j = 0; j < cw; ++j) out.mask[i * cw + j] = sample.mask[(top + i) * W + left + j];

    if (options.hflip && rng.bernoulli(0.5)) {
        out.image = flip_horizontal(out.image, C, ch, cw);
        out.mask = flip_horizontal(out.mask, 1, ch, cw);
    }
    if (options.vflip && rng.bernoulli(0.5)) {
        out.image = flip_vertical(out.image, C, ch, cw);
        out.mask = flip_vertical(out.mask, 1, ch, cw);
    }
    if (options.rot90) {
        const int k = static_cast<int>(rng.below(4));
        out.image = rotate90(out.image, C, out.height, out.width, k);
        out.mask = rotate90(out.mask, 1, out.height, out.width, k);
        if (k % 2 == 1) std::swap(out.height, out.width);
    }
    if (options.noise_sigma > 0.0) {
        for (auto& v : out.image) v = static_cast<float>(v + options.noise_sigma * rng.normal());
    }
    return out;
}

void export_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.txt");
    if (!index) throw DataError("cannot write " + (dir / "index.txt").string());
    index << "ukast-synth 1\n";
    index << "seed " << data.seed << "\n";
    index << "size " << data.spec.size << "\n";
    index << "channels " << data.spec.channels << "\n";
    index << "classes " << data.spec.classes << "\n";
    index << "train " << data.train.size() << "\n";
    index << "test " << data.test.size() << "\n";
    auto write_sample = [&](const SynthSample& s, const char* split) {
        const std::string stem = "sample_" + std::to_string(s.id);
        std::ofstream img(dir / (stem + ".img"), std::ios::binary);
        for (float v : s.image) write_u32_le(img, std::bit_cast<std::uint32_t>(v));
        std::ofstream mask(dir / (stem + ".mask"), std::ios::binary);
        mask.write(reinterpret_cast<const char*>(s.mask.data()), static_cast<std::streamsize>(s.mask.size()));
        if (!img || !mask) throw DataError("failed writing sample " + stem);
        index << "sample " << s.id << " " << split << " " << stem << ".img " << stem << ".mask\n";
    };
    for (const auto& s : data.train) write_sample(s, "train");
    for (const auto& s : data.test) write_sample(s, "test");
    if (!index) throw DataError("failed writing " + (dir / "index.txt").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
    std::ifstream index(dir / "index.txt");
    if (!index) throw DataError("missing index.txt in " + dir.string());
    std::string magic;
    int version = 0;
    index >> magic >> version;
    if (magic != "ukast-synth" || version != 1) throw DataError("unrecognised dataset index in " + dir.string());
    Dataset d;
    std::string key;
    std::size_t train = 0, test = 0;
    while (index >> key) {
        if (key == "seed") {
            index >> d.seed;
        } else if (key == "size") {
            index >> d.spec.size;
        } else if (key == "channels") {
            index >> d.spec.channels;
        } else if (key == "classes") {
            index >> d.spec.classes;
        } else if (key == "train") {
            index >> train;
        } else if (key == "test") {
            index >> test;
        } else if (key == "sample") {
            SynthSample s;
            std::string split, img_name, mask_name;
            index >> s.id >> split >> img_name >> mask_name;
            s.channels = d.spec.channels;
            s.height = s.width = d.spec.size;
            const std::size_t n = s.height * s.width;
            std::ifstream img(dir / img_name, std::ios::binary);
            std::vector<unsigned char> bytes(4 * s.channels * n);
            img.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            if (!img || img.peek() != std::char_traits<char>::eof()) throw DataError("bad image file " + img_name);
            s.image.resize(s.channels * n);
            for (std::size_t i = 0; i < s.image.size(); ++i) {
                const std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                                        (std::uint32_t(bytes[4 * i + 2]) << 16) | (std::uint32_t(bytes[4 * i + 3]) << 24);
                s.image[i] = std::bit_cast<float>(u);
            }
            std::ifstream mask(dir / mask_name, std::ios::binary);
            s.mask.resize(n);
            mask.read(reinterpret_cast<char*>(s.mask.data()), static_cast<std::streamsize>(n));
            if (!mask || mask.peek() != std::char_traits<char>::eof()) throw DataError("bad mask file " + mask_name);
            for (auto m : s.mask) {
                if (m >= d.spec.classes) throw DataError("mask label out of range in " + mask_name);
            }
            (split == "train" ? d.train : d.test).push_back(std::move(s));
        } else {
            throw DataError("unknown index key '" + key + "'");
        }
    }
    if (d.train.size() != train || d.test.size() != test) throw DataError("index sample counts do not match");
    d.spec.train_count = train;
    d.spec.test_count = test;
    return d;
}

Tensor<float> stack_images(const std::vector<const SynthSample*>& samples) {
    if (samples.empty()) throw DataError("cannot stack an empty batch");
    const auto* f = samples.front();
    std::vector<float> out;
    out.reserve(samples.size() * f->image.size());
    for (const auto* s : samples) {
        if (s->channels != f->channels || s->height != f->height || s->width != f->width) {
            throw DataError("batch samples differ in shape");
        }
        out.insert(out.end(), s->image.begin(), s->image.end());
    }
    return Tensor<float>(Shape{samples.size(), f->channels, f->height, f->width}, std::move(out));
}

std::vector<std::uint8_t> stack_masks(const std::vector<const SynthSample*>& samples) {
    std::vector<std::uint8_t> out;
    for (const auto* s : samples) out.insert(out.end(), s->mask.begin(), s->mask.end());
    return out;
}

std::size_t tile_stride(std::size_t tile, double overlap) {
    if (!(overlap >= 0.0 && overlap < 1.0)) throw DataError("overlap must be in [0, 1)");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(double(tile) * (1.0 - overlap))));
}

std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t tile, std::size_t stride) {
    if (tile == 0 || stride == 0) throw DataError("tile and stride must be positive");
    if (tile > extent) throw DataError("tile " + std::to_string(tile) + " is larger than the image (" +
                                       std::to_string(extent) + ")");
    std::vector<std::size_t> out;
    for (std::size_t s = 0;; s += stride) {
        if (s + tile >= extent) {
            out.push_back(extent - tile);
            break;
        }
        out.push_back(s);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::uint32_t> coverage_counts(std::size_t height, std::size_t width, std::size_t tile, double overlap) {
    const std::size_t stride = tile_stride(tile, overlap);
    std::vector<std::uint32_t> counts(height * width, 0);
    for (auto y : tile_starts(height, tile, stride))
        for (auto x : tile_starts(width, tile, stride))
            for (std::size_t i = 0; i < tile; ++i)
                for (std::size_t j = 0; j < tile; ++j) ++counts[(y + i) * width + x + j];
    return counts;
}

Tensor<float> sliding_window_infer(const LogitFn& model, const Tensor<float>& image, std::size_t tile, double overlap) {
    if (image.dim() != 3) throw ShapeError("sliding_window_infer expects [C,H,W], got " + shape_str(image.shape()));
    const std::size_t C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
    const std::size_t stride = tile_stride(tile, overlap);
    const auto ys = tile_starts(H, tile, stride);
    const auto xs = tile_starts(W, tile, stride);
    const std::size_t n = ys.size() * xs.size();

    std::vector<float> batch(n * C * tile * tile);
    const auto src = image.data();
    std::size_t t = 0;
    for (auto y : ys) {
        for (auto x : xs) {
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < tile; ++i)
                    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((c * H + y + i) * W + x), tile,
                                batch.begin() + static_cast<std::ptrdiff_t>(((t * C + c) * tile + i) * tile));
            ++t;
        }
    }
    const auto logits = model(Tensor<float>(Shape{n, C, tile, tile}, std::move(batch)));
    if (logits.dim() != 4 || logits.shape()[0] != n || logits.shape()[2] != tile || logits.shape()[3] != tile) {
        throw ShapeError("tile model returned " + shape_str(logits.shape()));
    }
    const std::size_t K = logits.shape()[1];
    std::vector<float> acc(K * H * W, 0.0f);
    std::vector<std::uint32_t> count(H * W, 0);
    const auto ld = logits.data();
    t = 0;
    for (auto y : ys) {
        for (auto x : xs) {
            for (std::size_t i = 0; i < tile; ++i) {
                for (std::size_t j = 0; j < tile; ++j) {
                    const std::size_t p = (y + i) * W + x + j;
                    // First write assigns so a single tile reproduces its logits bit for bit.
                    for (std::size_t k = 0; k < K; ++k) {
                        const float v = ld[((t * K + k) * tile + i) * tile + j];
                        acc[k * H * W + p] = count[p] == 0 ? v : acc[k * H * W + p] + v;
                    }
                    ++count[p];
                }
            }
            ++t;
        }
    }
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t p = 0; p < H * W; ++p) acc[k * H * W + p] /= static_cast<float>(count[p]);
    return Tensor<float>(Shape{K, H, W}, std::move(acc));
}

}  // namespace ukast
