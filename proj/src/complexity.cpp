// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/complexity.hpp"

#include <cstdio>
#include <stdexcept>

namespace ukast {

namespace {

using u64 = std::uint64_t;

constexpr u64 kNormCost = 6;

u64 round_up(u64 v, u64 m) { return (v + m - 1) / m * m; }

CostRow elementwise_row(const std::string& name, u64 params, u64 ops) { return CostRow{name, params, 0, ops}; }

struct Counter {
    const ModelConfig& cfg;
    CostReport& report;

    void norm(const std::string& name, u64 elements, u64 channels) {
        report.add(elementwise_row(name, 2 * channels, kNormCost * elements));
    }
    void act(const std::string& name, ActivationKind kind, u64 elements) {
        report.add(elementwise_row(name, 0, activation_cost(kind, elements, cfg.rational_m, cfg.rational_n)));
    }
    void residual(const std::string& name, u64 elements) { report.add(elementwise_row(name, 0, elements)); }

    void ffn(const std::string& prefix, FfnKind kind, u64 tokens, u64 c) {
        const u64 hidden = c * cfg.hidden_ratio;
        const u64 coeffs = cfg.groups * (cfg.rational_m + 1 + cfg.rational_n);
        if (kind == FfnKind::mlp) {
            report.add(linear_cost(prefix + ".linear1", tokens, c, hidden, true));
            act(prefix + ".gelu", ActivationKind::gelu, tokens * hidden);
            report.add(linear_cost(prefix + ".linear2", tokens, hidden, c, true));
        } else if (kind == FfnKind::grkan) {
            report.add(CostRow{prefix + ".rational1", coeffs, 0,
                               activation_cost(ActivationKind::rational, tokens * c, cfg.rational_m, cfg.rational_n)});
            report.add(linear_cost(prefix + ".linear1", tokens, c, hidden, true));
            report.add(CostRow{prefix + ".rational2", coeffs, 0,
                               activation_cost(ActivationKind::rational, tokens * hidden, cfg.rational_m,
                                               cfg.rational_n)});
            report.add(linear_cost(prefix + ".linear2", tokens, hidden, c, true));
        } else {
            throw std::invalid_argument("count: unsupported feed-forward kind");
        }
    }

    void transformer_block(const std::string& prefix, u64 h, u64 w, u64 c, u64 heads, u64 window, u64 shift,
                           bool rel_bias, FfnKind kind) {
        const u64 t = h * w;
        norm(prefix + ".norm1", t * c, c);
        for (auto& r : attention_cost(prefix + ".attn", h, w, c, heads, window, shift, rel_bias)) report.add(std::move(r));
        residual(prefix + ".residual1", t * c);
        norm(prefix + ".norm2", t * c, c);
        ffn(prefix + ".ffn", kind, t, c);
        residual(prefix + ".residual2", t * c);
    }

    void conv_block(const std::string& prefix, u64 h, u64 w, u64 k, u64 cin, u64 cout) {
        report.add(conv_cost(prefix + ".conv", h, w, k, cin, cout, false));
        norm(prefix + ".bn", h * w * cout, cout);
        act(prefix + ".relu", ActivationKind::relu, h * w * cout);
    }

    void decoder_stage(const std::string& prefix, u64 in_h, u64 in_w, u64 scale, u64 deep_c, u64 skip_c, u64 out_c) {
        report.add(deconv_cost(prefix + ".deconv", in_h, in_w, scale, deep_c, out_c));
        const u64 h = in_h * scale, w = in_w * scale;
        for (std::size_t j = 0; j < cfg.decoder_blocks_per_stage; ++j) {
            conv_block(prefix + ".block" + std::to_string(j), h, w, 3, j == 0 ? out_c + skip_c : out_c, out_c);
        }
    }
};

}  // namespace

ActivationKind parse_activation(const std::string& name) {
    if (name == "relu") return ActivationKind::relu;
    if (name == "gelu") return ActivationKind::gelu;
    if (name == "rational") return ActivationKind::rational;
    if (name == "softmax" || name == "softmax_exp" || name == "softmax-exp") return ActivationKind::softmax_exp;
    throw std::invalid_argument("unknown activation kind '" + name + "'");
}

std::uint64_t activation_cost(ActivationKind kind, std::uint64_t elements, std::size_t m, std::size_t n) {
    switch (kind) {
        case ActivationKind::relu:
            return elements;
        case ActivationKind::gelu:
            return 14 * elements;
        case ActivationKind::rational:
            return (m + n + 3) * elements;
        case ActivationKind::softmax_exp:
            return 4 * elements;
    }
    throw std::invalid_argument("activation_cost: unknown activation kind");
}

void CostReport::add(CostRow row) {
    total_params += row.params;
    total_macs += row.macs;
    total_elementwise += row.elementwise;
    rows.push_back(std::move(row));
}

double CostReport::gflops() const {
    return (2.0 * static_cast<double>(total_macs) + static_cast<double>(total_elementwise)) / 1e9;
}

std::string CostReport::to_text(bool per_layer) const {
    std::string out;
    char buf[256];
    out += "# cost table " + std::string(kCostTableVersion) +
           ": relu=1 gelu=14 rational=m+n+3 softmax=4 norm=6 add=1 per element; GFLOPs = (2*MACs + elementwise)/1e9\n";
    std::snprintf(buf, sizeof buf, "# model %s, input %zux%zu\n", model.c_str(), height, width);
    out += buf;
    if (per_layer) {
        std::snprintf(buf, sizeof buf, "%-44s %12s %16s %16s\n", "layer", "params", "macs", "elementwise");
        out += buf;
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%-44s %12llu %16llu %16llu\n", r.name.c_str(),
                          static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs),
                          static_cast<unsigned long long>(r.elementwise));
            out += buf;
        }
    }
    std::snprintf(buf, sizeof buf, "%-44s %12llu %16llu %16llu\n", "total", static_cast<unsigned long long>(total_params),
                  static_cast<unsigned long long>(total_macs), static_cast<unsigned long long>(total_elementwise));
    out += buf;
    std::snprintf(buf, sizeof buf, "gflops %.6f\n", gflops());
    out += buf;
    return out;
}

std::string CostReport::to_csv() const {
    std::string out = "model,layer,params,macs,elementwise\n";
    for (const auto& r : rows) {
        out += model + "," + r.name + "," + std::to_string(r.params) + "," + std::to_string(r.macs) + "," +
               std::to_string(r.elementwise) + "\n";
    }
    out += model + ",total," + std::to_string(total_params) + "," + std::to_string(total_macs) + "," +
           std::to_string(total_elementwise) + "\n";
    return out;
}

CostRow linear_cost(const std::string& name, std::uint64_t tokens, std::uint64_t d_in, std::uint64_t d_out, bool bias) {
    return CostRow{name, d_in * d_out + (bias ? d_out : 0), tokens * d_in * d_out, bias ? tokens * d_out : 0};
}

CostRow conv_cost(const std::string& name, std::uint64_t out_h, std::uint64_t out_w, std::uint64_t k,
                  std::uint64_t c_in, std::uint64_t c_out, bool bias) {
    const u64 positions = out_h * out_w;
    return CostRow{name, k * k * c_in * c_out + (bias ? c_out : 0), positions * k * k * c_in * c_out,
                   bias ? positions * c_out : 0};
}

CostRow deconv_cost(const std::string& name, std::uint64_t in_h, std::uint64_t in_w, std::uint64_t k,
                    std::uint64_t c_in, std::uint64_t c_out) {
    const u64 out_positions = in_h * in_w * k * k;
    return CostRow{name, c_in * c_out * k * k + c_out, in_h * in_w * c_in * c_out * k * k, out_positions * c_out};
}

std::vector<CostRow> attention_cost(const std::string& name, std::uint64_t h, std::uint64_t w, std::uint64_t c,
                                    std::uint64_t heads, std::uint64_t window, std::uint64_t shift, bool rel_bias) {
    if (window == 0 || heads == 0 || c % heads != 0) throw std::invalid_argument("attention_cost: bad geometry");
    const u64 hp = round_up(h, window), wp = round_up(w, window);
    const u64 tokens = hp * wp;
    const u64 n = window * window;
    const u64 windows = tokens / n;
    const u64 logits = windows * heads * n * n;
    const bool masked = shift > 0 || hp != h || wp != w;
    std::vector<CostRow> rows;
    rows.push_back(linear_cost(name + ".qkv", tokens, c, 3 * c, true));
    CostRow core{name + ".core", 0, 2 * windows * n * n * c, tokens * c};  // QK^T and AV; q scaling
    core.elementwise += activation_cost(ActivationKind::softmax_exp, logits);
    if (rel_bias) {
        const u64 side = 2 * window - 1;
        core.params += side * side * heads;
        core.elementwise += logits;
    }
    if (masked) core.elementwise += logits;
    rows.push_back(core);
    rows.push_back(linear_cost(name + ".proj", tokens, c, c, true));
    return rows;
}

CostReport count(const ModelConfig& config, std::size_t height, std::size_t width) {
    config.validate();
    if (height == 0 || width == 0) throw std::invalid_argument("count: empty input");
    CostReport report;
    report.model = config.name;
    report.height = height;
    report.width = width;
    Counter k{config, report};

    const u64 mult = config.input_multiple();
    const u64 hp = round_up(height, mult), wp = round_up(width, mult);
    const u64 p = config.patch;
    const auto widths = config.level_widths();
    const std::size_t levels = config.level_count();
    std::vector<u64> level_h(levels), level_w(levels);

    if (config.encoder == EncoderKind::swin) {
        u64 h = hp / p, w = wp / p;
        report.add(linear_cost("embed.proj", h * w, config.in_channels * p * p, config.stages[0].embed, true));
        for (std::size_t s = 0; s < config.stages.size(); ++s) {
            const auto& st = config.stages[s];
            const u64 c = st.embed;
            const std::string stage = "stage" + std::to_string(s);
            for (std::size_t pair = 0; pair < st.depth; ++pair) {
                const std::string a = stage + ".block" + std::to_string(2 * pair);
                const std::string b = stage + ".block" + std::to_string(2 * pair + 1);
                if (st.rc_enabled) {
                    report.add(conv_cost(a + ".rc.conv", h, w, 3, c, c, false));
                    k.norm(a + ".rc.norm", h * w * c, c);
                    k.act(a + ".rc.relu", ActivationKind::relu, h * w * c);
                    k.residual(a + ".rc.residual", h * w * c);
                }
                k.transformer_block(a, h, w, c, st.heads, st.window, 0, config.rel_bias, st.ffn_kind);
                k.transformer_block(b, h, w, c, st.heads, st.window, st.window / 2, config.rel_bias, st.ffn_kind);
            }
            level_h[s] = h;
            level_w[s] = w;
            if (s + 1 < config.stages.size()) {
                h = (h + 1) / 2;
                w = (w + 1) / 2;
                k.norm(stage + ".merge.norm", h * w * 4 * c, 4 * c);
                report.add(linear_cost(stage + ".merge.reduction", h * w, 4 * c, 2 * c, false));
            }
        }
    } else if (config.encoder == EncoderKind::vit) {
        if (height != config.image_size || width != config.image_size) {
            throw std::invalid_argument("count: vit encoder is fixed to " + std::to_string(config.image_size) + "x" +
                                        std::to_string(config.image_size) + " inputs");
        }
        const auto& st = config.stages[0];
        const u64 g = hp / p, c = st.embed;
        report.add(linear_cost("embed.proj", g * g, config.in_channels * p * p, c, true));
        report.add(CostRow{"embed.pos", g * g * c, 0, g * g * c});
        for (std::size_t b = 0; b < st.depth; ++b) {
            k.transformer_block("stage0.block" + std::to_string(b), g, g, c, st.heads, g, 0, false, st.ffn_kind);
        }
        for (std::size_t lv = 0; lv < levels; ++lv) {
            const std::string prefix = "adapter" + std::to_string(lv);
            const std::size_t steps = levels - 1 - lv;
            u64 r = g;
            if (steps == 0) {
                k.conv_block(prefix + ".up0.block", r, r, 1, c, widths[lv]);
            } else {
                for (std::size_t j = 0; j < steps; ++j) {
                    const std::string up = prefix + ".up" + std::to_string(j);
                    report.add(deconv_cost(up + ".deconv", r, r, 2, j == 0 ? c : widths[lv], widths[lv]));
                    r *= 2;
                    k.conv_block(up + ".block", r, r, 3, widths[lv], widths[lv]);
                }
            }
            level_h[lv] = level_w[lv] = r;
        }
    } else {
        throw std::invalid_argument("count: unsupported encoder kind");
    }

    k.conv_block("decoder.stem", hp, wp, 3, config.in_channels, widths[0]);
    for (std::size_t lv = levels - 1; lv-- > 0;) {
        k.decoder_stage("decoder.up" + std::to_string(lv), level_h[lv + 1], level_w[lv + 1], 2, widths[lv + 1],
                        widths[lv], widths[lv]);
    }
    const u64 full = config.encoder == EncoderKind::swin ? p : 2;
    k.decoder_stage("decoder.up_full", level_h[0], level_w[0], full, widths[0], widths[0], widths[0]);
    report.add(conv_cost("head", hp, wp, 1, widths[0], config.classes, true));
    return report;
}

}  // namespace ukast
