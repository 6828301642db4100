// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ukast/model.hpp"

namespace ukast {

/// Version tag of the per-element cost table below; printed with every report.
inline constexpr const char* kCostTableVersion = "ukast-cost-v1";

enum class ActivationKind { relu, gelu, rational, softmax_exp };

ActivationKind parse_activation(const std::string& name);

/// Per-element op counts:
///   relu         1
///   gelu        14  x*x, *x, *0.044715, +x, *sqrt(2/pi), tanh as
///                   (e^u - e^-u) / (e^u + e^-u) = 6, +1, *x, *0.5
///   rational   m+n+3  Horner steps for P and Q, |Q|, 1+, divide
///   softmax_exp  4  subtract max, exp, accumulate, divide
/// Other elementwise work is charged at: layer/batch/instance norm 6,
/// bias or residual add 1, scaling 1.
std::uint64_t activation_cost(ActivationKind kind, std::uint64_t elements, std::size_t m = 3, std::size_t n = 4);

struct CostRow {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    std::uint64_t elementwise = 0;
};

struct CostReport {
    std::string model;
    std::size_t height = 0, width = 0;
    std::vector<CostRow> rows;
    std::uint64_t total_params = 0;
    std::uint64_t total_macs = 0;
    std::uint64_t total_elementwise = 0;

    void add(CostRow row);
    /// (2 MACs + elementwise) / 1e9.
    double gflops() const;
    std::string to_text(bool per_layer = true) const;
    std::string to_csv() const;
};

/// y = x W + b over `tokens` rows.
CostRow linear_cost(const std::string& name, std::uint64_t tokens, std::uint64_t d_in, std::uint64_t d_out, bool bias);
/// Stride-1 k x k convolution producing out_h x out_w.
CostRow conv_cost(const std::string& name, std::uint64_t out_h, std::uint64_t out_w, std::uint64_t k, std::uint64_t c_in,
                  std::uint64_t c_out, bool bias);
/// Non-overlapping transposed convolution from in_h x in_w.
CostRow deconv_cost(const std::string& name, std::uint64_t in_h, std::uint64_t in_w, std::uint64_t k, std::uint64_t c_in,
                    std::uint64_t c_out);
/// Windowed (or global, window = grid) multi-head attention on an h x w grid:
/// qkv, the two N^2 d products per window, bias/mask/softmax, projection.
std::vector<CostRow> attention_cost(const std::string& name, std::uint64_t h, std::uint64_t w, std::uint64_t channels,
                                    std::uint64_t heads, std::uint64_t window, std::uint64_t shift, bool rel_bias);

/// Symbolic forward pass over `config` for one image of height x width.
/// Parameter totals equal the live model's trainable scalar count.
CostReport count(const ModelConfig& config, std::size_t height, std::size_t width);

}  // namespace ukast
