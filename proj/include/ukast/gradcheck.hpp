// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ukast/tensor.hpp"

namespace ukast {

struct GradCheckOptions {
    double step = 1e-5;
    std::uint64_t seed = 20260;
    /// Entries probed per input tensor; 0 probes all of them.
    std::size_t max_entries = 0;
};

struct GradCheckInput {
    std::string name;
    double rel_error = 0.0;
    std::size_t probed = 0;
};

struct GradCheckReport {
    std::string name;
    double tolerance = 0.0;
    double max_error = 0.0;
    bool passed = false;
    std::vector<GradCheckInput> inputs;
};

/// Compares tape gradients of L = sum(f() * R), R a fixed random tensor,
/// against central differences for every tensor in `wrt`. `f` must read the
/// tensors in `wrt` (they are perturbed in place). Error per input is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-3).
GradCheckReport check_gradients(const std::string& name, const std::function<Tensor<double>()>& f,
                                std::vector<std::pair<std::string, Tensor<double>>> wrt, double tolerance,
                                const GradCheckOptions& options = {});

/// Scopes: elementwise, matmul, softmax, layer_norm, rational, grkan, conv,
/// deconv, attention, block, loss, all.
std::vector<std::string> gradcheck_scopes();
std::vector<GradCheckReport> run_gradcheck_suite(const std::string& scope);

}  // namespace ukast
