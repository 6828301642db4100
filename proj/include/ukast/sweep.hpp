// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ukast/train.hpp"

namespace ukast {

struct SweepOptions {
    std::vector<double> fractions{0.10, 0.25, 0.50, 1.00};
    std::vector<std::string> variants{"swin+mlp+rc", "swin+grkan+rc"};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    ModelConfig base = desk_config();
    TrainOptions train;
    std::size_t workers = 1;
    std::filesystem::path out_dir;  // per-cell run directories and table files when set
};

struct SweepCell {
    std::string variant;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    double dice = 0.0;
    std::string error;
};

struct SweepResult {
    std::vector<double> fractions;
    std::vector<std::string> variants;
    std::vector<SweepCell> cells;  // variant-major, then fraction, then seed

    /// Mean test Dice over the successful seeds of one cell; NaN if none.
    double mean(const std::string& variant, double fraction) const;
    /// The mlp row paired with a grkan row (same encoder and rc), or "".
    static std::string mlp_counterpart(const std::string& variant);

    std::string table_text() const;
    std::string table_csv() const;
};

/// Trains every (variant, fraction, seed) cell on the nested training subset
/// and scores it on the test split. Cell errors are recorded, not thrown.
SweepResult run_sweep(const Dataset& data, const SweepOptions& options);

/// Worker cap from UKAST_THREADS (default 1).
std::size_t worker_limit();

}  // namespace ukast
