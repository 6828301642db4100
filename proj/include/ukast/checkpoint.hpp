// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ukast/tensor.hpp"

namespace ukast {

/// A named float32 array as stored on disk.
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Writes `<dir>/manifest.txt` (one `name dims...` line per array) and one
/// raw little-endian float32 file `<dir>/<name>.bin` per array.
void save_checkpoint(const std::filesystem::path& dir, std::span<const NamedArray> arrays);

/// Reads every array listed in `<dir>/manifest.txt`, in manifest order.
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& dir);

}  // namespace ukast
