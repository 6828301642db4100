// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace ukast {

namespace {

void validate_name(const std::string& name) {
    if (name.empty()) throw CheckpointError("empty array name");
    for (char c : name) {
        if (c == '/' || c == '\\' || c == ' ' || c == '\t' || c == '\n') {
            throw CheckpointError("array name '" + name + "' contains a path separator or whitespace");
        }
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, std::span<const NamedArray> arrays) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw CheckpointError("cannot write " + (dir / "manifest.txt").string());
    for (const auto& arr : arrays) {
        validate_name(arr.name);
        if (shape_numel(arr.shape) != arr.values.size()) {
            throw CheckpointError("array '" + arr.name + "' has " + std::to_string(arr.values.size()) +
                                  " values for shape " + shape_str(arr.shape));
        }
        manifest << arr.name;
        for (auto d : arr.shape) manifest << ' ' << d;
        manifest << '\n';

        std::vector<char> bytes(arr.values.size() * 4);
        for (std::size_t i = 0; i < arr.values.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(arr.values[i]);
            for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
        }
        std::ofstream out(dir / (arr.name + ".bin"), std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("cannot write array file for '" + arr.name + "'");
    }
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw CheckpointError("checkpoint manifest missing: " + (dir / "manifest.txt").string());
    std::vector<NamedArray> arrays;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        NamedArray arr;
        is >> arr.name;
        long long d;
        while (is >> d) {
            if (d <= 0) throw CheckpointError("manifest line " + std::to_string(line_no) + ": non-positive dimension");
            arr.shape.push_back(static_cast<std::size_t>(d));
        }
        if (!is.eof()) throw CheckpointError("manifest line " + std::to_string(line_no) + " is malformed: " + line);
        validate_name(arr.name);
        const std::size_t n = shape_numel(arr.shape);
        std::ifstream in(dir / (arr.name + ".bin"), std::ios::binary);
        if (!in) throw CheckpointError("array file missing for '" + arr.name + "'");
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (bytes.size() != n * 4) {
            throw CheckpointError("array '" + arr.name + "' holds " + std::to_string(bytes.size()) +
                                  " bytes but the manifest shape " + shape_str(arr.shape) + " needs " +
                                  std::to_string(n * 4));
        }
        arr.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
            arr.values[i] = std::bit_cast<float>(bits);
        }
        arrays.push_back(std::move(arr));
    }
    return arrays;
}

}  // namespace ukast
