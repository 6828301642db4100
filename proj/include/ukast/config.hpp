// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ukast {

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` settings with dotted keys. `#` starts a comment.
class ConfigMap {
   public:
    static ConfigMap parse(const std::string& text);
    static ConfigMap load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    /// Entries of `other` replace entries here.
    void overlay(const ConfigMap& other);

    std::string str(const std::string& key, const std::string& fallback) const;
    std::int64_t integer(const std::string& key, std::int64_t fallback) const;
    std::size_t size(const std::string& key, std::size_t fallback) const;
    double real(const std::string& key, double fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::vector<std::size_t> size_list(const std::string& key, const std::vector<std::size_t>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string to_text() const;

   private:
    std::map<std::string, std::string> values_;
};

std::string join_sizes(const std::vector<std::size_t>& values);
/// Shortest text that parses back to the same double.
std::string format_real(double value);

}  // namespace ukast
