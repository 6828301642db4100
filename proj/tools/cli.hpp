// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ukast::cli {

/// Exit codes: 0 success, 1 runtime or check failure, 2 usage error or
/// missing input.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ukast::cli
