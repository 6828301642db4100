// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "ukast/gradcheck.hpp"
#include "ukast/ops.hpp"

using namespace ukast;

TEST(GradcheckSuite, AllScopesPass) {
    const auto start = std::chrono::steady_clock::now();
    const auto reports = run_gradcheck_suite("all");
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::set<std::string> names;
    for (const auto& r : reports) {
        EXPECT_TRUE(r.passed) << r.name << " " << r.max_error << " > " << r.tolerance;
        names.insert(r.name);
    }
    EXPECT_EQ(names.size(), reports.size());
    EXPECT_GT(reports.size(), 30u);
    EXPECT_LT(seconds, 120.0);
}

TEST(GradcheckSuite, EveryScopeHasCases) {
    for (const auto& s : gradcheck_scopes()) EXPECT_FALSE(run_gradcheck_suite(s).empty()) << s;
    EXPECT_THROW(run_gradcheck_suite("everything"), std::invalid_argument);
}

TEST(GradcheckSuite, DetectsAWrongGradient) {
    // x * stop_grad(x): the tape sees half of the true derivative 2x.
    Tensor<double> x({3}, {0.5, -1.0, 2.0});
    x.set_requires_grad(true);
    const auto detached = [=] {
        return mul(x, Tensor<double>(x.shape(), std::vector<double>(x.data().begin(), x.data().end())));
    };
    const auto bad = check_gradients("detached square", detached, {{"x", x}}, 1e-6);
    EXPECT_FALSE(bad.passed);
    EXPECT_NEAR(bad.max_error, 0.5, 1e-6);
    EXPECT_TRUE(check_gradients("square", [=] { return mul(x, x); }, {{"x", x}}, 1e-6).passed);
}
