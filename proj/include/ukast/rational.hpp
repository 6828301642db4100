// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ukast/layers.hpp"
#include "ukast/tensor.hpp"

namespace ukast {

/// Coefficients of one safe Padé unit
///
///     phi(x) = w * P(x) / (1 + |Q(x)|)
///     P(x) = a0 + a1 x + ... + am x^m,   Q(x) = b1 x + ... + bn x^n.
///
/// Q has no constant term, so the denominator is >= 1 for every real x and
/// F(0) = a0 whatever b is.
struct RationalParams {
    std::vector<double> a;  // a0..am
    std::vector<double> b;  // b1..bn
    double w = 1.0;

    std::size_t m() const { return a.empty() ? 0 : a.size() - 1; }
    std::size_t n() const { return b.size(); }

    /// P(x) = x, Q(x) = 0.
    static RationalParams identity(std::size_t m = 3, std::size_t n = 4);
    static RationalParams zero(std::size_t m = 3, std::size_t n = 4);
};

/// Raised when a rational unit receives NaN or infinity.
class NonFiniteError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

/// P, Q and their x-derivatives at one point, by Horner's scheme.
struct RationalTerms {
    double p, q, dp, dq;
};
RationalTerms rational_terms(double x, std::span<const double> a, std::span<const double> b);

/// Scalar phi(x).
double pau_value(double x, const RationalParams& params);

/// Analytic partials of phi at `x`. sign(0) is taken as 0 at the |Q| kink.
struct PauGradients {
    double dx;
    std::vector<double> da;
    std::vector<double> db;
    double dw;
};
PauGradients pau_backward(double x, const RationalParams& params);

/// Trainable safe Padé unit. Stored as `<prefix>.rational.{a,b,w}`.
template <typename T>
struct RationalUnit {
    Tensor<T> a;  // [m+1]
    Tensor<T> b;  // [n]
    Tensor<T> w;  // []

    RationalUnit() = default;
    explicit RationalUnit(const RationalParams& params);

    RationalParams params() const;
    void collect(const std::string& prefix, ParamSet<T>& out) const;
};

/// Elementwise phi(x) recorded on the active tape (grads for x, a, b, w).
template <typename T>
Tensor<T> pau_forward(const Tensor<T>& x, const RationalUnit<T>& unit);

/// Applies one of `g` shared rational functions F (w = 1) to each channel of
/// the last axis. Channel c uses group floor(c * g / d).
template <typename T>
Tensor<T> group_rational(const Tensor<T>& x, std::span<const Tensor<T>> a, std::span<const Tensor<T>> b);

enum class FitTarget { identity, gelu };

FitTarget parse_fit_target(const std::string& name);

struct FitResult {
    RationalParams params;
    double max_deviation = 0.0;
    double rms_residual = 0.0;
    bool fell_back = false;
};

/// Least-squares fit of F to `target` on a uniform grid over [lo, hi]. The
/// returned scale w is 1. Needs samples >= 10 (m + n + 1).
FitResult fit_init(FitTarget target, double lo, double hi, std::size_t samples, std::size_t m = 3,
                   std::size_t n = 4);

/// The fit target itself (tanh-approximated GELU for `gelu`).
double fit_target_value(FitTarget target, double x);

}  // namespace ukast
