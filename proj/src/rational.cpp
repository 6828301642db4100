// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/rational.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <limits>

#include "ukast/ops.hpp"

namespace ukast {

RationalParams RationalParams::identity(std::size_t m, std::size_t n) {
    if (m < 1) throw std::invalid_argument("identity rational needs numerator order >= 1");
    RationalParams p;
    p.a.assign(m + 1, 0.0);
    p.a[1] = 1.0;
    p.b.assign(n, 0.0);
    return p;
}

RationalParams RationalParams::zero(std::size_t m, std::size_t n) {
    RationalParams p;
    p.a.assign(m + 1, 0.0);
    p.b.assign(n, 0.0);
    return p;
}

namespace {

// Subgradient of |q| with +1 at q == 0, so all-zero denominators still train.
template <typename T>
T sign_of(T v) {
    return v < T(0) ? T(-1) : T(1);
}

// P, Q, P', Q' by Horner. a = a0..am, b = b1..bn.
template <typename T>
inline void horner(T x, const T* a, std::size_t na, const T* b, std::size_t nb, T& p, T& q, T& dp, T& dq) {
    p = a[na - 1];
    dp = T(0);
    for (std::size_t i = na - 1; i-- > 0;) {
        dp = dp * x + p;
        p = p * x + a[i];
    }
    // Q(x) = x * R(x), R(x) = b1 + b2 x + ... ; Q' = R + x R'.
    T r = T(0), dr = T(0);
    if (nb > 0) {
        r = b[nb - 1];
        for (std::size_t j = nb - 1; j-- > 0;) {
            dr = dr * x + r;
            r = r * x + b[j];
        }
    }
    q = x * r;
    dq = r + x * dr;
}

void check_finite_coefficients(const RationalParams& params) {
    for (double v : params.a)
        if (!std::isfinite(v)) throw NonFiniteError("non-finite numerator coefficient");
    for (double v : params.b)
        if (!std::isfinite(v)) throw NonFiniteError("non-finite denominator coefficient");
}

}  // namespace

RationalTerms rational_terms(double x, std::span<const double> a, std::span<const double> b) {
    if (a.empty()) throw std::invalid_argument("rational numerator needs at least a0");
    RationalTerms t{};
    horner(x, a.data(), a.size(), b.data(), b.size(), t.p, t.q, t.dp, t.dq);
    return t;
}

double pau_value(double x, const RationalParams& params) {
    const auto t = rational_terms(x, params.a, params.b);
    return params.w * t.p / (1.0 + std::abs(t.q));
}

PauGradients pau_backward(double x, const RationalParams& params) {
    const auto t = rational_terms(x, params.a, params.b);
    const double denom = 1.0 + std::abs(t.q);
    const double s = sign_of(t.q);
    PauGradients g;
    g.dx = params.w * (t.dp * denom - t.p * s * t.dq) / (denom * denom);
    g.dw = t.p / denom;
    g.da.resize(params.a.size());
    double xp = 1.0;
    for (auto& v : g.da) {
        v = params.w * xp / denom;
        xp *= x;
    }
    g.db.resize(params.b.size());
    xp = x;
    for (auto& v : g.db) {
        v = -params.w * t.p * s * xp / (denom * denom);
        xp *= x;
    }
    return g;
}

template <typename T>
RationalUnit<T>::RationalUnit(const RationalParams& params) {
    check_finite_coefficients(params);
    if (params.a.empty()) throw std::invalid_argument("rational numerator needs at least a0");
    a = Tensor<T>(Shape{params.a.size()}, std::vector<T>(params.a.begin(), params.a.end()));
    if (!params.b.empty()) b = Tensor<T>(Shape{params.b.size()}, std::vector<T>(params.b.begin(), params.b.end()));
    w = Tensor<T>::scalar(static_cast<T>(params.w));
}

template <typename T>
RationalParams RationalUnit<T>::params() const {
    RationalParams p;
    p.a.assign(a.data().begin(), a.data().end());
    if (b.defined()) p.b.assign(b.data().begin(), b.data().end());
    p.w = static_cast<double>(w.item());
    return p;
}

template <typename T>
void RationalUnit<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".rational.a", a, ParamKind::rational);
    if (b.defined()) out.add(prefix + ".rational.b", b, ParamKind::rational);
    out.add(prefix + ".rational.w", w, ParamKind::rational);
}

template <typename T>
Tensor<T> group_rational(const Tensor<T>& x, std::span<const Tensor<T>> a, std::span<const Tensor<T>> b) {
    const std::size_t groups = a.size();
    if (groups == 0 || (!b.empty() && b.size() != groups)) {
        throw std::invalid_argument("group_rational needs one (a, b) pair per group");
    }
    if (x.dim() == 0) throw ShapeError("group_rational expects a channel axis");
    const std::size_t d = x.shape().back();
    if (d % groups != 0) {
        throw ShapeError("group count " + std::to_string(groups) + " does not divide " + std::to_string(d) +
                         " channels");
    }
    const std::size_t na = a[0].numel();
    const std::size_t nb = b.empty() || !b[0].defined() ? 0 : b[0].numel();
    for (std::size_t k = 0; k < groups; ++k) {
        if (a[k].numel() != na || (nb > 0 && b[k].numel() != nb)) {
            throw ShapeError("all groups must share the same rational orders");
        }
    }
    // Coefficients packed per group: [g, na] and [g, nb].
    auto pack = [&](std::span<const Tensor<T>> src, std::size_t width) {
        std::vector<T> out(groups * width);
        for (std::size_t k = 0; k < groups; ++k)
            for (std::size_t i = 0; i < width; ++i) out[k * width + i] = src[k].data()[i];
        return out;
    };
    const std::vector<T> ca = pack(a, na);
    const std::vector<T> cb = nb ? pack(b, nb) : std::vector<T>{};
    const std::size_t block = d / groups;

    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i])) throw NonFiniteError("non-finite rational input at index " + std::to_string(i));
        const std::size_t k = (i % d) / block;
        T p, q, dp, dq;
        horner(xs[i], ca.data() + k * na, na, nb ? cb.data() + k * nb : nullptr, nb, p, q, dp, dq);
        out[i] = p / (T(1) + std::abs(q));
    }
    Tensor<T> result(x.shape(), std::move(out));

    bool any = x.requires_grad();
    for (std::size_t k = 0; k < groups; ++k) {
        any = any || a[k].requires_grad() || (nb && b[k].requires_grad());
    }
    auto* tape = any ? Tape<T>::active() : nullptr;
    if (tape) {
        std::vector<detail::ImplPtr<T>> inputs{x.impl()};
        std::vector<detail::ImplPtr<T>> ai, bi;
        for (std::size_t k = 0; k < groups; ++k) {
            ai.push_back(a[k].impl());
            inputs.push_back(ai.back());
            if (nb) {
                bi.push_back(b[k].impl());
                inputs.push_back(bi.back());
            }
        }
        tape->record(result, inputs, [xi = x.impl(), ai, bi, ca, cb, na, nb, d, block](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            const std::size_t groups = ai.size();
            std::vector<T> ga(groups * na, T(0)), gb(groups * nb, T(0));
            const auto& xs = xi->data;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const std::size_t k = (i % d) / block;
                const T xv = xs[i];
                T p, q, dp, dq;
                horner(xv, ca.data() + k * na, na, nb ? cb.data() + k * nb : nullptr, nb, p, q, dp, dq);
                const T denom = T(1) + std::abs(q);
                const T inv = T(1) / denom;
                const T s = sign_of(q);
                const T gi = g[i];
                if (gx) (*gx)[i] += gi * (dp * denom - p * s * dq) * inv * inv;
                T xp = T(1);
                for (std::size_t j = 0; j < na; ++j) {
                    ga[k * na + j] += gi * xp * inv;
                    xp *= xv;
                }
                const T coef = -gi * p * s * inv * inv;
                xp = xv;
                for (std::size_t j = 0; j < nb; ++j) {
                    gb[k * nb + j] += coef * xp;
                    xp *= xv;
                }
            }
            for (std::size_t k = 0; k < groups; ++k) {
                detail::accumulate_grad(ai[k], std::span<const T>(ga.data() + k * na, na));
                if (nb) detail::accumulate_grad(bi[k], std::span<const T>(gb.data() + k * nb, nb));
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> pau_forward(const Tensor<T>& x, const RationalUnit<T>& unit) {
    const Tensor<T>* bptr = unit.b.defined() ? &unit.b : nullptr;
    std::span<const Tensor<T>> bs = bptr ? std::span<const Tensor<T>>(bptr, 1) : std::span<const Tensor<T>>();
    if (x.dim() == 0) {
        auto f = group_rational(reshape(x, Shape{1}), std::span<const Tensor<T>>(&unit.a, 1), bs);
        return mul(reshape(f, Shape{}), unit.w);
    }
    return mul(group_rational(x, std::span<const Tensor<T>>(&unit.a, 1), bs), unit.w);
}

FitTarget parse_fit_target(const std::string& name) {
    if (name == "identity") return FitTarget::identity;
    if (name == "gelu" || name == "gelu-like") return FitTarget::gelu;
    throw std::invalid_argument("unknown rational fit target '" + name + "' (expected identity or gelu)");
}

double fit_target_value(FitTarget target, double x) {
    if (target == FitTarget::identity) return x;
    const double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

namespace {

struct Fit {
    Eigen::VectorXd theta;
    double sse = std::numeric_limits<double>::infinity();
};

RationalParams unpack(const Eigen::VectorXd& theta, std::size_t m, std::size_t n) {
    RationalParams p;
    p.a.assign(theta.data(), theta.data() + m + 1);
    p.b.assign(theta.data() + m + 1, theta.data() + m + 1 + n);
    return p;
}

double sum_squared_error(const Eigen::VectorXd& theta, const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                         std::size_t m, std::size_t n) {
    const auto p = unpack(theta, m, n);
    double sse = 0.0;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const double r = pau_value(xs[i], p) - ys[i];
        sse += r * r;
    }
    return std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
}

// Levenberg-Marquardt on the exact residual F(x; theta) - y.
Fit refine(Eigen::VectorXd theta, const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, std::size_t m,
           std::size_t n) {
    const Eigen::Index k = theta.size();
    double sse = sum_squared_error(theta, xs, ys, m, n);
    double lambda = 1e-3;
    Eigen::MatrixXd J(xs.size(), k);
    Eigen::VectorXd r(xs.size());
    for (int iter = 0; iter < 500 && sse > 1e-24; ++iter) {
        const auto p = unpack(theta, m, n);
        for (Eigen::Index i = 0; i < xs.size(); ++i) {
            const auto g = pau_backward(xs[i], p);
            for (std::size_t j = 0; j <= m; ++j) J(i, static_cast<Eigen::Index>(j)) = g.da[j];
            for (std::size_t j = 0; j < n; ++j) J(i, static_cast<Eigen::Index>(m + 1 + j)) = g.db[j];
            r[i] = pau_value(xs[i], p) - ys[i];
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd Jtr = J.transpose() * r;
        bool improved = false;
        for (int tries = 0; tries < 12; ++tries) {
            Eigen::MatrixXd A = JtJ;
            for (Eigen::Index d = 0; d < k; ++d) A(d, d) += lambda * (JtJ(d, d) + 1e-12);
            const Eigen::VectorXd step = A.ldlt().solve(-Jtr);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd candidate = theta + step;
            const double cand_sse = sum_squared_error(candidate, xs, ys, m, n);
            if (cand_sse < sse) {
                const double gain = (sse - cand_sse) / sse;
                theta = candidate;
                sse = cand_sse;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = gain > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) break;
    }
    return Fit{theta, sse};
}

}  // namespace

FitResult fit_init(FitTarget target, double lo, double hi, std::size_t samples, std::size_t m, std::size_t n) {
    const std::size_t unknowns = m + n + 1;
    if (samples < 10 * unknowns) {
        throw std::invalid_argument("fit_init needs at least " + std::to_string(10 * unknowns) + " samples for orders (" +
                                    std::to_string(m) + ", " + std::to_string(n) + "), got " +
                                    std::to_string(samples));
    }
    if (!(hi > lo)) throw std::invalid_argument("fit_init needs a non-empty domain");
    if (m < 1) throw std::invalid_argument("fit_init needs numerator order >= 1");

    const auto N = static_cast<Eigen::Index>(samples);
    Eigen::VectorXd xs(N), ys(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(N - 1);
        ys[i] = fit_target_value(target, xs[i]);
    }

    std::vector<Eigen::VectorXd> starts;
    Eigen::VectorXd ident = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(unknowns));
    ident[1] = 1.0;
    starts.push_back(ident);

    // Linearised problem P(x) - y Q(x) = y, i.e. the form without |.|.
    Eigen::MatrixXd A(N, static_cast<Eigen::Index>(unknowns));
    for (Eigen::Index i = 0; i < N; ++i) {
        double xp = 1.0;
        for (std::size_t j = 0; j <= m; ++j) {
            A(i, static_cast<Eigen::Index>(j)) = xp;
            xp *= xs[i];
        }
        xp = xs[i];
        for (std::size_t j = 0; j < n; ++j) {
            A(i, static_cast<Eigen::Index>(m + 1 + j)) = -ys[i] * xp;
            xp *= xs[i];
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() == static_cast<Eigen::Index>(unknowns)) starts.push_back(qr.solve(ys));

    Fit best;
    for (const auto& s : starts) {
        auto f = refine(s, xs, ys, m, n);
        if (f.sse < best.sse) best = f;
    }

    FitResult result;
    if (!std::isfinite(best.sse) || !best.theta.allFinite()) {
        std::cerr << "warning: rational fit failed, falling back to the identity configuration\n";
        result.params = RationalParams::identity(m, n);
        result.fell_back = true;
    } else {
        result.params = unpack(best.theta, m, n);
    }
    double max_dev = 0.0, sse = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double r = pau_value(xs[i], result.params) - ys[i];
        max_dev = std::max(max_dev, std::abs(r));
        sse += r * r;
    }
    result.max_deviation = max_dev;
    result.rms_residual = std::sqrt(sse / static_cast<double>(N));
    return result;
}

template struct RationalUnit<float>;
template struct RationalUnit<double>;
template Tensor<float> pau_forward(const Tensor<float>&, const RationalUnit<float>&);
template Tensor<double> pau_forward(const Tensor<double>&, const RationalUnit<double>&);
template Tensor<float> group_rational(const Tensor<float>&, std::span<const Tensor<float>>,
                                      std::span<const Tensor<float>>);
template Tensor<double> group_rational(const Tensor<double>&, std::span<const Tensor<double>>,
                                       std::span<const Tensor<double>>);

}  // namespace ukast
