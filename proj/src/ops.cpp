// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"

namespace ukast {

using kernels::broadcast_strides;
using kernels::contiguous_strides;
using kernels::for_each_strided;
using kernels::split_axis;

std::size_t normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("invalid axis " + std::to_string(axis) + " for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data) {
    return Tensor<T>(std::move(shape), std::move(data));
}

// Binary elementwise op. `dfx(x, y)` and `dfy(x, y)` are local partials.
template <typename T, typename F, typename DX, typename DY>
Tensor<T> binary_op(const Tensor<T>& x, const Tensor<T>& y, F f, DX dfx, DY dfy) {
    const Shape out_shape = broadcast_shapes(x.shape(), y.shape());
    const std::size_t n = shape_numel(out_shape);
    std::vector<T> out(n);
    const auto xs = x.data();
    const auto ys = y.data();
    const bool same = x.shape() == y.shape();
    std::vector<std::size_t> sx, sy;
    if (same) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(xs[i], ys[i]);
    } else {
        sx = broadcast_strides(x.shape(), out_shape);
        sy = broadcast_strides(y.shape(), out_shape);
        for_each_strided(out_shape, sx, sy, 0, 0,
                         [&](std::size_t o, std::size_t ix, std::size_t iy) { out[o] = f(xs[ix], ys[iy]); });
    }
    Tensor<T> result = make_result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x, &y})) {
        auto xi = x.impl(), yi = y.impl();
        tape->record(result, {xi, yi}, [xi, yi, same, sx, sy, out_shape, dfx, dfy](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            auto* gy = detail::grad_sink(yi);
            const auto& xv = xi->data;
            const auto& yv = yi->data;
            if (same) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (gx) (*gx)[i] += g[i] * dfx(xv[i], yv[i]);
                    if (gy) (*gy)[i] += g[i] * dfy(xv[i], yv[i]);
                }
                return;
            }
            for_each_strided(out_shape, sx, sy, 0, 0, [&](std::size_t o, std::size_t ix, std::size_t iy) {
                if (gx) (*gx)[ix] += g[o] * dfx(xv[ix], yv[iy]);
                if (gy) (*gy)[iy] += g[o] * dfy(xv[ix], yv[iy]);
            });
        });
    }
    return result;
}

// Unary elementwise op. `df(x, y)` is the local derivative given input and output.
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& x, F f, DF df) {
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    Tensor<T> result = make_result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto yi = result.impl();
        tape->record(result, {xi}, [xi, yw = std::weak_ptr(yi), df](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            const auto y = yw.lock();
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * df(xi->data[i], y->data[i]);
        });
    }
    return result;
}

template <typename T>
T sign_of(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <typename T>
struct GeluTanh {
    static constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
    static constexpr T kA = T(0.044715);
    static T value(T x) {
        const T u = kC * (x + kA * x * x * x);
        return T(0.5) * x * (T(1) + std::tanh(u));
    }
    static T derivative(T x) {
        const T u = kC * (x + kA * x * x * x);
        const T t = std::tanh(u);
        const T du = kC * (T(1) + T(3) * kA * x * x);
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
    }
};

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
    return binary_op(
        x, y, [](T a, T b) { return a + b; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y) {
    return binary_op(
        x, y, [](T a, T b) { return a - b; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y) {
    return binary_op(
        x, y, [](T a, T b) { return a * b; }, [](T, T b) { return b; }, [](T a, T) { return a; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& x, const Tensor<T>& y) {
    return binary_op(
        x, y, [](T a, T b) { return a / b; }, [](T, T b) { return T(1) / b; },
        [](T a, T b) { return -a / (b * b); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
    return unary_op(
        x, [value](T a) { return a + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value) {
    return unary_op(
        x, [value](T a) { return a * value; }, [value](T, T) { return value; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return -a; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return std::abs(a); }, [](T a, T) { return sign_of(a); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return std::exp(a); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return std::log(a); }, [](T a, T) { return T(1) / a; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return std::sqrt(a); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return std::tanh(a); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return a > T(0) ? a : T(0); }, [](T a, T) { return a > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    return unary_op(
        x, [](T a) { return GeluTanh<T>::value(a); }, [](T a, T) { return GeluTanh<T>::derivative(a); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.dim() < 2 || y.dim() < 2) {
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(x.shape()) + " and " +
                         shape_str(y.shape()));
    }
    const std::size_t M = x.shape()[x.dim() - 2], K = x.shape()[x.dim() - 1];
    const std::size_t K2 = y.shape()[y.dim() - 2], N = y.shape()[y.dim() - 1];
    if (K != K2) {
        throw ShapeError("matmul inner dimensions differ: " + shape_str(x.shape()) + " @ " + shape_str(y.shape()));
    }
    const Shape bx(x.shape().begin(), x.shape().end() - 2);
    const Shape by(y.shape().begin(), y.shape().end() - 2);
    const Shape bout = broadcast_shapes(bx, by);
    Shape out_shape = bout;
    out_shape.push_back(M);
    out_shape.push_back(N);
    std::vector<T> out(shape_numel(out_shape), T(0));

    // Batch offsets (in matrices) of x and y for each output batch entry.
    std::vector<std::size_t> ox, oy;
    {
        const auto sx = broadcast_strides(bx, bout);
        const auto sy = broadcast_strides(by, bout);
        const std::size_t nb = shape_numel(bout);
        ox.resize(nb);
        oy.resize(nb);
        for_each_strided(bout, sx, sy, 0, 0, [&](std::size_t o, std::size_t ix, std::size_t iy) {
            ox[o] = ix;
            oy[o] = iy;
        });
    }
    const auto xs = x.data();
    const auto ys = y.data();
    if (by.empty() || shape_numel(by) == 1) {
        // Weight-style right operand: fold every batch into rows.
        if (shape_numel(bx) == shape_numel(bout)) {
            kernels::gemm_nn(shape_numel(bout) * M, N, K, xs.data(), ys.data(), out.data());
        } else {
            for (std::size_t b = 0; b < ox.size(); ++b)
                kernels::gemm_nn(M, N, K, xs.data() + ox[b] * M * K, ys.data(), out.data() + b * M * N);
        }
    } else {
        for (std::size_t b = 0; b < ox.size(); ++b)
            kernels::gemm_nn(M, N, K, xs.data() + ox[b] * M * K, ys.data() + oy[b] * K * N, out.data() + b * M * N);
    }
    Tensor<T> result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x, &y})) {
        auto xi = x.impl(), yi = y.impl();
        tape->record(result, {xi, yi}, [xi, yi, ox, oy, M, N, K](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            auto* gy = detail::grad_sink(yi);
            for (std::size_t b = 0; b < ox.size(); ++b) {
                const T* gb = g.data() + b * M * N;
                if (gx) kernels::gemm_nt(M, K, N, gb, yi->data.data() + oy[b] * K * N, gx->data() + ox[b] * M * K);
                if (gy) kernels::gemm_tn(K, N, M, xi->data.data() + ox[b] * M * K, gb, gy->data() + oy[b] * K * N);
            }
        });
    }
    return result;
}

namespace {

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim, T scale) {
    const std::size_t rank = x.dim();
    std::vector<bool> reduced(rank, false);
    for (int a : axes) reduced[normalize_axis(a, rank)] = true;
    Shape kept(rank);
    Shape out_shape;
    for (std::size_t i = 0; i < rank; ++i) {
        kept[i] = reduced[i] ? 1 : x.shape()[i];
        if (!reduced[i] || keepdim) out_shape.push_back(kept[i]);
    }
    const auto sx = contiguous_strides(x.shape());
    const auto so = broadcast_strides(kept, x.shape());
    std::vector<T> out(shape_numel(kept), T(0));
    const auto xs = x.data();
    for_each_strided(x.shape(), sx, so, 0, 0,
                     [&](std::size_t, std::size_t ix, std::size_t io) { out[io] += xs[ix]; });
    if (scale != T(1))
        for (auto& v : out) v *= scale;
    Tensor<T> result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, sx, so, scale](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for_each_strided(xi->shape, sx, so, 0, 0,
                             [&](std::size_t, std::size_t ix, std::size_t io) { (*gx)[ix] += g[io] * scale; });
        });
    }
    return result;
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim) {
    return reduce_sum(x, std::move(axes), keepdim, T(1));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes, bool keepdim) {
    std::size_t count = 1;
    std::vector<bool> seen(x.dim(), false);
    for (int a : axes) {
        const auto ax = normalize_axis(a, x.dim());
        if (!seen[ax]) count *= x.shape()[ax];
        seen[ax] = true;
    }
    return reduce_sum(x, std::move(axes), keepdim, T(1) / static_cast<T>(count));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    std::vector<int> axes(x.dim());
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_sum(x, axes, false, T(1));
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    std::vector<int> axes(x.dim());
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_sum(x, axes, false, T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const auto s = split_axis(x.shape(), normalize_axis(axis, x.dim()));
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T mx = xs[base];
            for (std::size_t a = 1; a < s.n; ++a) mx = std::max(mx, xs[base + a * s.inner]);
            T total = T(0);
            for (std::size_t a = 0; a < s.n; ++a) {
                const T e = std::exp(xs[base + a * s.inner] - mx);
                out[base + a * s.inner] = e;
                total += e;
            }
            const T inv = T(1) / total;
            for (std::size_t a = 0; a < s.n; ++a) out[base + a * s.inner] *= inv;
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, yw = std::weak_ptr(result.impl()), s](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            const auto& y = yw.lock()->data;
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t in = 0; in < s.inner; ++in) {
                    const std::size_t base = o * s.n * s.inner + in;
                    T dot = T(0);
                    for (std::size_t a = 0; a < s.n; ++a) dot += g[base + a * s.inner] * y[base + a * s.inner];
                    for (std::size_t a = 0; a < s.n; ++a) {
                        const std::size_t i = base + a * s.inner;
                        (*gx)[i] += y[i] * (g[i] - dot);
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis) {
    const auto s = split_axis(x.shape(), normalize_axis(axis, x.dim()));
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T mx = xs[base];
            for (std::size_t a = 1; a < s.n; ++a) mx = std::max(mx, xs[base + a * s.inner]);
            T total = T(0);
            for (std::size_t a = 0; a < s.n; ++a) total += std::exp(xs[base + a * s.inner] - mx);
            const T lse = mx + std::log(total);
            for (std::size_t a = 0; a < s.n; ++a) out[base + a * s.inner] = xs[base + a * s.inner] - lse;
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, yw = std::weak_ptr(result.impl()), s](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            const auto& y = yw.lock()->data;
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t in = 0; in < s.inner; ++in) {
                    const std::size_t base = o * s.n * s.inner + in;
                    T total = T(0);
                    for (std::size_t a = 0; a < s.n; ++a) total += g[base + a * s.inner];
                    for (std::size_t a = 0; a < s.n; ++a) {
                        const std::size_t i = base + a * s.inner;
                        (*gx)[i] += g[i] - std::exp(y[i]) * total;
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int axis, T eps) {
    const auto s = split_axis(x.shape(), normalize_axis(axis, x.dim()));
    const bool affine = gamma.defined();
    if (affine && (gamma.numel() != s.n || !beta.defined() || beta.numel() != s.n)) {
        throw ShapeError("layer_norm affine parameters must have " + std::to_string(s.n) + " entries");
    }
    const auto xs = x.data();
    std::vector<T> xhat(xs.size());
    std::vector<T> rstd(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T mu = T(0);
            for (std::size_t a = 0; a < s.n; ++a) mu += xs[base + a * s.inner];
            mu /= static_cast<T>(s.n);
            T var = T(0);
            for (std::size_t a = 0; a < s.n; ++a) {
                const T d = xs[base + a * s.inner] - mu;
                var += d * d;
            }
            var /= static_cast<T>(s.n);
            const T r = T(1) / std::sqrt(var + eps);
            rstd[o * s.inner + in] = r;
            for (std::size_t a = 0; a < s.n; ++a) xhat[base + a * s.inner] = (xs[base + a * s.inner] - mu) * r;
        }
    }
    std::vector<T> out = xhat;
    if (affine) {
        const auto gv = gamma.data();
        const auto bv = beta.data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            const std::size_t a = (i / s.inner) % s.n;
            out[i] = out[i] * gv[a] + bv[a];
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x, &gamma, &beta})) {
        auto xi = x.impl();
        detail::ImplPtr<T> gi = affine ? gamma.impl() : nullptr;
        detail::ImplPtr<T> bi = affine ? beta.impl() : nullptr;
        std::vector<detail::ImplPtr<T>> inputs{xi};
        if (affine) {
            inputs.push_back(gi);
            inputs.push_back(bi);
        }
        tape->record(result, inputs,
                     [xi, gi, bi, s, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const T> g) {
                         auto* gx = detail::grad_sink(xi);
                         auto* gg = gi ? detail::grad_sink(gi) : nullptr;
                         auto* gb = bi ? detail::grad_sink(bi) : nullptr;
                         for (std::size_t o = 0; o < s.outer; ++o) {
                             for (std::size_t in = 0; in < s.inner; ++in) {
                                 const std::size_t base = o * s.n * s.inner + in;
                                 T mean_d = T(0), mean_dx = T(0);
                                 for (std::size_t a = 0; a < s.n; ++a) {
                                     const std::size_t i = base + a * s.inner;
                                     const T d = gi ? g[i] * gi->data[a] : g[i];
                                     mean_d += d;
                                     mean_dx += d * xhat[i];
                                     if (gg) (*gg)[a] += g[i] * xhat[i];
                                     if (gb) (*gb)[a] += g[i];
                                 }
                                 if (!gx) continue;
                                 mean_d /= static_cast<T>(s.n);
                                 mean_dx /= static_cast<T>(s.n);
                                 const T r = rstd[o * s.inner + in];
                                 for (std::size_t a = 0; a < s.n; ++a) {
                                     const std::size_t i = base + a * s.inner;
                                     const T d = gi ? g[i] * gi->data[a] : g[i];
                                     (*gx)[i] += r * (d - mean_d - xhat[i] * mean_dx);
                                 }
                             }
                         }
                     });
    }
    return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    Tensor<T> result(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi](std::span<const T> g) { detail::accumulate_grad(xi, g); });
    }
    return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const std::size_t rank = x.dim();
    if (perm.size() != rank) throw ShapeError("permute needs " + std::to_string(rank) + " axes");
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    const auto xstr = contiguous_strides(x.shape());
    std::vector<std::size_t> src(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (perm[i] >= rank || seen[perm[i]]) throw ShapeError("invalid permutation");
        seen[perm[i]] = true;
        out_shape[i] = x.shape()[perm[i]];
        src[i] = xstr[perm[i]];
    }
    const auto ostr = contiguous_strides(out_shape);
    std::vector<T> out(x.numel());
    const auto xs = x.data();
    for_each_strided(out_shape, src, ostr, 0, 0, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xs[ix]; });
    Tensor<T> result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, out_shape, src, ostr](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for_each_strided(out_shape, src, ostr, 0, 0,
                             [&](std::size_t o, std::size_t ix, std::size_t) { (*gx)[ix] += g[o]; });
        });
    }
    return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, x.dim());
    if (length == 0 || start + length > x.shape()[ax]) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis of size " + std::to_string(x.shape()[ax]));
    }
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    const auto xstr = contiguous_strides(x.shape());
    const auto ostr = contiguous_strides(out_shape);
    const std::size_t base = start * xstr[ax];
    std::vector<T> out(shape_numel(out_shape));
    const auto xs = x.data();
    for_each_strided(out_shape, xstr, ostr, base, 0, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xs[ix]; });
    Tensor<T> result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, out_shape, xstr, ostr, base](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for_each_strided(out_shape, xstr, ostr, base, 0,
                             [&](std::size_t o, std::size_t ix, std::size_t) { (*gx)[ix] += g[o]; });
        });
    }
    return result;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat of zero tensors");
    const std::size_t ax = normalize_axis(axis, xs.front().dim());
    Shape out_shape = xs.front().shape();
    out_shape[ax] = 0;
    for (const auto& t : xs) {
        Shape probe = t.shape();
        if (probe.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
        for (std::size_t i = 0; i < probe.size(); ++i) {
            if (i != ax && probe[i] != xs.front().shape()[i]) {
                throw ShapeError("concat shape mismatch: " + shape_str(t.shape()) + " vs " +
                                 shape_str(xs.front().shape()));
            }
        }
        out_shape[ax] += t.shape()[ax];
    }
    const auto ostr = contiguous_strides(out_shape);
    std::vector<T> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& t : xs) {
        offsets.push_back(offset * ostr[ax]);
        const auto tstr = contiguous_strides(t.shape());
        const auto td = t.data();
        for_each_strided(t.shape(), tstr, ostr, 0, offsets.back(),
                         [&](std::size_t o, std::size_t, std::size_t io) { out[io] = td[o]; });
        offset += t.shape()[ax];
    }
    Tensor<T> result(out_shape, std::move(out));
    std::vector<const Tensor<T>*> ptrs;
    bool any = false;
    for (const auto& t : xs) any = any || t.requires_grad();
    auto* tape = any ? Tape<T>::active() : nullptr;
    if (tape) {
        std::vector<detail::ImplPtr<T>> inputs;
        for (const auto& t : xs) inputs.push_back(t.impl());
        tape->record(result, inputs, [inputs, offsets, ostr](std::span<const T> g) {
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                auto* gx = detail::grad_sink(inputs[k]);
                if (!gx) continue;
                const auto tstr = contiguous_strides(inputs[k]->shape);
                for_each_strided(inputs[k]->shape, tstr, ostr, 0, offsets[k],
                                 [&](std::size_t o, std::size_t, std::size_t io) { (*gx)[o] += g[io]; });
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> pad_to(const Tensor<T>& x, const Shape& shape) {
    if (shape.size() != x.dim()) throw ShapeError("pad_to rank mismatch");
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] < x.shape()[i]) throw ShapeError("pad_to target " + shape_str(shape) + " smaller than input");
    }
    if (shape == x.shape()) return x;
    const auto xstr = contiguous_strides(x.shape());
    const auto ostr = contiguous_strides(shape);
    std::vector<T> out(shape_numel(shape), T(0));
    const auto xs = x.data();
    for_each_strided(x.shape(), xstr, ostr, 0, 0, [&](std::size_t o, std::size_t, std::size_t io) { out[io] = xs[o]; });
    Tensor<T> result(shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, xstr, ostr](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for_each_strided(xi->shape, xstr, ostr, 0, 0,
                             [&](std::size_t o, std::size_t, std::size_t io) { (*gx)[o] += g[io]; });
        });
    }
    return result;
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const Shape& shape) {
    if (shape.size() != x.dim()) throw ShapeError("crop_to rank mismatch");
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] > x.shape()[i]) throw ShapeError("crop_to target " + shape_str(shape) + " larger than input");
    }
    if (shape == x.shape()) return x;
    const auto xstr = contiguous_strides(x.shape());
    const auto ostr = contiguous_strides(shape);
    std::vector<T> out(shape_numel(shape));
    const auto xs = x.data();
    for_each_strided(shape, xstr, ostr, 0, 0, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xs[ix]; });
    Tensor<T> result(shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, shape, xstr, ostr](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for_each_strided(shape, xstr, ostr, 0, 0,
                             [&](std::size_t o, std::size_t ix, std::size_t) { (*gx)[ix] += g[o]; });
        });
    }
    return result;
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, int axis, std::ptrdiff_t shift) {
    const auto s = split_axis(x.shape(), normalize_axis(axis, x.dim()));
    const auto n = static_cast<std::ptrdiff_t>(s.n);
    const std::size_t k = static_cast<std::size_t>(((shift % n) + n) % n);
    if (k == 0) return x;
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    // out[(a + k) mod n] = x[a]
    auto dst = [s, k](std::size_t o, std::size_t a, std::size_t in) {
        return (o * s.n + (a + k) % s.n) * s.inner + in;
    };
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.n; ++a)
            for (std::size_t in = 0; in < s.inner; ++in) out[dst(o, a, in)] = xs[(o * s.n + a) * s.inner + in];
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, s, dst](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t a = 0; a < s.n; ++a)
                    for (std::size_t in = 0; in < s.inner; ++in)
                        (*gx)[(o * s.n + a) * s.inner + in] += g[dst(o, a, in)];
        });
    }
    return result;
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, std::span<const std::size_t> indices) {
    const std::size_t ax = normalize_axis(axis, x.dim());
    const auto s = split_axis(x.shape(), ax);
    for (auto i : indices) {
        if (i >= s.n) throw ShapeError("index " + std::to_string(i) + " out of range for axis of size " + std::to_string(s.n));
    }
    Shape out_shape = x.shape();
    out_shape[ax] = indices.size();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    const std::size_t m = idx.size();
    const auto xs = x.data();
    std::vector<T> out(s.outer * m * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < m; ++k)
            std::copy_n(xs.data() + (o * s.n + idx[k]) * s.inner, s.inner, out.data() + (o * m + k) * s.inner);
    Tensor<T> result(out_shape, std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        tape->record(result, {xi}, [xi, s, idx = std::move(idx)](std::span<const T> g) {
            auto* gx = detail::grad_sink(xi);
            if (!gx) return;
            const std::size_t m = idx.size();
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t k = 0; k < m; ++k)
                    for (std::size_t in = 0; in < s.inner; ++in)
                        (*gx)[(o * s.n + idx[k]) * s.inner + in] += g[(o * m + k) * s.inner + in];
        });
    }
    return result;
}

#define UKAST_INSTANTIATE_OPS(T)                                                                          \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                   \
    template Tensor<T> neg(const Tensor<T>&);                                                             \
    template Tensor<T> abs(const Tensor<T>&);                                                             \
    template Tensor<T> exp(const Tensor<T>&);                                                             \
    template Tensor<T> log(const Tensor<T>&);                                                             \
    template Tensor<T> sqrt(const Tensor<T>&);                                                            \
    template Tensor<T> tanh(const Tensor<T>&);                                                            \
    template Tensor<T> relu(const Tensor<T>&);                                                            \
    template Tensor<T> gelu(const Tensor<T>&);                                                            \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> sum(const Tensor<T>&, std::vector<int>, bool);                                     \
    template Tensor<T> mean(const Tensor<T>&, std::vector<int>, bool);                                    \
    template Tensor<T> sum_all(const Tensor<T>&);                                                         \
    template Tensor<T> mean_all(const Tensor<T>&);                                                        \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                    \
    template Tensor<T> log_softmax(const Tensor<T>&, int);                                                \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, T);          \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                        \
    template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                            \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                        \
    template Tensor<T> pad_to(const Tensor<T>&, const Shape&);                                            \
    template Tensor<T> crop_to(const Tensor<T>&, const Shape&);                                           \
    template Tensor<T> roll(const Tensor<T>&, int, std::ptrdiff_t);                                       \
    template Tensor<T> index_select(const Tensor<T>&, int, std::span<const std::size_t>);

UKAST_INSTANTIATE_OPS(float)
UKAST_INSTANTIATE_OPS(double)

}  // namespace ukast
