// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/nn_ops.hpp"

#include <cmath>

#include "kernels.hpp"

namespace ukast {

namespace {

struct ConvGeometry {
    std::size_t batch, cin, h, w, cout, kh, kw, pad, ho, wo;
    std::size_t col_rows() const { return cin * kh * kw; }
    std::size_t col_cols() const { return ho * wo; }
    bool pointwise() const { return kh == 1 && kw == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                T* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.ho * g.wo;
                for (std::size_t i = 0; i < g.ho; ++i) {
                    const auto si = static_cast<std::ptrdiff_t>(i + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + i * g.wo;
                    if (si < 0 || si >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill_n(dst, g.wo, T(0));
                        continue;
                    }
                    const T* src = x + (c * g.h + static_cast<std::size_t>(si)) * g.w;
                    for (std::size_t j = 0; j < g.wo; ++j) {
                        const auto sj = static_cast<std::ptrdiff_t>(j + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[j] = (sj < 0 || sj >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[sj];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* x) {
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.ho * g.wo;
                for (std::size_t i = 0; i < g.ho; ++i) {
                    const auto si = static_cast<std::ptrdiff_t>(i + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (si < 0 || si >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    T* dst = x + (c * g.h + static_cast<std::size_t>(si)) * g.w;
                    for (std::size_t j = 0; j < g.wo; ++j) {
                        const auto sj = static_cast<std::ptrdiff_t>(j + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (sj >= 0 && sj < static_cast<std::ptrdiff_t>(g.w)) dst[sj] += row[i * g.wo + j];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding) {
    if (x.dim() != 4 || weight.dim() != 4) {
        throw ShapeError("conv2d expects x[B,C,H,W] and weight[Co,Ci,kh,kw], got " + shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
    }
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[1] != xs[1]) {
        throw ShapeError("conv2d channel mismatch: input " + shape_str(xs) + ", weight " + shape_str(ws));
    }
    if (xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3]) throw ShapeError("conv2d kernel larger than input");
    const ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], padding,
                         xs[2] + 2 * padding - ws[2] + 1, xs[3] + 2 * padding - ws[3] + 1};
    if (bias.defined() && bias.numel() != g.cout) throw ShapeError("conv2d bias size mismatch");

    std::vector<T> out(g.batch * g.cout * g.col_cols(), T(0));
    std::vector<T> cols(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
    const auto xd = x.data();
    const auto wd = weight.data();
    for (std::size_t b = 0; b < g.batch; ++b) {
        const T* xb = xd.data() + b * g.cin * g.h * g.w;
        T* ob = out.data() + b * g.cout * g.col_cols();
        if (bias.defined()) {
            for (std::size_t c = 0; c < g.cout; ++c) std::fill_n(ob + c * g.col_cols(), g.col_cols(), bias.data()[c]);
        }
        const T* colp = xb;
        if (!g.pointwise()) {
            im2col(g, xb, cols.data());
            colp = cols.data();
        }
        kernels::gemm_nn(g.cout, g.col_cols(), g.col_rows(), wd.data(), colp, ob);
    }
    Tensor<T> result(Shape{g.batch, g.cout, g.ho, g.wo}, std::move(out));
    if (auto* tape = detail::recording_tape({&x, &weight, &bias})) {
        auto xi = x.impl(), wi = weight.impl();
        detail::ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
        std::vector<detail::ImplPtr<T>> inputs{xi, wi};
        if (bi) inputs.push_back(bi);
        tape->record(result, inputs, [xi, wi, bi, g](std::span<const T> grad) {
            auto* gx = detail::grad_sink(xi);
            auto* gw = detail::grad_sink(wi);
            auto* gb = bi ? detail::grad_sink(bi) : nullptr;
            std::vector<T> cols(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
            std::vector<T> gcols(gx && !g.pointwise() ? g.col_rows() * g.col_cols() : 0);
            for (std::size_t b = 0; b < g.batch; ++b) {
                const T* xb = xi->data.data() + b * g.cin * g.h * g.w;
                const T* gb_out = grad.data() + b * g.cout * g.col_cols();
                if (gb) {
                    for (std::size_t c = 0; c < g.cout; ++c) {
                        T acc = T(0);
                        for (std::size_t p = 0; p < g.col_cols(); ++p) acc += gb_out[c * g.col_cols() + p];
                        (*gb)[c] += acc;
                    }
                }
                if (gw) {
                    const T* colp = xb;
                    if (!g.pointwise()) {
                        im2col(g, xb, cols.data());
                        colp = cols.data();
                    }
                    kernels::gemm_nt(g.cout, g.col_rows(), g.col_cols(), gb_out, colp, gw->data());
                }
                if (gx) {
                    T* gxb = gx->data() + b * g.cin * g.h * g.w;
                    if (g.pointwise()) {
                        kernels::gemm_tn(g.col_rows(), g.col_cols(), g.cout, wi->data.data(), gb_out, gxb);
                    } else {
                        std::fill(gcols.begin(), gcols.end(), T(0));
                        kernels::gemm_tn(g.col_rows(), g.col_cols(), g.cout, wi->data.data(), gb_out, gcols.data());
                        col2im_add(g, gcols.data(), gxb);
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.dim() != 4 || weight.dim() != 4 || weight.shape()[2] != weight.shape()[3]) {
        throw ShapeError("conv_transpose2d expects x[B,C,H,W] and weight[Ci,Co,k,k], got " + shape_str(x.shape()) +
                         " and " + shape_str(weight.shape()));
    }
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[0] != xs[1]) {
        throw ShapeError("conv_transpose2d channel mismatch: input " + shape_str(xs) + ", weight " + shape_str(ws));
    }
    const std::size_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ws[1], k = ws[2];
    const std::size_t HW = H * W, CKK = Co * k * k;
    if (bias.defined() && bias.numel() != Co) throw ShapeError("conv_transpose2d bias size mismatch");
    const std::size_t Ho = H * k, Wo = W * k;

    // rows of `cols` are (co, di, dj); columns are input positions.
    auto scatter_index = [=](std::size_t b, std::size_t row, std::size_t p) {
        const std::size_t co = row / (k * k), di = (row / k) % k, dj = row % k;
        const std::size_t i = p / W, j = p % W;
        return ((b * Co + co) * Ho + i * k + di) * Wo + j * k + dj;
    };
    std::vector<T> out(B * Co * Ho * Wo);
    std::vector<T> cols(CKK * HW);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(cols.begin(), cols.end(), T(0));
        kernels::gemm_tn(CKK, HW, Ci, weight.data().data(), x.data().data() + b * Ci * HW, cols.data());
        for (std::size_t r = 0; r < CKK; ++r) {
            const T bv = bias.defined() ? bias.data()[r / (k * k)] : T(0);
            for (std::size_t p = 0; p < HW; ++p) out[scatter_index(b, r, p)] = cols[r * HW + p] + bv;
        }
    }
    Tensor<T> result(Shape{B, Co, Ho, Wo}, std::move(out));
    if (auto* tape = detail::recording_tape({&x, &weight, &bias})) {
        auto xi = x.impl(), wi = weight.impl();
        detail::ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
        std::vector<detail::ImplPtr<T>> inputs{xi, wi};
        if (bi) inputs.push_back(bi);
        tape->record(result, inputs, [=](std::span<const T> grad) {
            auto* gx = detail::grad_sink(xi);
            auto* gw = detail::grad_sink(wi);
            auto* gb = bi ? detail::grad_sink(bi) : nullptr;
            std::vector<T> gcols(CKK * HW);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t r = 0; r < CKK; ++r)
                    for (std::size_t p = 0; p < HW; ++p) gcols[r * HW + p] = grad[scatter_index(b, r, p)];
                if (gb) {
                    for (std::size_t r = 0; r < CKK; ++r) {
                        T acc = T(0);
                        for (std::size_t p = 0; p < HW; ++p) acc += gcols[r * HW + p];
                        (*gb)[r / (k * k)] += acc;
                    }
                }
                if (gx) kernels::gemm_nn(Ci, HW, CKK, wi->data.data(), gcols.data(), gx->data() + b * Ci * HW);
                if (gw) kernels::gemm_nt(Ci, CKK, HW, xi->data.data() + b * Ci * HW, gcols.data(), gw->data());
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T momentum, T eps) {
    if (x.dim() < 2) throw ShapeError("batch_norm needs rank >= 2, got " + shape_str(x.shape()));
    const std::size_t B = x.shape()[0], C = x.shape()[1];
    const std::size_t S = x.numel() / (B * C);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C) {
        throw ShapeError("batch_norm parameters must have " + std::to_string(C) + " entries");
    }
    const std::size_t N = B * S;
    const auto xs = x.data();
    std::vector<T> mu(C), rstd(C);
    if (training) {
        auto rm = running_mean.data_mut();
        auto rv = running_var.data_mut();
        for (std::size_t c = 0; c < C; ++c) {
            T m = T(0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s) m += xs[(b * C + c) * S + s];
            m /= static_cast<T>(N);
            T v = T(0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s) {
                    const T d = xs[(b * C + c) * S + s] - m;
                    v += d * d;
                }
            const T unbiased = N > 1 ? v / static_cast<T>(N - 1) : v;
            v /= static_cast<T>(N);
            mu[c] = m;
            rstd[c] = T(1) / std::sqrt(v + eps);
            rm[c] = (T(1) - momentum) * rm[c] + momentum * m;
            rv[c] = (T(1) - momentum) * rv[c] + momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = running_mean.data()[c];
            rstd[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
        }
    }
    std::vector<T> xhat(xs.size()), out(xs.size());
    const auto gv = gamma.data();
    const auto bv = beta.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < S; ++s) {
                const std::size_t i = (b * C + c) * S + s;
                xhat[i] = (xs[i] - mu[c]) * rstd[c];
                out[i] = xhat[i] * gv[c] + bv[c];
            }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x, &gamma, &beta})) {
        auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
        tape->record(result, {xi, gi, bi},
                     [xi, gi, bi, B, C, S, N, training, rstd, xhat = std::move(xhat)](std::span<const T> g) {
                         auto* gx = detail::grad_sink(xi);
                         auto* gg = detail::grad_sink(gi);
                         auto* gb = detail::grad_sink(bi);
                         for (std::size_t c = 0; c < C; ++c) {
                             T sum_g = T(0), sum_gx = T(0);
                             for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t s = 0; s < S; ++s) {
                                     const std::size_t i = (b * C + c) * S + s;
                                     sum_g += g[i];
                                     sum_gx += g[i] * xhat[i];
                                 }
                             if (gg) (*gg)[c] += sum_gx;
                             if (gb) (*gb)[c] += sum_g;
                             if (!gx) continue;
                             const T scale = gi->data[c] * rstd[c];
                             for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t s = 0; s < S; ++s) {
                                     const std::size_t i = (b * C + c) * S + s;
                                     if (training) {
                                         (*gx)[i] += scale * (g[i] - sum_g / static_cast<T>(N) -
                                                              xhat[i] * sum_gx / static_cast<T>(N));
                                     } else {
                                         (*gx)[i] += scale * g[i];
                                     }
                                 }
                         }
                     });
    }
    return result;
}

#define UKAST_INSTANTIATE_NN(T)                                                                          \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);        \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,      \
                                  Tensor<T>&, bool, T, T);

UKAST_INSTANTIATE_NN(float)
UKAST_INSTANTIATE_NN(double)

}  // namespace ukast
