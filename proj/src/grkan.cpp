// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/grkan.hpp"

#include <map>
#include <mutex>

#include "ukast/ops.hpp"

namespace ukast {

std::size_t grkan_param_count(std::size_t d_in, std::size_t d_out, std::size_t groups, std::size_t m, std::size_t n) {
    if (groups == 0 || d_in % groups != 0) {
        throw std::invalid_argument("group count " + std::to_string(groups) + " must divide d_in = " +
                                    std::to_string(d_in));
    }
    return groups * (m + 1 + n) + d_in * d_out + d_out;
}

template <typename T>
GrKanLayer<T>::GrKanLayer(std::size_t d_in, std::size_t d_out, std::size_t groups, const RationalParams& init,
                          Rng& rng)
    : linear_(d_in, d_out, true, rng) {
    if (groups == 0 || d_in % groups != 0) {
        throw std::invalid_argument("group count " + std::to_string(groups) + " must divide d_in = " +
                                    std::to_string(d_in));
    }
    for (std::size_t k = 0; k < groups; ++k) {
        a_.emplace_back(Shape{init.a.size()}, std::vector<T>(init.a.begin(), init.a.end()));
        if (!init.b.empty()) b_.emplace_back(Shape{init.b.size()}, std::vector<T>(init.b.begin(), init.b.end()));
    }
}

template <typename T>
Tensor<T> GrKanLayer<T>::rational_stage(const Tensor<T>& x) const {
    return group_rational(x, std::span<const Tensor<T>>(a_), std::span<const Tensor<T>>(b_));
}

template <typename T>
Tensor<T> GrKanLayer<T>::operator()(const Tensor<T>& x) const {
    if (x.dim() == 0 || x.shape().back() != d_in()) {
        throw ShapeError("GR-KAN layer expects last dim " + std::to_string(d_in()) + ", got " + shape_str(x.shape()));
    }
    return linear_(rational_stage(x));
}

template <typename T>
void GrKanLayer<T>::collect(const std::string& rational_prefix, const std::string& linear_prefix,
                            ParamSet<T>& out) const {
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const std::string g = rational_prefix + ".g" + std::to_string(k);
        out.add(g + ".a", a_[k], ParamKind::rational);
        if (!b_.empty()) out.add(g + ".b", b_[k], ParamKind::rational);
    }
    linear_.collect(linear_prefix, out);
}

VanillaKanLayer::VanillaKanLayer(std::size_t d_in, std::size_t d_out, std::size_t m, std::size_t n)
    : d_in_(d_in), d_out_(d_out), edges_(d_in * d_out, RationalParams::zero(m, n)), bias_(d_out, 0.0) {
    if (m >= 1)
        for (auto& e : edges_) e = RationalParams::identity(m, n);
}

std::size_t VanillaKanLayer::trainable_scalars() const {
    std::size_t total = bias_.size();
    for (const auto& e : edges_) total += e.a.size() + e.b.size() + 1;
    return total;
}

std::vector<double> VanillaKanLayer::forward(std::span<const double> x) const {
    if (x.size() != d_in_) throw ShapeError("vanilla KAN expects " + std::to_string(d_in_) + " inputs");
    std::vector<double> out(bias_);
    for (std::size_t i = 0; i < d_in_; ++i)
        for (std::size_t j = 0; j < d_out_; ++j) out[j] += pau_value(x[i], edges_[i * d_out_ + j]);
    return out;
}

const RationalParams& gelu_rational_init(std::size_t m, std::size_t n) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, std::size_t>, RationalParams> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find({m, n});
    if (it == cache.end()) {
        it = cache.emplace(std::make_pair(m, n), fit_init(FitTarget::gelu, -3.0, 3.0, 512, m, n).params).first;
    }
    return it->second;
}

template <typename T>
MlpFfn<T>::MlpFfn(std::size_t dim, std::size_t hidden_ratio, Activation act, Rng& rng)
    : fc1_(dim, dim * hidden_ratio, true, rng), fc2_(dim * hidden_ratio, dim, true, rng), act_(act) {}

template <typename T>
Tensor<T> MlpFfn<T>::operator()(const Tensor<T>& x) const {
    auto h = fc1_(x);
    switch (act_) {
        case Activation::gelu:
            h = gelu(h);
            break;
        case Activation::relu:
            h = relu(h);
            break;
        case Activation::identity:
            break;
    }
    return fc2_(h);
}

template <typename T>
void MlpFfn<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    fc1_.collect(prefix + ".linear1", out);
    fc2_.collect(prefix + ".linear2", out);
}

template <typename T>
GrKanFfn<T>::GrKanFfn(std::size_t dim, std::size_t hidden_ratio, std::size_t groups, std::size_t m, std::size_t n,
                      Rng& rng)
    : l1_(dim, dim * hidden_ratio, groups, RationalParams::identity(m, n), rng),
      l2_(dim * hidden_ratio, dim, groups, gelu_rational_init(m, n), rng) {}

template <typename T>
Tensor<T> GrKanFfn<T>::operator()(const Tensor<T>& x) const {
    return l2_(l1_(x));
}

template <typename T>
void GrKanFfn<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    l1_.collect(prefix + ".rational1", prefix + ".linear1", out);
    l2_.collect(prefix + ".rational2", prefix + ".linear2", out);
}

template <typename T>
std::unique_ptr<FeedForward<T>> make_ffn(std::size_t dim, const FfnOptions& options, Rng& rng) {
    if (options.kind == FfnKind::mlp) return std::make_unique<MlpFfn<T>>(dim, options.hidden_ratio, Activation::gelu, rng);
    return std::make_unique<GrKanFfn<T>>(dim, options.hidden_ratio, options.groups, options.m, options.n, rng);
}

template class GrKanLayer<float>;
template class GrKanLayer<double>;
template class MlpFfn<float>;
template class MlpFfn<double>;
template class GrKanFfn<float>;
template class GrKanFfn<double>;
template std::unique_ptr<FeedForward<float>> make_ffn<float>(std::size_t, const FfnOptions&, Rng&);
template std::unique_ptr<FeedForward<double>> make_ffn<double>(std::size_t, const FfnOptions&, Rng&);

}  // namespace ukast
