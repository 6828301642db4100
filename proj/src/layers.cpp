// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/layers.hpp"

#include <cmath>
#include <map>

#include "ukast/nn_ops.hpp"
#include "ukast/ops.hpp"

namespace ukast {

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> tensor, ParamKind kind) {
    if (find(name) != nullptr) throw std::logic_error("duplicate parameter name '" + name + "'");
    if (kind != ParamKind::buffer) tensor.set_requires_grad(true);
    entries_.push_back(NamedParam<T>{std::move(name), std::move(tensor), kind});
}

template <typename T>
std::vector<NamedParam<T>> ParamSet<T>::trainable() const {
    std::vector<NamedParam<T>> out;
    for (const auto& e : entries_)
        if (e.trainable()) out.push_back(e);
    return out;
}

template <typename T>
const NamedParam<T>* ParamSet<T>::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

template <typename T>
std::size_t ParamSet<T>::trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (e.trainable()) n += e.tensor.numel();
    return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::vector<NamedArray> ParamSet<T>::to_arrays() const {
    std::vector<NamedArray> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        const auto d = e.tensor.data();
        out.push_back(NamedArray{e.name, e.tensor.shape(), std::vector<float>(d.begin(), d.end())});
    }
    return out;
}

template <typename T>
void ParamSet<T>::load_arrays(std::span<const NamedArray> arrays) {
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : arrays) by_name[a.name] = &a;
    if (by_name.size() != entries_.size()) {
        throw CheckpointError("checkpoint manifest mismatch: checkpoint has " + std::to_string(by_name.size()) +
                              " arrays, model expects " + std::to_string(entries_.size()));
    }
    for (auto& e : entries_) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw CheckpointError("checkpoint manifest mismatch: missing array '" + e.name + "'");
        if (it->second->shape != e.tensor.shape()) {
            throw CheckpointError("checkpoint manifest mismatch: array '" + e.name + "' has shape " +
                                  shape_str(it->second->shape) + ", model expects " + shape_str(e.tensor.shape()));
        }
    }
    for (auto& e : entries_) {
        const auto& src = by_name[e.name]->values;
        auto dst = e.tensor.data_mut();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
}

template <typename T>
Tensor<T> trunc_normal_tensor(Shape shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data_mut()) v = static_cast<T>(rng.trunc_normal(stddev));
    return t;
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng)
    : weight(trunc_normal_tensor<T>(Shape{in, out}, 0.02, rng)) {
    if (with_bias) bias = Tensor<T>::zeros(Shape{out});
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
    if (x.dim() == 0 || x.shape().back() != in_features()) {
        throw ShapeError("linear expects last dim " + std::to_string(in_features()) + ", got " + shape_str(x.shape()));
    }
    Tensor<T> y;
    if (x.dim() == 1) {
        y = reshape(matmul(reshape(x, Shape{1, x.numel()}), weight), Shape{out_features()});
    } else {
        y = matmul(x, weight);
    }
    return bias.defined() ? add(y, bias) : y;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", weight, ParamKind::weight);
    if (bias.defined()) out.add(prefix + ".bias", bias, ParamKind::bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t features)
    : gamma(Tensor<T>::ones(Shape{features})), beta(Tensor<T>::zeros(Shape{features})) {}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta, -1, eps);
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", gamma, ParamKind::norm);
    out.add(prefix + ".bias", beta, ParamKind::norm);
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t pad, bool with_bias, Rng& rng)
    : padding(pad) {
    const double fan_in = static_cast<double>(in * kernel * kernel);
    weight = Tensor<T>(Shape{out, in, kernel, kernel});
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : weight.data_mut()) v = static_cast<T>(rng.normal(0.0, stddev));
    if (with_bias) bias = Tensor<T>::zeros(Shape{out});
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, padding);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", weight, ParamKind::weight);
    if (bias.defined()) out.add(prefix + ".bias", bias, ParamKind::bias);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng) {
    weight = Tensor<T>(Shape{in, out, kernel, kernel});
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : weight.data_mut()) v = static_cast<T>(rng.normal(0.0, stddev));
    bias = Tensor<T>::zeros(Shape{out});
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight, bias);
}

template <typename T>
void ConvTranspose2d<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", weight, ParamKind::weight);
    out.add(prefix + ".bias", bias, ParamKind::bias);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels)
    : gamma(Tensor<T>::ones(Shape{channels})),
      beta(Tensor<T>::zeros(Shape{channels})),
      running_mean(Tensor<T>::zeros(Shape{channels})),
      running_var(Tensor<T>::ones(Shape{channels})) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, bool training) const {
    Tensor<T> rm = running_mean;
    Tensor<T> rv = running_var;
    return batch_norm(x, gamma, beta, rm, rv, training);
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", gamma, ParamKind::norm);
    out.add(prefix + ".bias", beta, ParamKind::norm);
    out.add(prefix + ".running_mean", running_mean, ParamKind::buffer);
    out.add(prefix + ".running_var", running_var, ParamKind::buffer);
}

template <typename T>
InstanceNorm2d<T>::InstanceNorm2d(std::size_t channels)
    : gamma(Tensor<T>::ones(Shape{channels, 1})), beta(Tensor<T>::zeros(Shape{channels, 1})) {}

template <typename T>
Tensor<T> InstanceNorm2d<T>::operator()(const Tensor<T>& x) const {
    if (x.dim() != 4) throw ShapeError("instance norm expects [B,C,H,W], got " + shape_str(x.shape()));
    const auto& s = x.shape();
    auto flat = reshape(x, Shape{s[0], s[1], s[2] * s[3]});
    auto normed = layer_norm(flat, Tensor<T>(), Tensor<T>(), -1, T(1e-5));
    return reshape(add(mul(normed, gamma), beta), s);
}

template <typename T>
void InstanceNorm2d<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    out.add(prefix + ".weight", gamma, ParamKind::norm);
    out.add(prefix + ".bias", beta, ParamKind::norm);
}

template <typename T>
ConvBlock<T>::ConvBlock(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng)
    : conv(in, out, kernel, kernel / 2, false, rng), bn(out) {}

template <typename T>
Tensor<T> ConvBlock<T>::operator()(const Tensor<T>& x, bool training) const {
    return relu(bn(conv(x), training));
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, ParamSet<T>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
}

template class ParamSet<float>;
template class ParamSet<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct InstanceNorm2d<float>;
template struct InstanceNorm2d<double>;
template struct ConvBlock<float>;
template struct ConvBlock<double>;
template Tensor<float> trunc_normal_tensor<float>(Shape, double, Rng&);
template Tensor<double> trunc_normal_tensor<double>(Shape, double, Rng&);

}  // namespace ukast
