// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ukast/tensor.hpp"

#include <sstream>

namespace ukast {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                         " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

template <typename T>
std::size_t Tensor<T>::size(int axis) const {
    const int rank = static_cast<int>(dim());
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return shape()[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    if (!flag) impl_->grad.clear();
    return *this;
}

namespace {
template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;
}

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(g_active_tape<T>) {
    g_active_tape<T> = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
    g_active_tape<T> = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
    return g_active_tape<T>;
}

template <typename T>
void Tape<T>::record(Tensor<T>& output, std::vector<detail::ImplPtr<T>> inputs, Rule rule) {
    const auto& out = output.impl();
    out->requires_grad = true;
    out->node = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(Node{std::move(inputs), out, std::move(rule)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || !loss.shape().empty()) {
        throw ShapeError("backward requires a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any tensor requiring grad");
    loss.impl()->ensure_grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->rule(it->output->grad);
    }
    nodes_.clear();
}

template <typename T>
void backward(const Tensor<T>& loss) {
    auto* tape = Tape<T>::active();
    if (tape == nullptr) throw std::logic_error("backward called without an active tape");
    tape->backward(loss);
}

namespace detail {

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    auto* tape = Tape<T>::active();
    if (tape == nullptr) return nullptr;
    for (const auto* t : inputs) {
        if (t != nullptr && t->requires_grad()) return tape;
    }
    return nullptr;
}

template <typename T>
void accumulate_grad(const ImplPtr<T>& impl, std::span<const T> values) {
    auto* g = grad_sink(impl);
    if (g == nullptr) return;
    for (std::size_t i = 0; i < values.size(); ++i) (*g)[i] += values[i];
}

template Tape<float>* recording_tape(std::initializer_list<const Tensor<float>*>);
template Tape<double>* recording_tape(std::initializer_list<const Tensor<double>*>);
template void accumulate_grad(const ImplPtr<float>&, std::span<const float>);
template void accumulate_grad(const ImplPtr<double>&, std::span<const double>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace ukast
