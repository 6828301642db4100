// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ukast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for any shape or axis contract violation.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tensor;
template <typename T>
class Tape;

namespace detail {

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty means "no grad yet"
    bool requires_grad = false;
    std::int64_t node = -1;  // index of the producing tape node, -1 for leaves

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

}  // namespace detail

/// Dense row-major tensor with an optional gradient buffer.
///
/// Tensors are cheap handles: copies share storage. Operations never alias
/// their inputs; every result owns fresh contiguous storage.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
    static Tensor zeros_like(const Tensor& other) { return zeros(other.shape()); }
    static Tensor ones_like(const Tensor& other) { return ones(other.shape()); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim() const { return impl_->shape.size(); }
    std::size_t size(int axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    /// Direct write access. Only meaningful on leaves (parameters, inputs).
    std::span<T> data_mut() { return impl_->data; }
    T item() const;
    T at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> grad_mut() { return impl_->ensure_grad(); }
    void zero_grad() { impl_->grad.clear(); }

    /// Fresh copy of the values with no grad and no tape history.
    Tensor detach() const { return Tensor(shape(), impl_->data); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(impl_->data.begin(), impl_->data.end());
        return Tensor<U>(shape(), std::move(out));
    }

    const detail::ImplPtr<T>& impl() const { return impl_; }
    static Tensor from_impl(detail::ImplPtr<T> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

   private:
    detail::ImplPtr<T> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations record themselves on the thread's active tape when any input
/// requires grad. `backward` walks nodes once, in reverse recording order.
template <typename T>
class Tape {
   public:
    using Rule = std::function<void(std::span<const T> grad_out)>;

    struct Node {
        std::vector<detail::ImplPtr<T>> inputs;
        detail::ImplPtr<T> output;
        Rule rule;
    };

    /// Makes a tape the active one for the current thread for its lifetime.
    class Scope {
       public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

       private:
        Tape* previous_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    void clear() { nodes_.clear(); }

    void record(Tensor<T>& output, std::vector<detail::ImplPtr<T>> inputs, Rule rule);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
    /// The recorded nodes are consumed.
    void backward(const Tensor<T>& loss);

   private:
    std::vector<Node> nodes_;
};

/// Runs `Tape::backward` on the thread's active tape.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {

/// Returns the active tape when any of `inputs` requires grad, else null.
template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs);

/// Adds `values` into `impl`'s grad when it requires grad.
template <typename T>
void accumulate_grad(const ImplPtr<T>& impl, std::span<const T> values);

template <typename T>
inline std::vector<T>* grad_sink(const ImplPtr<T>& impl) {
    if (!impl || !impl->requires_grad) return nullptr;
    return &impl->ensure_grad();
}

}  // namespace detail

}  // namespace ukast
