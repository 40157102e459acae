#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "putf/error.hpp"

namespace putf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct TensorPayload {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;          // allocated on demand, same length as values
    bool requires_grad = false;   // user-marked leaf (parameter or input)
    bool tape_connected = false;  // produced by an op recorded on a live tape
};

// Dense row-major tensor handle. Copies share the payload; values are treated
// as immutable once an op has consumed them. Gradients accumulate in place.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape) : p_(std::make_shared<TensorPayload<T>>()) {
        validate_shape(shape);
        p_->shape = std::move(shape);
        p_->values.assign(shape_numel(p_->shape), T(0));
    }

    Tensor(Shape shape, std::vector<T> values) : p_(std::make_shared<TensorPayload<T>>()) {
        validate_shape(shape);
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor: data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        p_->shape = std::move(shape);
        p_->values = std::move(values);
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (T& x : t.p_->values) x = v;
        return t;
    }

    bool defined() const { return p_ != nullptr; }
    const Shape& shape() const { return p_->shape; }
    std::size_t rank() const { return p_->shape.size(); }
    std::size_t numel() const { return p_->values.size(); }
    std::size_t dim(std::size_t i) const { return p_->shape.at(i); }

    std::span<const T> values() const { return p_->values; }
    // Direct mutation; callers must not mutate tensors already recorded on a
    // live tape (initialization, optimizer steps, IO, finite differences).
    std::span<T> values_mut() { return p_->values; }

    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
        return p_->values[0];
    }

    T at(std::size_t i) const { return p_->values.at(i); }
    T at(std::size_t i, std::size_t j) const { return p_->values.at(i * dim(1) + j); }
    T at(std::size_t i, std::size_t j, std::size_t k) const {
        return p_->values.at((i * dim(1) + j) * dim(2) + k);
    }

    bool requires_grad() const { return p_ && p_->requires_grad; }
    Tensor& set_requires_grad(bool v = true) {
        p_->requires_grad = v;
        if (v) ensure_grad();
        return *this;
    }

    // True when gradients must flow into this tensor during backward.
    bool grad_needed() const { return p_ && (p_->requires_grad || p_->tape_connected); }

    void ensure_grad() {
        if (p_->grad.size() != p_->values.size()) p_->grad.assign(p_->values.size(), T(0));
    }

    bool has_grad() const { return p_ && p_->grad.size() == p_->values.size(); }

    std::span<const T> grad() const {
        if (!has_grad()) throw Error("grad: no gradient present for shape " + shape_str(shape()));
        return p_->grad;
    }
    std::span<T> grad_mut() {
        ensure_grad();
        return p_->grad;
    }
    void zero_grad() {
        if (has_grad())
            for (T& g : p_->grad) g = T(0);
    }

    // Deep copy of values only; the copy is a fresh detached tensor.
    Tensor clone() const {
        Tensor t;
        t.p_ = std::make_shared<TensorPayload<T>>();
        t.p_->shape = p_->shape;
        t.p_->values = p_->values;
        return t;
    }

    std::shared_ptr<TensorPayload<T>> payload() const { return p_; }

private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor: empty shape");
        for (std::size_t d : shape)
            if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
    }

    std::shared_ptr<TensorPayload<T>> p_;
};

// Reverse-mode tape. Ops append a backward closure as they execute; backward
// replays them strictly in reverse execution order, so a tensor's consumers
// always finish accumulating into its grad before its producer reads it.
// Leaf grads (requires_grad tensors) are left untouched between backward
// calls, which lets a training step accumulate over a minibatch.
template <typename T>
class Tape {
public:
    void record(std::function<void()> fn, std::vector<std::shared_ptr<TensorPayload<T>>> involved) {
        entries_.push_back(std::move(fn));
        for (auto& p : involved) involved_.push_back(std::move(p));
    }

    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (!loss.grad_needed())
            throw Error("backward: loss is not connected to the tape");
        auto payload = loss.payload();
        payload->grad.assign(1, T(1));
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
        clear();
    }

    void clear() {
        for (auto& p : involved_) p->tape_connected = false;
        involved_.clear();
        entries_.clear();
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<std::function<void()>> entries_;
    std::vector<std::shared_ptr<TensorPayload<T>>> involved_;
};

template <typename T>
inline Tape<T>*& active_tape() {
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

// RAII activation of a tape on the current thread.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& t) : prev_(active_tape<T>()) { active_tape<T>() = &t; }
    ~TapeScope() { active_tape<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* prev_;
};

}  // namespace putf
