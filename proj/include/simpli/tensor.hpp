#pragma once

#include <cmath>
#include <cstring>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace simpli {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <std::floating_point T>
struct TensorData {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
};

/// Dense row-major array. Copies share storage; use clone() for a deep copy.
template <std::floating_point T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : d_(std::make_shared<TensorData<T>>()) {
        d_->values.assign(shape_numel(shape), fill);
        d_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> values) : d_(std::make_shared<TensorData<T>>()) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
        d_->shape = std::move(shape);
        d_->values = std::move(values);
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return d_->shape.at(axis); }
    std::size_t numel() const { return d_->values.size(); }

    std::span<T> values() { return d_->values; }
    std::span<const T> values() const { return d_->values; }
    std::vector<T>& storage() { return d_->values; }
    const std::vector<T>& storage() const { return d_->values; }
    T* data() { return d_->values.data(); }
    const T* data() const { return d_->values.data(); }
    T& operator[](std::size_t i) { return d_->values[i]; }
    T operator[](std::size_t i) const { return d_->values[i]; }

    T item() const {
        if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
        return d_->values[0];
    }

    bool requires_grad() const { return d_ && d_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        d_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    std::span<const T> grad() const { return d_->grad; }
    /// Gradient buffer, allocated (zeroed) on first access.
    std::vector<T>& grad_buffer() const {
        if (d_->grad.size() != d_->values.size()) {
            d_->grad.clear();
            d_->grad.resize(d_->values.size());
        }
        return d_->grad;
    }
    Tensor grad_tensor() const {
        Tensor g(shape());
        if (has_grad()) g.storage() = d_->grad;
        return g;
    }
    void zero_grad() const {
        if (!d_) return;
        d_->grad.resize(d_->values.size());
        std::memset(d_->grad.data(), 0, d_->grad.size() * sizeof(T));
    }

    Tensor clone() const {
        Tensor t(shape());
        t.storage() = d_->values;
        return t;
    }
    /// Same values, no graph participation.
    Tensor detach() const { return clone(); }

    bool same_storage(const Tensor& o) const { return d_ == o.d_; }
    const std::shared_ptr<TensorData<T>>& impl() const { return d_; }

private:
    std::shared_ptr<TensorData<T>> d_;
};

/// Ordered record of executed ops. Constructing a tape makes it the active
/// tape for this thread; destruction restores the previous one.
template <std::floating_point T>
class Tape {
public:
    Tape() : previous_(current_ref()) { current_ref() = this; }
    ~Tape() { current_ref() = previous_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_ref(); }
    static Tape* exchange_current(Tape* t) { return std::exchange(current_ref(), t); }

    void record(std::function<void()> backward_fn) {
        if (consumed_) throw TapeError("tape: record after backward");
        ops_.push_back(std::move(backward_fn));
    }

    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }

    /// Seeds d(loss)=1 and replays recorded ops in exact reverse order.
    void backward(Tensor<T>& loss) {
        if (consumed_) throw TapeError("tape: backward called twice on the same tape");
        if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (!loss.requires_grad()) throw TapeError("backward: loss is not connected to any parameter");
        consumed_ = true;
        loss.grad_buffer()[0] += T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
        ops_.shrink_to_fit();
    }

private:
    static Tape*& current_ref() {
        thread_local Tape* active = nullptr;
        return active;
    }

    Tape* previous_;
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
};

/// Runs backward on the active tape.
template <std::floating_point T>
void backward(Tensor<T>& loss) {
    Tape<T>* tape = Tape<T>::current();
    if (tape == nullptr) throw TapeError("backward: no active tape");
    tape->backward(loss);
}

/// Disables recording for its lifetime.
template <std::floating_point T>
class NoGradScope {
public:
    NoGradScope() : saved_(Tape<T>::exchange_current(nullptr)) {}
    ~NoGradScope() { Tape<T>::exchange_current(saved_); }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* saved_;
};

namespace detail {

template <std::floating_point T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (Tape<T>::current() == nullptr) return false;
    for (const auto* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

template <std::floating_point T>
void check_finite(const Tensor<T>& t, const char* op) {
    for (T v : t.values()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
    }
}

/// Marks `out` as differentiable and records its backward closure.
template <std::floating_point T, typename Fn>
void record(Tensor<T>& out, Fn&& fn) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(std::forward<Fn>(fn));
}

}  // namespace detail

}  // namespace simpli
