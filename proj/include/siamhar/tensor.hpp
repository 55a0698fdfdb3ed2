#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace siamhar {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline void check_finite(std::span<const double> values, const std::string& where) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NonFiniteError(where + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

/// Dense row-major array of doubles.
///
/// A Tensor is a reference-counted handle: copies alias the same storage,
/// which is what lets the tape route gradients back to parameters. Use
/// clone() for an independent deep copy.
class Tensor {
public:
    Tensor() : Tensor(Shape{1}) {}

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : impl_(std::make_shared<Impl>()) {
        validate_shape(shape);
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_numel(impl_->shape), fill);
        impl_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : impl_(std::make_shared<Impl>()) {
        validate_shape(shape);
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("Tensor: shape " + shape_str(shape) + " holds " +
                                 std::to_string(shape_numel(shape)) + " values, got " +
                                 std::to_string(data.size()));
        }
        check_finite(data, "Tensor");
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
    }

    const Shape& shape() const noexcept { return impl_->shape; }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const noexcept { return impl_->shape.size(); }
    std::size_t numel() const noexcept { return impl_->data.size(); }

    std::span<double> data() noexcept { return impl_->data; }
    std::span<const double> data() const noexcept { return impl_->data; }
    double item() const {
        if (numel() != 1) throw ContractError("Tensor::item on tensor of shape " + shape_str(shape()));
        return impl_->data[0];
    }
    double operator[](std::size_t i) const { return impl_->data[i]; }
    double& operator[](std::size_t i) { return impl_->data[i]; }

    bool requires_grad() const noexcept { return impl_->requires_grad; }
    void set_requires_grad(bool v) noexcept { impl_->requires_grad = v; }

    bool has_grad() const noexcept { return !impl_->grad.empty(); }
    std::span<double> grad() noexcept { return impl_->grad; }
    std::span<const double> grad() const noexcept { return impl_->grad; }
    /// Allocates a zeroed gradient buffer if none exists yet. Gradient
    /// storage is accumulation state owned by the tape, so this is callable
    /// through a const handle.
    std::span<double> ensure_grad() const {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
        return impl_->grad;
    }
    void zero_grad() noexcept { impl_->grad.clear(); }

    Tensor clone() const {
        Tensor t;
        t.impl_ = std::make_shared<Impl>(*impl_);
        return t;
    }

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }
    const void* id() const noexcept { return impl_.get(); }

private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };

    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw DimensionError("Tensor: empty shape");
        for (auto e : shape) {
            if (e == 0) throw DimensionError("Tensor: zero extent in shape " + shape_str(shape));
        }
    }

    std::shared_ptr<Impl> impl_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
    }
}

/// A tensor registered under a stable name, as stored in checkpoints and
/// reported by the optimizer.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

}  // namespace siamhar
