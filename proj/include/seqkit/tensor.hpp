#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "seqkit/errors.hpp"

namespace seqkit {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline i64 shape_numel(const Shape& s) {
    i64 n = 1;
    for (i64 e : s) n *= e;
    return n;
}

// Dense row-major n-d array over float or double. Values are treated as
// immutable once filled; copies share storage.
template <typename S>
class Tensor {
    static_assert(std::is_floating_point_v<S>);

  public:
    Tensor() : shape_{}, storage_(std::make_shared<std::vector<S>>(1, S(0))) {}

    Tensor(Shape shape, std::vector<S> data)
        : shape_(std::move(shape)),
          storage_(std::make_shared<std::vector<S>>(std::move(data))) {
        validate();
        if (static_cast<i64>(storage_->size()) != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(storage_->size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return fill(std::move(shape), S(0)); }

    static Tensor fill(Shape shape, S v) {
        i64 n = checked_numel(shape);
        return Tensor(std::move(shape), std::vector<S>(static_cast<std::size_t>(n), v),
                      private_tag{});
    }

    static Tensor scalar(S v) { return fill({}, v); }

    template <typename Rng>
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
        i64 n = checked_numel(shape);
        std::vector<S> d(static_cast<std::size_t>(n));
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& x : d) x = static_cast<S>(dist(rng));
        return Tensor(std::move(shape), std::move(d), private_tag{});
    }

    template <typename Rng>
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        i64 n = checked_numel(shape);
        std::vector<S> d(static_cast<std::size_t>(n));
        std::uniform_real_distribution<double> dist(lo, hi);
        for (auto& x : d) x = static_cast<S>(dist(rng));
        return Tensor(std::move(shape), std::move(d), private_tag{});
    }

    const Shape& shape() const { return shape_; }
    i64 rank() const { return static_cast<i64>(shape_.size()); }
    i64 extent(i64 axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    i64 numel() const { return static_cast<i64>(storage_->size()); }

    const S* data() const { return storage_->data(); }
    S operator[](i64 i) const { return (*storage_)[static_cast<std::size_t>(i)]; }

    // Writable view; only valid while this tensor is the sole owner.
    S* mutable_data() {
        if (storage_.use_count() != 1)
            throw Error("mutable_data on shared tensor storage");
        return storage_->data();
    }

    Tensor clone() const {
        return Tensor(shape_, std::make_shared<std::vector<S>>(*storage_));
    }

    // Same storage, new shape (element count must match).
    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("reshape from " + shape_str(shape_) + " to " +
                             shape_str(shape) + " changes element count");
        for (i64 e : shape)
            if (e < 1) throw ShapeError("reshape target has extent < 1: " + shape_str(shape));
        return Tensor(std::move(shape), storage_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<const Mat>;
    using MutMatMap = Eigen::Map<Mat>;
    using ArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    using MutArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;

    MatMap mat(i64 rows, i64 cols) const {
        if (rows * cols != numel())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " on tensor " + shape_str(shape_));
        return MatMap(data(), rows, cols);
    }
    MutMatMap mutable_mat(i64 rows, i64 cols) {
        if (rows * cols != numel())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " on tensor " + shape_str(shape_));
        return MutMatMap(mutable_data(), rows, cols);
    }
    ArrMap arr() const { return ArrMap(data(), numel()); }
    MutArrMap mutable_arr() { return MutArrMap(mutable_data(), numel()); }

    bool all_finite() const {
        for (S v : *storage_)
            if (!std::isfinite(v)) return false;
        return true;
    }

  private:
    struct private_tag {};
    Tensor(Shape shape, std::vector<S> data, private_tag)
        : shape_(std::move(shape)),
          storage_(std::make_shared<std::vector<S>>(std::move(data))) {}
    Tensor(Shape shape, std::shared_ptr<std::vector<S>> storage)
        : shape_(std::move(shape)), storage_(std::move(storage)) {}

    static i64 checked_numel(const Shape& shape) {
        for (i64 e : shape)
            if (e < 1)
                throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
        return shape_numel(shape);
    }

    void validate() const {
        for (i64 e : shape_)
            if (e < 1)
                throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape_));
    }

    Shape shape_;
    std::shared_ptr<std::vector<S>> storage_;
};

template <typename S>
constexpr std::uint8_t dtype_code() {
    if constexpr (std::is_same_v<S, float>) return 0;
    else return 1;
}

template <typename S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff over shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double m = 0;
    for (i64 i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace seqkit
