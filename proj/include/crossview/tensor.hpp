#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "crossview/errors.hpp"

namespace crossview {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major n-d array. Plain value type; gradients live in autograd nodes.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_dims();
        data_.assign(shape_numel(shape_), T(0));
    }

    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != shape_numel(shape_)) {
            throw DimError("tensor: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(int i, int j) {
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }
    const T& operator()(int i, int j) const {
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }
    T& operator()(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    const T& operator()(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    T& operator()(int o, int i, int y, int x) {
        return data_[((static_cast<std::size_t>(o) * dim(1) + i) * dim(2) + y) * dim(3) + x];
    }
    const T& operator()(int o, int i, int y, int x) const {
        return data_[((static_cast<std::size_t>(o) * dim(1) + i) * dim(2) + y) * dim(3) + x];
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(d));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (int d : shape_) {
            if (d <= 0) throw DimError("tensor: non-positive dimension in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

} // namespace crossview
