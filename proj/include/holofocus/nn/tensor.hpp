#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "holofocus/common.hpp"

namespace holo::nn {

inline std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor. Training instantiates T = float, the
// finite-difference oracle T = double.
template <std::floating_point T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s)
        : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeMismatch("tensor payload does not match shape " + shape_str(shape));
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    T operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel())
            throw ShapeMismatch("reshape " + shape_str(shape) + " -> " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    template <std::floating_point U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<U>(data[i]);
        return t;
    }
};

template <std::floating_point T>
void check_shape(const Tensor<T>& t, const std::vector<int>& expected, const char* who) {
    if (t.shape != expected)
        throw ShapeMismatch(std::string(who) + ": expected " + shape_str(expected) + ", got " +
                            shape_str(t.shape));
}

} // namespace holo::nn
