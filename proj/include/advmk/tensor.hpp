#pragma once

#include "advmk/dual.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace advmk {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + ")";
}

/// Dense row-major tensor. Rank conventions used across the project:
/// {1} scalar, {n} vector, {r,c} matrix, {C,H,W} image, {OC,IC,KH,KW} conv kernel.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    // (C,H,W) accessors
    int channels() const { return shape.size() == 3 ? shape[0] : 1; }
    int height() const { return shape.size() == 3 ? shape[1] : (shape.size() == 2 ? shape[0] : 1); }
    int width() const { return shape.size() == 3 ? shape[2] : (shape.size() == 2 ? shape[1] : (int)shape[0]); }

    T& at(int c, int y, int x) { return data[(size_t)((std::int64_t)(c * shape[1] + y) * shape[2] + x)]; }
    const T& at(int c, int y, int x) const { return data[(size_t)((std::int64_t)(c * shape[1] + y) * shape[2] + x)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorD = Tensor<double>;

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (const T& v : t.data)
        if (!is_finite(v)) return false;
    return true;
}

} // namespace advmk
