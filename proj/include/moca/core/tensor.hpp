#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "moca/core/error.hpp"

namespace moca {

// Dense row-major float tensor. Everything in this project is f32 with
// contiguous storage; views and strides are not needed at this scale.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
    }
    Tensor(std::vector<int64_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape)) {
            throw runtime_failure("tensor: data size does not match shape");
        }
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 4-d accessor, the common case (frames: N x C x H x W).
    float& at4(int64_t a, int64_t b, int64_t c, int64_t d) {
        return data[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
    }
    float at4(int64_t a, int64_t b, int64_t c, int64_t d) const {
        return data[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
    }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void reshape(std::vector<int64_t> s) {
        if (numel_of(s) != numel()) throw runtime_failure("tensor: reshape changes element count");
        shape = std::move(s);
    }

    std::string shape_str() const {
        std::string out = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(shape[i]);
        }
        return out + "]";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw runtime_failure(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace moca
