#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "quadtrack/common.hpp"

namespace quadtrack {

/// Dense row-major float32 tensor. The carrier for feature maps, descriptors
/// and parameters. Values are plain data: copy freely, share across threads.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor scalar(float v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v);
    static Tensor uniform(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return numel_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D / 3-D accessors, row-major
    float& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    float at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    float& at(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    // Throws ShapeError naming `where` if any entry is NaN/Inf.
    void require_finite(const char* where) const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
    int64_t numel_ = 0;
};

// Elementwise helpers used across modules; accumulate in double where a
// reduction is involved.
double sum64(const Tensor& t);
double dot64(const Tensor& a, const Tensor& b);
double squared_distance(const Tensor& a, const Tensor& b);
double euclidean_distance(const Tensor& a, const Tensor& b);

}  // namespace quadtrack
