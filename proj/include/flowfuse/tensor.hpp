#pragma once

#include <cstdint>
#include <vector>

#include "flowfuse/common.hpp"
#include "flowfuse/rng.hpp"

namespace flowfuse {

// Dense row-major tensor of 64-bit reals. Rank 0 (one element) through rank 4
// (conv kernels) are used in practice.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> extents, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor from_data(std::vector<int> extents, std::vector<double> values);
    static Tensor randn(std::vector<int> extents, Rng& rng, double stddev = 1.0);

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }

    int extent(int axis) const { return shape[static_cast<size_t>(axis)]; }

    double& operator()(int i) { return data[static_cast<size_t>(i)]; }
    double operator()(int i) const { return data[static_cast<size_t>(i)]; }
    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& operator()(int b, int i, int j) {
        return data[(static_cast<size_t>(b) * shape[1] + i) * shape[2] + j];
    }
    double operator()(int b, int i, int j) const {
        return data[(static_cast<size_t>(b) * shape[1] + i) * shape[2] + j];
    }

    bool all_finite() const;
    // Throws ContractViolation when a non-finite value is present.
    void require_finite(const std::string& what) const;

    double sum() const;
    double min() const;
    double max() const;
};

std::vector<int> require_numel_match(const std::vector<int>& extents, size_t n);

// Elementwise arithmetic on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Broadcast support: equal extents or singleton per axis; a rank-0 tensor
// broadcasts against anything.
bool broadcast_compatible(const std::vector<int>& a, const std::vector<int>& b);
std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b);
Tensor broadcast_to(const Tensor& a, const std::vector<int>& target);
// Sums a gradient at broadcast shape back down to the operand's shape.
Tensor reduce_to_shape(const Tensor& g, const std::vector<int>& target);

double dot(const Tensor& a, const Tensor& b);
double l1_norm_value(const Tensor& a);
double l2_norm_sq_value(const Tensor& a);

// Spatial helpers operating on the trailing two axes (rank 2 or rank 3).
Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
Tensor crop2(const Tensor& x, int top, int left, int height, int width);
Tensor clamp01(const Tensor& x);

double mse(const Tensor& a, const Tensor& b);

}  // namespace flowfuse
