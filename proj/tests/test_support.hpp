#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/rng.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse::testing {

// Relative disagreement with a floor so near-zero gradients compare on an
// absolute scale where finite differences are all cancellation noise.
inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

// Central finite differences of a tape-built scalar loss against the tape's
// own backward pass; returns the worst per-entry relative error. Tensors
// larger than max_entries are probed on an evenly strided index subset (ends
// included) so network-sized kernels stay affordable: two forward passes per
// probed entry dominate the cost.
inline double fd_max_rel_err(const Tensor& x0,
                             const std::function<Var(Tape&, Var)>& build_loss,
                             double step = 1e-5, size_t max_entries = 200) {
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.leaf(x0, true);
        Var loss = build_loss(tape, x);
        analytic = tape.backward(loss).grad(x);
    }
    auto value_at = [&](const Tensor& point) {
        Tape tape;
        Var x = tape.leaf(point, false);
        return build_loss(tape, x).value().data[0];
    };
    const size_t n = x0.data.size();
    std::vector<size_t> probe;
    if (n <= max_entries) {
        for (size_t i = 0; i < n; ++i) probe.push_back(i);
    } else {
        for (size_t k = 0; k < max_entries; ++k) probe.push_back(k * (n - 1) / (max_entries - 1));
    }
    double worst = 0.0;
    for (size_t i : probe) {
        Tensor lo = x0, hi = x0;
        lo.data[i] -= step;
        hi.data[i] += step;
        const double numeric = (value_at(hi) - value_at(lo)) / (2.0 * step);
        worst = std::max(worst, grad_rel_err(analytic.data[i], numeric));
    }
    return worst;
}

// Fixed random projection turning a tensor-valued op into a scalar loss so
// every output entry contributes to the gradient under test.
inline Var project_loss(Tape& tape, Var y, const Tensor& weights) {
    return sum(mul(y, tape.constant(weights)));
}

inline Tensor random_tensor(std::vector<int> shape, uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng, stddev);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

}  // namespace flowfuse::testing
