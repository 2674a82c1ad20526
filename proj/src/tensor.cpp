#include "flowfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace flowfuse {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

int64_t product(const std::vector<int>& extents) {
    int64_t n = 1;
    for (int e : extents) {
        check_contract(e > 0, "tensor extent must be positive, got " + shape_str(extents));
        n *= e;
    }
    return n;
}

void require_trailing2(const Tensor& x, const char* op) {
    check_contract(x.rank() == 2 || x.rank() == 3,
                   std::string(op) + " expects rank 2 or 3, got " + shape_str(x.shape));
}

}  // namespace

Tensor::Tensor(std::vector<int> extents, double fill)
    : shape(std::move(extents)), data(static_cast<size_t>(product(shape)), fill) {}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
}

Tensor Tensor::from_data(std::vector<int> extents, std::vector<double> values) {
    Tensor t;
    t.shape = require_numel_match(extents, values.size());
    t.data = std::move(values);
    return t;
}

Tensor Tensor::randn(std::vector<int> extents, Rng& rng, double stddev) {
    Tensor t(std::move(extents));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

std::vector<int> require_numel_match(const std::vector<int>& extents, size_t n) {
    check_contract(static_cast<size_t>(product(extents)) == n,
                   "element count " + std::to_string(n) + " does not fill shape " +
                       shape_str(extents));
    return extents;
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw ContractViolation(what + " contains a non-finite value");
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

double Tensor::min() const {
    check_contract(!data.empty(), "min of empty tensor");
    return *std::min_element(data.begin(), data.end());
}

double Tensor::max() const {
    check_contract(!data.empty(), "max of empty tensor");
    return *std::max_element(data.begin(), data.end());
}

namespace {

Tensor zip(const Tensor& a, const Tensor& b, double (*f)(double, double), const char* op) {
    check_contract(a.same_shape(b), std::string(op) + " shape mismatch " + shape_str(a.shape) +
                                        " vs " + shape_str(b.shape));
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

bool broadcast_compatible(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() || b.empty()) return true;
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1) return false;
    }
    return true;
}

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
    check_contract(broadcast_compatible(a, b),
                   "shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    if (a.empty()) return b;
    if (b.empty()) return a;
    std::vector<int> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
    return out;
}

namespace {

std::vector<int64_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        strides[static_cast<size_t>(i)] =
            strides[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
    }
    return strides;
}

}  // namespace

Tensor broadcast_to(const Tensor& a, const std::vector<int>& target) {
    if (a.shape == target) return a;
    if (a.shape.empty()) {
        Tensor out(target, a.data[0]);
        return out;
    }
    check_contract(broadcast_compatible(a.shape, target) &&
                       broadcast_shape(a.shape, target) == target,
                   "cannot broadcast " + shape_str(a.shape) + " to " + shape_str(target));
    Tensor out(target);
    const auto src_strides = row_major_strides(a.shape);
    const size_t rank = target.size();
    std::vector<int> idx(rank, 0);
    for (size_t flat = 0; flat < out.data.size(); ++flat) {
        int64_t src = 0;
        for (size_t d = 0; d < rank; ++d) {
            const int i = a.shape[d] == 1 ? 0 : idx[d];
            src += src_strides[d] * i;
        }
        out.data[flat] = a.data[static_cast<size_t>(src)];
        for (size_t d = rank; d-- > 0;) {
            if (++idx[d] < target[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor reduce_to_shape(const Tensor& g, const std::vector<int>& target) {
    if (g.shape == target) return g;
    if (target.empty()) return Tensor::scalar(g.sum());
    check_contract(broadcast_compatible(target, g.shape) &&
                       broadcast_shape(target, g.shape) == g.shape,
                   "cannot reduce " + shape_str(g.shape) + " to " + shape_str(target));
    Tensor out(target, 0.0);
    const auto dst_strides = row_major_strides(target);
    const size_t rank = g.shape.size();
    std::vector<int> idx(rank, 0);
    for (size_t flat = 0; flat < g.data.size(); ++flat) {
        int64_t dst = 0;
        for (size_t d = 0; d < rank; ++d) {
            const int i = target[d] == 1 ? 0 : idx[d];
            dst += dst_strides[d] * i;
        }
        out.data[static_cast<size_t>(dst)] += g.data[flat];
        for (size_t d = rank; d-- > 0;) {
            if (++idx[d] < g.shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    check_contract(a.data.size() == b.data.size(),
                   "dot size mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l1_norm_value(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += std::abs(v);
    return s;
}

double l2_norm_sq_value(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return s;
}

Tensor avg_pool2(const Tensor& x) {
    require_trailing2(x, "avg_pool2");
    const int bands = x.rank() == 3 ? x.shape[0] : 1;
    const int h = x.shape[x.rank() - 2];
    const int w = x.shape[x.rank() - 1];
    check_contract(h % 2 == 0 && w % 2 == 0,
                   "avg_pool2 needs even spatial extents, got " + shape_str(x.shape));
    std::vector<int> out_shape = x.shape;
    out_shape[x.rank() - 2] = h / 2;
    out_shape[x.rank() - 1] = w / 2;
    Tensor out(out_shape);
    const double* src = x.data.data();
    double* dst = out.data.data();
    for (int b = 0; b < bands; ++b) {
        const double* plane = src + static_cast<size_t>(b) * h * w;
        double* oplane = dst + static_cast<size_t>(b) * (h / 2) * (w / 2);
        for (int i = 0; i < h / 2; ++i) {
            const double* r0 = plane + static_cast<size_t>(2 * i) * w;
            const double* r1 = r0 + w;
            for (int j = 0; j < w / 2; ++j) {
                oplane[static_cast<size_t>(i) * (w / 2) + j] =
                    0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
            }
        }
    }
    return out;
}

Tensor upsample_nearest2(const Tensor& x) {
    require_trailing2(x, "upsample_nearest2");
    const int bands = x.rank() == 3 ? x.shape[0] : 1;
    const int h = x.shape[x.rank() - 2];
    const int w = x.shape[x.rank() - 1];
    std::vector<int> out_shape = x.shape;
    out_shape[x.rank() - 2] = 2 * h;
    out_shape[x.rank() - 1] = 2 * w;
    Tensor out(out_shape);
    for (int b = 0; b < bands; ++b) {
        const double* plane = x.data.data() + static_cast<size_t>(b) * h * w;
        double* oplane = out.data.data() + static_cast<size_t>(b) * 4 * h * w;
        for (int i = 0; i < 2 * h; ++i) {
            const double* row = plane + static_cast<size_t>(i / 2) * w;
            double* orow = oplane + static_cast<size_t>(i) * 2 * w;
            for (int j = 0; j < 2 * w; ++j) orow[j] = row[j / 2];
        }
    }
    return out;
}

Tensor crop2(const Tensor& x, int top, int left, int height, int width) {
    require_trailing2(x, "crop2");
    const int bands = x.rank() == 3 ? x.shape[0] : 1;
    const int h = x.shape[x.rank() - 2];
    const int w = x.shape[x.rank() - 1];
    check_contract(top >= 0 && left >= 0 && height > 0 && width > 0 && top + height <= h &&
                       left + width <= w,
                   "crop2 window out of bounds for " + shape_str(x.shape));
    std::vector<int> out_shape = x.shape;
    out_shape[x.rank() - 2] = height;
    out_shape[x.rank() - 1] = width;
    Tensor out(out_shape);
    for (int b = 0; b < bands; ++b) {
        const double* plane = x.data.data() + static_cast<size_t>(b) * h * w;
        double* oplane = out.data.data() + static_cast<size_t>(b) * height * width;
        for (int i = 0; i < height; ++i) {
            const double* row = plane + static_cast<size_t>(top + i) * w + left;
            std::copy(row, row + width, oplane + static_cast<size_t>(i) * width);
        }
    }
    return out;
}

Tensor clamp01(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

double mse(const Tensor& a, const Tensor& b) {
    check_contract(a.same_shape(b),
                   "mse shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

}  // namespace flowfuse
