#include "flowfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace flowfuse {

const Tensor& Var::value() const {
    check_contract(tape != nullptr, "value() on a detached Var");
    return tape->value(*this);
}

bool Var::requires_grad() const {
    check_contract(tape != nullptr, "requires_grad() on a detached Var");
    return tape->node_requires_grad(*this);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    value.require_finite("leaf value");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<uint32_t>(nodes_.size() - 1)};
}

Var Tape::make_node(const char* name, Tensor value, const std::vector<Var>& parents,
                    BackwardFn backward) {
    bool needs_grad = false;
    Node node;
    node.parents.reserve(parents.size());
    for (const Var& p : parents) {
        check_contract(p.tape == this, std::string(name) + ": parent from another tape");
        check_contract(p.index < nodes_.size(), std::string(name) + ": parent index out of range");
        node.parents.push_back(p.index);
        needs_grad = needs_grad || nodes_[p.index].requires_grad;
    }
    value.require_finite(std::string(name) + " output");
    node.value = std::move(value);
    node.requires_grad = needs_grad;
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
    check_contract(v.tape == this && v.index < nodes_.size(), "Var does not belong to this tape");
    return nodes_[v.index].value;
}

bool Tape::node_requires_grad(Var v) const {
    check_contract(v.tape == this && v.index < nodes_.size(), "Var does not belong to this tape");
    return nodes_[v.index].requires_grad;
}

void Tape::clear() { nodes_.clear(); }

GradMap Tape::backward(Var root) const {
    check_contract(root.tape == this && root.index < nodes_.size(),
                   "backward root does not belong to this tape");
    const Node& root_node = nodes_[root.index];
    check_contract(root_node.value.numel() == 1, "backward root must be scalar, got " +
                                                     shape_str(root_node.value.shape));
    check_contract(root_node.requires_grad, "backward root has no gradient path to any leaf");

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[root.index] = Tensor(root_node.value.shape, 1.0);

    std::vector<const Tensor*> parent_values;
    std::vector<Tensor*> parent_grads;
    for (uint32_t i = root.index + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (!grads[i].has_value() || !node.backward) continue;
        parent_values.clear();
        parent_grads.clear();
        for (uint32_t p : node.parents) {
            const Node& parent = nodes_[p];
            parent_values.push_back(&parent.value);
            if (parent.requires_grad) {
                if (!grads[p].has_value()) grads[p] = Tensor(parent.value.shape, 0.0);
                parent_grads.push_back(&*grads[p]);
            } else {
                parent_grads.push_back(nullptr);
            }
        }
        node.backward(*grads[i], node.value, parent_values, parent_grads);
    }
    return GradMap(this, std::move(grads));
}

Tensor GradMap::grad(Var v) const {
    check_contract(v.tape == tape_ && v.index < grads_.size(),
                   "grad() for a Var from another tape");
    if (grads_[v.index].has_value()) return *grads_[v.index];
    return Tensor(tape_->nodes_[v.index].value.shape, 0.0);
}

const Tensor* GradMap::maybe_grad(Var v) const {
    check_contract(v.tape == tape_ && v.index < grads_.size(),
                   "maybe_grad() for a Var from another tape");
    return grads_[v.index].has_value() ? &*grads_[v.index] : nullptr;
}

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// Shared forward+backward wiring for broadcasting binary elementwise ops.
Var binary_broadcast(const char* name, Var a, Var b,
                     const std::function<double(double, double)>& f,
                     const std::function<void(const Tensor&, const Tensor&, const Tensor&,
                                              Tensor*, Tensor*)>& back) {
    check_contract(a.tape != nullptr && a.tape == b.tape,
                   std::string(name) + ": operands must share one tape");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const auto out_shape = broadcast_shape(av.shape, bv.shape);
    const Tensor ab = broadcast_to(av, out_shape);
    const Tensor bb = broadcast_to(bv, out_shape);
    Tensor out(out_shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(ab.data[i], bb.data[i]);
    return a.tape->make_node(
        name, std::move(out), {a, b},
        [back](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
            const Tensor pa = broadcast_to(*pv[0], og.shape);
            const Tensor pb = broadcast_to(*pv[1], og.shape);
            Tensor ga(og.shape, 0.0);
            Tensor gb(og.shape, 0.0);
            back(og, pa, pb, pg[0] ? &ga : nullptr, pg[1] ? &gb : nullptr);
            if (pg[0]) accumulate(*pg[0], reduce_to_shape(ga, pv[0]->shape));
            if (pg[1]) accumulate(*pg[1], reduce_to_shape(gb, pv[1]->shape));
        });
}

}  // namespace

Var add(Var a, Var b) {
    return binary_broadcast(
        "add", a, b, [](double x, double y) { return x + y; },
        [](const Tensor& og, const Tensor&, const Tensor&, Tensor* ga, Tensor* gb) {
            if (ga) accumulate(*ga, og);
            if (gb) accumulate(*gb, og);
        });
}

Var sub(Var a, Var b) {
    return binary_broadcast(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](const Tensor& og, const Tensor&, const Tensor&, Tensor* ga, Tensor* gb) {
            if (ga) accumulate(*ga, og);
            if (gb)
                for (size_t i = 0; i < og.data.size(); ++i) gb->data[i] -= og.data[i];
        });
}

Var mul(Var a, Var b) {
    return binary_broadcast(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](const Tensor& og, const Tensor& pa, const Tensor& pb, Tensor* ga, Tensor* gb) {
            if (ga)
                for (size_t i = 0; i < og.data.size(); ++i) ga->data[i] += og.data[i] * pb.data[i];
            if (gb)
                for (size_t i = 0; i < og.data.size(); ++i) gb->data[i] += og.data[i] * pa.data[i];
        });
}

Var scale(Var a, double s) {
    Tensor out = flowfuse::scale(a.value(), s);
    return a.tape->make_node(
        "scale", std::move(out), {a},
        [s](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
            const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i) pg[0]->data[i] += s * og.data[i];
        });
}

Var square(Var a) {
    const Tensor& av = a.value();
    Tensor out = av;
    for (double& v : out.data) v *= v;
    return a.tape->make_node(
        "square", std::move(out), {a},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i)
                pg[0]->data[i] += 2.0 * pv[0]->data[i] * og.data[i];
        });
}

Var relu(Var a) {
    const Tensor& av = a.value();
    Tensor out = av;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return a.tape->make_node(
        "relu", std::move(out), {a},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i)
                if (pv[0]->data[i] > 0.0) pg[0]->data[i] += og.data[i];
        });
}

Var sigmoid(Var a) {
    const Tensor& av = a.value();
    Tensor out = av;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return a.tape->make_node(
        "sigmoid", std::move(out), {a},
        [](const Tensor& og, const Tensor& ov, const std::vector<const Tensor*>&,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i) {
                const double y = ov.data[i];
                pg[0]->data[i] += y * (1.0 - y) * og.data[i];
            }
        });
}

Var sum(Var a) {
    return a.tape->make_node(
        "sum", Tensor::scalar(a.value().sum()), {a},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (double& v : pg[0]->data) v += og.data[0];
        });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().numel());
    return a.tape->make_node(
        "mean", Tensor::scalar(a.value().sum() / n), {a},
        [n](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
            const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const double g = og.data[0] / n;
            for (double& v : pg[0]->data) v += g;
        });
}

Var l2_norm_sq(Var a) {
    return a.tape->make_node(
        "l2_norm_sq", Tensor::scalar(l2_norm_sq_value(a.value())), {a},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const double g = og.data[0];
            for (size_t i = 0; i < pg[0]->data.size(); ++i)
                pg[0]->data[i] += 2.0 * pv[0]->data[i] * g;
        });
}

Var l1_norm(Var a) {
    return a.tape->make_node(
        "l1_norm", Tensor::scalar(l1_norm_value(a.value())), {a},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const double g = og.data[0];
            for (size_t i = 0; i < pg[0]->data.size(); ++i) {
                const double x = pv[0]->data[i];
                if (x > 0.0)
                    pg[0]->data[i] += g;
                else if (x < 0.0)
                    pg[0]->data[i] -= g;
            }
        });
}

Var mse_loss(Var a, Var b) {
    check_contract(a.value().same_shape(b.value()),
                   "mse_loss shape mismatch " + shape_str(a.value().shape) + " vs " +
                       shape_str(b.value().shape));
    return mean(square(sub(a, b)));
}

namespace {

struct ConvDims {
    int cin, h, w, cout, kh, kw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k) {
    check_contract(x.rank() == 3, "conv2d input must be [Cin,H,W], got " + shape_str(x.shape));
    check_contract(k.rank() == 4,
                   "conv2d kernel must be [Cout,Cin,kh,kw], got " + shape_str(k.shape));
    ConvDims d{x.shape[0], x.shape[1], x.shape[2], k.shape[0], k.shape[2], k.shape[3]};
    check_contract(k.shape[1] == d.cin, "conv2d kernel expects " + std::to_string(k.shape[1]) +
                                            " input bands, got " + std::to_string(d.cin));
    check_contract(d.kh % 2 == 1 && d.kw % 2 == 1,
                   "conv2d kernel extents must be odd, got " + shape_str(k.shape));
    return d;
}

// out(co,y,x) += k(co,ci,ky,kx) * src(ci, y+ky-kh/2, x+kx-kw/2), zero outside.
void conv2d_forward_kernel(const Tensor& x, const Tensor& k, const Tensor* bias, Tensor& out) {
    const ConvDims d = conv_dims(x, k);
    for (int co = 0; co < d.cout; ++co) {
        double* oplane = out.data.data() + static_cast<size_t>(co) * d.h * d.w;
        const double b = bias ? bias->data[static_cast<size_t>(co)] : 0.0;
        std::fill(oplane, oplane + static_cast<size_t>(d.h) * d.w, b);
        for (int ci = 0; ci < d.cin; ++ci) {
            const double* splane = x.data.data() + static_cast<size_t>(ci) * d.h * d.w;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.kh / 2;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(d.h, d.h - dy);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const double wgt =
                        k.data[((static_cast<size_t>(co) * d.cin + ci) * d.kh + ky) * d.kw + kx];
                    if (wgt == 0.0) continue;
                    const int dx = kx - d.kw / 2;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(d.w, d.w - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = oplane + static_cast<size_t>(y) * d.w;
                        const double* srow =
                            splane + static_cast<size_t>(y + dy) * d.w + dx;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wgt * srow[xx];
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel(const Tensor& x, const Tensor& k, const Tensor& og, Tensor* gx,
                            Tensor* gk, Tensor* gb) {
    const ConvDims d = conv_dims(x, k);
    if (gb) {
        for (int co = 0; co < d.cout; ++co) {
            const double* oplane = og.data.data() + static_cast<size_t>(co) * d.h * d.w;
            double s = 0.0;
            for (int i = 0; i < d.h * d.w; ++i) s += oplane[i];
            gb->data[static_cast<size_t>(co)] += s;
        }
    }
    for (int co = 0; co < d.cout; ++co) {
        const double* oplane = og.data.data() + static_cast<size_t>(co) * d.h * d.w;
        for (int ci = 0; ci < d.cin; ++ci) {
            const double* splane = x.data.data() + static_cast<size_t>(ci) * d.h * d.w;
            double* gplane = gx ? gx->data.data() + static_cast<size_t>(ci) * d.h * d.w : nullptr;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.kh / 2;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(d.h, d.h - dy);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int dx = kx - d.kw / 2;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(d.w, d.w - dx);
                    const double wgt =
                        k.data[((static_cast<size_t>(co) * d.cin + ci) * d.kh + ky) * d.kw + kx];
                    double wacc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* orow = oplane + static_cast<size_t>(y) * d.w;
                        const double* srow =
                            splane + static_cast<size_t>(y + dy) * d.w + dx;
                        if (gplane) {
                            double* grow = gplane + static_cast<size_t>(y + dy) * d.w + dx;
                            for (int xx = x0; xx < x1; ++xx) {
                                grow[xx] += wgt * orow[xx];
                                wacc += srow[xx] * orow[xx];
                            }
                        } else {
                            for (int xx = x0; xx < x1; ++xx) wacc += srow[xx] * orow[xx];
                        }
                    }
                    if (gk)
                        gk->data[((static_cast<size_t>(co) * d.cin + ci) * d.kh + ky) * d.kw +
                                 kx] += wacc;
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Var x, Var kernel, Var bias) {
    const bool has_bias = bias.tape != nullptr;
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    const ConvDims d = conv_dims(xv, kv);
    const Tensor* bv = nullptr;
    if (has_bias) {
        bv = &bias.value();
        check_contract(bv->rank() == 1 && bv->shape[0] == d.cout,
                       "conv2d bias must be [" + std::to_string(d.cout) + "], got " +
                           shape_str(bv->shape));
    }
    Tensor out({d.cout, d.h, d.w});
    conv2d_forward_kernel(xv, kv, bv, out);
    std::vector<Var> parents = {x, kernel};
    if (has_bias) parents.push_back(bias);
    return x.tape->make_node(
        "conv2d", std::move(out), parents,
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            conv2d_backward_kernel(*pv[0], *pv[1], og, pg[0], pg[1],
                                   pg.size() > 2 ? pg[2] : nullptr);
        });
}

Var conv2d(Var x, Var kernel) { return conv2d(x, kernel, Var{}); }

Var avg_pool2(Var x) {
    Tensor out = avg_pool2(x.value());
    return x.tape->make_node(
        "avg_pool2", std::move(out), {x},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const Tensor& xv = *pv[0];
            const int bands = xv.rank() == 3 ? xv.shape[0] : 1;
            const int h = xv.shape[xv.rank() - 2];
            const int w = xv.shape[xv.rank() - 1];
            for (int b = 0; b < bands; ++b) {
                const double* oplane = og.data.data() + static_cast<size_t>(b) * (h / 2) * (w / 2);
                double* gplane = pg[0]->data.data() + static_cast<size_t>(b) * h * w;
                for (int i = 0; i < h / 2; ++i) {
                    for (int j = 0; j < w / 2; ++j) {
                        const double g = 0.25 * oplane[static_cast<size_t>(i) * (w / 2) + j];
                        gplane[static_cast<size_t>(2 * i) * w + 2 * j] += g;
                        gplane[static_cast<size_t>(2 * i) * w + 2 * j + 1] += g;
                        gplane[static_cast<size_t>(2 * i + 1) * w + 2 * j] += g;
                        gplane[static_cast<size_t>(2 * i + 1) * w + 2 * j + 1] += g;
                    }
                }
            }
        });
}

Var upsample_nearest2(Var x) {
    Tensor out = upsample_nearest2(x.value());
    return x.tape->make_node(
        "upsample_nearest2", std::move(out), {x},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const Tensor& xv = *pv[0];
            const int bands = xv.rank() == 3 ? xv.shape[0] : 1;
            const int h = xv.shape[xv.rank() - 2];
            const int w = xv.shape[xv.rank() - 1];
            for (int b = 0; b < bands; ++b) {
                const double* oplane = og.data.data() + static_cast<size_t>(b) * 4 * h * w;
                double* gplane = pg[0]->data.data() + static_cast<size_t>(b) * h * w;
                for (int i = 0; i < 2 * h; ++i) {
                    const double* orow = oplane + static_cast<size_t>(i) * 2 * w;
                    double* grow = gplane + static_cast<size_t>(i / 2) * w;
                    for (int j = 0; j < 2 * w; ++j) grow[j / 2] += orow[j];
                }
            }
        });
}

Var concat_bands(const std::vector<Var>& parts) {
    check_contract(!parts.empty(), "concat_bands needs at least one input");
    Tape* tape = parts[0].tape;
    int total = 0;
    const Tensor& first = parts[0].value();
    check_contract(first.rank() == 3, "concat_bands expects rank-3 inputs");
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        check_contract(v.rank() == 3 && v.shape[1] == first.shape[1] &&
                           v.shape[2] == first.shape[2],
                       "concat_bands spatial mismatch: " + shape_str(v.shape) + " vs " +
                           shape_str(first.shape));
        total += v.shape[0];
    }
    Tensor out({total, first.shape[1], first.shape[2]});
    size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + offset);
        offset += v.data.size();
    }
    return tape->make_node(
        "concat_bands", std::move(out), parts,
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
           const std::vector<Tensor*>& pg) {
            size_t off = 0;
            for (size_t p = 0; p < pv.size(); ++p) {
                const size_t n = pv[p]->data.size();
                if (pg[p]) {
                    for (size_t i = 0; i < n; ++i) pg[p]->data[i] += og.data[off + i];
                }
                off += n;
            }
        });
}

Var slice_bands(Var x, int start, int count) {
    const Tensor& xv = x.value();
    check_contract(xv.rank() == 3, "slice_bands expects rank-3 input");
    check_contract(start >= 0 && count > 0 && start + count <= xv.shape[0],
                   "slice_bands range [" + std::to_string(start) + "," +
                       std::to_string(start + count) + ") outside " + shape_str(xv.shape));
    const size_t plane = static_cast<size_t>(xv.shape[1]) * xv.shape[2];
    Tensor out({count, xv.shape[1], xv.shape[2]});
    std::copy(xv.data.begin() + start * plane, xv.data.begin() + (start + count) * plane,
              out.data.begin());
    return x.tape->make_node(
        "slice_bands", std::move(out), {x},
        [start, plane](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i)
                pg[0]->data[start * plane + i] += og.data[i];
        });
}

Var softmax(Var logits) {
    const Tensor& lv = logits.value();
    check_contract(lv.rank() == 1, "softmax expects a rank-1 vector, got " + shape_str(lv.shape));
    Tensor out = lv;
    const double m = lv.max();
    double z = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : out.data) v /= z;
    return logits.tape->make_node(
        "softmax", std::move(out), {logits},
        [](const Tensor& og, const Tensor& ov, const std::vector<const Tensor*>&,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            double inner = 0.0;
            for (size_t i = 0; i < og.data.size(); ++i) inner += og.data[i] * ov.data[i];
            for (size_t i = 0; i < og.data.size(); ++i)
                pg[0]->data[i] += ov.data[i] * (og.data[i] - inner);
        });
}

Var spectral_project(Var cube, Var weights) {
    const Tensor& cv = cube.value();
    const Tensor& wv = weights.value();
    check_contract(cv.rank() == 3, "spectral_project cube must be [C,H,W]");
    check_contract(wv.rank() == 1 && wv.shape[0] == cv.shape[0],
                   "spectral_project weights must be [" + std::to_string(cv.shape[0]) +
                       "], got " + shape_str(wv.shape));
    const int c = cv.shape[0];
    const size_t plane = static_cast<size_t>(cv.shape[1]) * cv.shape[2];
    Tensor out({cv.shape[1], cv.shape[2]});
    for (int b = 0; b < c; ++b) {
        const double w = wv.data[static_cast<size_t>(b)];
        const double* src = cv.data.data() + static_cast<size_t>(b) * plane;
        for (size_t i = 0; i < plane; ++i) out.data[i] += w * src[i];
    }
    return cube.tape->make_node(
        "spectral_project", std::move(out), {cube, weights},
        [c, plane](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                   const std::vector<Tensor*>& pg) {
            const Tensor& cvv = *pv[0];
            const Tensor& wvv = *pv[1];
            for (int b = 0; b < c; ++b) {
                const double* src = cvv.data.data() + static_cast<size_t>(b) * plane;
                if (pg[0]) {
                    double* g = pg[0]->data.data() + static_cast<size_t>(b) * plane;
                    const double w = wvv.data[static_cast<size_t>(b)];
                    for (size_t i = 0; i < plane; ++i) g[i] += w * og.data[i];
                }
                if (pg[1]) {
                    double s = 0.0;
                    for (size_t i = 0; i < plane; ++i) s += src[i] * og.data[i];
                    pg[1]->data[static_cast<size_t>(b)] += s;
                }
            }
        });
}

Var reshape(Var x, std::vector<int> new_shape) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::from_data(require_numel_match(new_shape, xv.data.size()), xv.data);
    return x.tape->make_node(
        "reshape", std::move(out), {x},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
           const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (size_t i = 0; i < og.data.size(); ++i) pg[0]->data[i] += og.data[i];
        });
}

}  // namespace flowfuse
