#include "flowfuse/transforms.hpp"

namespace flowfuse {

std::string transform_name(SpatialTransform t) {
    switch (t) {
        case SpatialTransform::kIdentity: return "identity";
        case SpatialTransform::kFlipHorizontal: return "flip-horizontal";
        case SpatialTransform::kFlipVertical: return "flip-vertical";
        case SpatialTransform::kRotate90: return "rotate-90";
        case SpatialTransform::kRotate180: return "rotate-180";
        case SpatialTransform::kRotate270: return "rotate-270";
    }
    throw ContractViolation("unknown transform");
}

SpatialTransform transform_inverse(SpatialTransform t) {
    switch (t) {
        case SpatialTransform::kRotate90: return SpatialTransform::kRotate270;
        case SpatialTransform::kRotate270: return SpatialTransform::kRotate90;
        default: return t;  // the rest are involutions
    }
}

namespace {

// Maps output pixel (i,j) to its source pixel in the input plane.
void source_index(SpatialTransform t, int h, int w, int i, int j, int& si, int& sj) {
    switch (t) {
        case SpatialTransform::kIdentity: si = i, sj = j; return;
        case SpatialTransform::kFlipHorizontal: si = i, sj = w - 1 - j; return;
        case SpatialTransform::kFlipVertical: si = h - 1 - i, sj = j; return;
        // out is [w,h]; out(i,j) = in(j, w-1-i)
        case SpatialTransform::kRotate90: si = j, sj = w - 1 - i; return;
        case SpatialTransform::kRotate180: si = h - 1 - i, sj = w - 1 - j; return;
        // out is [w,h]; out(i,j) = in(h-1-j, i)
        case SpatialTransform::kRotate270: si = h - 1 - j, sj = i; return;
    }
    throw ContractViolation("unknown transform");
}

bool swaps_extents(SpatialTransform t) {
    return t == SpatialTransform::kRotate90 || t == SpatialTransform::kRotate270;
}

}  // namespace

Tensor apply_transform(const Tensor& x, SpatialTransform t) {
    check_contract(x.rank() == 2 || x.rank() == 3,
                   "apply_transform expects rank 2 or 3, got " + shape_str(x.shape));
    if (t == SpatialTransform::kIdentity) return x;
    const int bands = x.rank() == 3 ? x.shape[0] : 1;
    const int h = x.shape[x.rank() - 2];
    const int w = x.shape[x.rank() - 1];
    std::vector<int> out_shape = x.shape;
    if (swaps_extents(t)) {
        out_shape[x.rank() - 2] = w;
        out_shape[x.rank() - 1] = h;
    }
    Tensor out(out_shape);
    const int oh = out_shape[x.rank() - 2];
    const int ow = out_shape[x.rank() - 1];
    for (int b = 0; b < bands; ++b) {
        const double* src = x.data.data() + static_cast<size_t>(b) * h * w;
        double* dst = out.data.data() + static_cast<size_t>(b) * oh * ow;
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                int si, sj;
                source_index(t, h, w, i, j, si, sj);
                dst[static_cast<size_t>(i) * ow + j] = src[static_cast<size_t>(si) * w + sj];
            }
        }
    }
    return out;
}

Var apply_transform(Var x, SpatialTransform t) {
    if (t == SpatialTransform::kIdentity) return x;
    Tensor out = apply_transform(x.value(), t);
    const SpatialTransform inv = transform_inverse(t);
    return x.tape->make_node(
        "apply_transform", std::move(out), {x},
        // The adjoint of a pixel permutation is its inverse permutation.
        [inv](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
              const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const Tensor back = apply_transform(og, inv);
            for (size_t i = 0; i < back.data.size(); ++i) pg[0]->data[i] += back.data[i];
        });
}

}  // namespace flowfuse
