#pragma once

#include <array>
#include <string>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

// Spatial symmetries of the image plane, applied band by band.
enum class SpatialTransform {
    kIdentity,
    kFlipHorizontal,
    kFlipVertical,
    kRotate90,
    kRotate180,
    kRotate270,
};

inline constexpr std::array<SpatialTransform, 6> kAllTransforms = {
    SpatialTransform::kIdentity,     SpatialTransform::kFlipHorizontal,
    SpatialTransform::kFlipVertical, SpatialTransform::kRotate90,
    SpatialTransform::kRotate180,    SpatialTransform::kRotate270,
};

std::string transform_name(SpatialTransform t);
SpatialTransform transform_inverse(SpatialTransform t);

// Rotations are counterclockwise; a [.., H, W] input becomes [.., W, H].
Tensor apply_transform(const Tensor& x, SpatialTransform t);
Var apply_transform(Var x, SpatialTransform t);

}  // namespace flowfuse
