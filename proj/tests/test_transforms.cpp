#include "doctest.h"

#include <set>

#include "flowfuse/degradation.hpp"
#include "flowfuse/transforms.hpp"
#include "test_support.hpp"

using namespace flowfuse;
using namespace flowfuse::testing;

TEST_CASE("every transform composed with its inverse is the identity") {
    const Tensor x = random_tensor({3, 4, 6}, 101);
    for (SpatialTransform t : kAllTransforms) {
        const Tensor roundtrip =
            apply_transform(apply_transform(x, t), transform_inverse(t));
        CHECK_MESSAGE(bit_identical(roundtrip, x), transform_name(t));
    }
}

TEST_CASE("flips and the half turn are involutions") {
    const Tensor x = random_tensor({2, 5, 5}, 102);
    for (SpatialTransform t : {SpatialTransform::kFlipHorizontal,
                               SpatialTransform::kFlipVertical,
                               SpatialTransform::kRotate180}) {
        CHECK(transform_inverse(t) == t);
        CHECK(bit_identical(apply_transform(apply_transform(x, t), t), x));
    }
}

TEST_CASE("quarter turns compose as expected") {
    const Tensor x = random_tensor({1, 4, 6}, 103);
    Tensor four = x;
    for (int i = 0; i < 4; ++i) four = apply_transform(four, SpatialTransform::kRotate90);
    CHECK(bit_identical(four, x));

    const Tensor twice =
        apply_transform(apply_transform(x, SpatialTransform::kRotate90),
                        SpatialTransform::kRotate90);
    CHECK(bit_identical(twice, apply_transform(x, SpatialTransform::kRotate180)));
    CHECK(transform_inverse(SpatialTransform::kRotate90) == SpatialTransform::kRotate270);
}

TEST_CASE("rotation by a quarter turn moves a marked pixel correctly") {
    Tensor x({1, 2, 3}, 0.0);
    x(0, 0, 2) = 1.0;  // top-right corner
    const Tensor r = apply_transform(x, SpatialTransform::kRotate90);
    CHECK(r.shape == std::vector<int>{1, 3, 2});
    // Counter-clockwise: the top-right corner becomes the top-left one.
    CHECK(r(0, 0, 0) == 1.0);
    CHECK(r.sum() == 1.0);
}

TEST_CASE("transforms act on every band the same way") {
    const Tensor cube = random_tensor({4, 6, 6}, 104);
    for (SpatialTransform t : kAllTransforms) {
        const Tensor whole = apply_transform(cube, t);
        for (int b = 0; b < 4; ++b) {
            Tensor band({1, 6, 6});
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) band(0, i, j) = cube(b, i, j);
            const Tensor tb = apply_transform(band, t);
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) CHECK(whole(b, i, j) == tb(0, i, j));
        }
    }
}

TEST_CASE("the six transforms of an asymmetric plane are all distinct") {
    const Tensor x = random_tensor({1, 4, 4}, 105);
    std::set<std::vector<double>> images;
    for (SpatialTransform t : kAllTransforms) images.insert(apply_transform(x, t).data);
    CHECK(images.size() == 6);
}

TEST_CASE("mosaicing commutes with transforms on a spectrally constant cube") {
    // When all bands carry the same image, band selection is a no-op, so the
    // 2x2 averaging is the only spatial action left and it commutes with the
    // lattice-preserving transforms.
    const SfaPattern pattern = SfaPattern::default_pattern(16);
    const Tensor plane = random_tensor({8, 8}, 106);
    Tensor cube({16, 8, 8});
    for (int b = 0; b < 16; ++b)
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) cube(b, i, j) = plane(i, j);

    for (SpatialTransform t : kAllTransforms) {
        const Tensor mosaic_then_t = apply_transform(apply_mosaic(cube, pattern), t);
        const Tensor t_then_mosaic = apply_mosaic(apply_transform(cube, t), pattern);
        CHECK_MESSAGE(max_abs_diff(mosaic_then_t, t_then_mosaic) < 1e-15,
                      transform_name(t));
    }
}

TEST_CASE("the transform adjoint matches finite differences") {
    const Tensor x0 = random_tensor({2, 4, 6}, 107, 0.8);
    for (SpatialTransform t : kAllTransforms) {
        const auto out_shape = apply_transform(x0, t).shape;
        const Tensor w = random_tensor(out_shape, 108);
        CHECK(fd_max_rel_err(x0, [&](Tape& tape, Var x) {
                  return project_loss(tape, apply_transform(x, t), w);
              }) < 1e-4);
    }
}
