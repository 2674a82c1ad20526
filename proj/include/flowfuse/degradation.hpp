#pragma once

#include <array>
#include <utility>
#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

// Periodic band layout of the sensor. The physical pattern is 8x8: a 4x4
// base with every cell duplicated into a 2x2 block, so each 2x2-averaged
// mosaic pixel is a pure single-band sample and the effective pattern at
// mosaic resolution is the 4x4 base tiled.
struct SfaPattern {
    int bands = 0;
    std::array<int, 16> base{};  // row-major 4x4, entries in [0, bands)

    static SfaPattern default_pattern(int bands);

    int base_at(int r, int c) const { return base[static_cast<size_t>((r % 4) * 4 + c % 4)]; }
    // Band of full-resolution pixel (i,j) under the duplicated 8x8 pattern.
    int full_at(int i, int j) const { return base_at((i / 2) % 4, (j / 2) % 4); }
    // Band of mosaic-resolution pixel (i,j).
    int half_at(int i, int j) const { return base_at(i % 4, j % 4); }

    // Base cells carrying a band, as (row, col) offsets in [0,4)^2.
    std::vector<std::pair<int, int>> sites_of(int band) const;

    // Every band must appear in the base; with 16 bands, exactly once.
    void validate() const;
};

// Learnable band weights for the cube-to-plane spectral projection,
// parameterized so the weights are always nonnegative and sum to 1.
struct SpectralResponse {
    Tensor logits;  // rank 1, length = band count

    static SpectralResponse uniform(int bands);
    Tensor weights() const;
};

// The 16-entry response vector used for simulating observations; for fewer
// bands the leading entries are kept and renormalized.
Tensor reference_srf(int bands);

// A mosaic plane at half the PAN extents plus the PAN plane.
struct Observation {
    Tensor mosaic;  // rank 2, [H/2, W/2]
    Tensor pan;     // rank 2, [H, W]

    void validate() const;
};

// Full-resolution single-band image: pixel (i,j) = cube[pattern(i,j), i, j].
Tensor mosaic_select(const Tensor& cube, const SfaPattern& pattern);
Var mosaic_select(Var cube, const SfaPattern& pattern);

// Mosaicing followed by 2x2 block averaging. Linear in the cube.
Tensor apply_mosaic(const Tensor& cube, const SfaPattern& pattern);
Var apply_mosaic(Var cube, const SfaPattern& pattern);

// P(i,j) = sum_b w_b * cube[b,i,j]. Linear in the cube and differentiable
// in the weights.
Tensor apply_spectral(const Tensor& cube, const Tensor& weights);

// Per band: bilinear interpolation across that band's mosaic lattice sites
// (averaged when a band has several base cells), then bilinear 2x upsampling
// with edge clamping. Linear in the mosaic.
Tensor interpolate_mosaic(const Tensor& mosaic, const SfaPattern& pattern);
Var interpolate_mosaic(Var mosaic, const SfaPattern& pattern);

// Bilinear 2x upsampling, half-pixel-aligned grids, edges clamped.
Tensor bilinear_up2(const Tensor& x);
Var bilinear_up2(Var x);

// Cube whose every band is P.
Tensor expand_pan(const Tensor& pan, int bands);

// 3x3 discrete Laplacian (center -4, edge neighbors +1), zero padded.
Tensor highpass_pan(const Tensor& pan);

}  // namespace flowfuse
