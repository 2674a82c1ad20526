#pragma once

#include "flowfuse/degradation.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

struct FullReferenceScores {
    double psnr, ssim, sam, ergas;
};

struct NoReferenceScores {
    double qnr, d_lambda, d_s;
};

// 10*log10(peak^2 / MSE); exact match reports the 100 dB cap.
double psnr(const Tensor& x, const Tensor& ref, double peak = 1.0);

// 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, unit dynamic range,
// averaged over window positions fully inside the planes.
double ssim_plane(const Tensor& x, const Tensor& ref);
// Band mean of ssim_plane.
double ssim(const Tensor& x, const Tensor& ref);

// Mean per-pixel spectral angle in degrees; pixels where either spectrum
// has zero norm are skipped (their count is reported via skipped).
double sam(const Tensor& x, const Tensor& ref, int* skipped = nullptr);

// 100 * ratio * sqrt(mean over bands of (RMSE_b / mean(ref_b))^2).
double ergas(const Tensor& x, const Tensor& ref, double ratio = 2.0);

// Universal image quality index over 32x32 blocks with stride 32 (blocks
// fully inside), population statistics.
double uiqi(const Tensor& x, const Tensor& y);

// 5x5 Gaussian blur, sigma 1, kernel truncated at radius 2 and renormalized,
// replicate padding.
Tensor gaussian_blur5(const Tensor& plane);

// Mosaic plane reassembled into a cube at mosaic resolution: each band takes
// the value of its nearest lattice site under the effective 4x4 pattern.
Tensor nearest_band_cube(const Tensor& mosaic, const SfaPattern& pattern);

// No-reference quality of a fused cube against the raw observations.
// d_lambda compares inter-band uiqi structure of the 2x2-averaged cube with
// the reassembled mosaic cube; d_s compares each band's uiqi against the PAN
// at both scales; qnr = (1 - d_lambda) * (1 - d_s).
NoReferenceScores qnr_suite(const Tensor& fused, const Tensor& mosaic, const Tensor& pan,
                            const SfaPattern& pattern, bool preblur);

FullReferenceScores full_reference(const Tensor& fused, const Tensor& ref);

}  // namespace flowfuse
