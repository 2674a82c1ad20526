#include "flowfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace flowfuse {

namespace {

constexpr double kPsnrCap = 100.0;

void require_same_cube(const Tensor& x, const Tensor& ref, const char* op) {
    check_contract(x.same_shape(ref), std::string(op) + " shape mismatch " +
                                          shape_str(x.shape) + " vs " + shape_str(ref.shape));
}

}  // namespace

double psnr(const Tensor& x, const Tensor& ref, double peak) {
    require_same_cube(x, ref, "psnr");
    const double m = mse(x, ref);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
const std::vector<double>& ssim_window() {
    static const std::vector<double> window = [] {
        std::vector<double> w(121);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            for (int j = 0; j < 11; ++j) {
                const double di = i - 5, dj = j - 5;
                w[static_cast<size_t>(i) * 11 + j] =
                    std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
                sum += w[static_cast<size_t>(i) * 11 + j];
            }
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return window;
}

}  // namespace

double ssim_plane(const Tensor& x, const Tensor& ref) {
    require_same_cube(x, ref, "ssim");
    check_contract(x.rank() == 2, "ssim_plane expects rank 2, got " + shape_str(x.shape));
    const int h = x.shape[0];
    const int w = x.shape[1];
    check_contract(h >= 11 && w >= 11,
                   "ssim needs extents >= 11, got " + shape_str(x.shape));
    const auto& win = ssim_window();
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    double total = 0.0;
    int count = 0;
    for (int i = 0; i + 11 <= h; ++i) {
        for (int j = 0; j + 11 <= w; ++j) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int a = 0; a < 11; ++a) {
                for (int b = 0; b < 11; ++b) {
                    const double g = win[static_cast<size_t>(a) * 11 + b];
                    const double xv = x(i + a, j + b);
                    const double yv = ref(i + a, j + b);
                    mx += g * xv;
                    my += g * yv;
                    mxx += g * xv * xv;
                    myy += g * yv * yv;
                    mxy += g * xv * yv;
                }
            }
            const double vx = mxx - mx * mx;
            const double vy = myy - my * my;
            const double cxy = mxy - mx * my;
            total += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
                     ((mx * mx + my * my + kC1) * (vx + vy + kC2));
            ++count;
        }
    }
    return total / count;
}

double ssim(const Tensor& x, const Tensor& ref) {
    require_same_cube(x, ref, "ssim");
    if (x.rank() == 2) return ssim_plane(x, ref);
    check_contract(x.rank() == 3, "ssim expects rank 2 or 3, got " + shape_str(x.shape));
    const size_t plane = static_cast<size_t>(x.shape[1]) * x.shape[2];
    double total = 0.0;
    for (int b = 0; b < x.shape[0]; ++b) {
        Tensor xb = Tensor::from_data({x.shape[1], x.shape[2]},
                                      {x.data.begin() + b * plane, x.data.begin() + (b + 1) * plane});
        Tensor rb = Tensor::from_data(
            {x.shape[1], x.shape[2]},
            {ref.data.begin() + b * plane, ref.data.begin() + (b + 1) * plane});
        total += ssim_plane(xb, rb);
    }
    return total / x.shape[0];
}

double sam(const Tensor& x, const Tensor& ref, int* skipped) {
    require_same_cube(x, ref, "sam");
    check_contract(x.rank() == 3, "sam expects cubes, got " + shape_str(x.shape));
    const int c = x.shape[0];
    const size_t plane = static_cast<size_t>(x.shape[1]) * x.shape[2];
    double total = 0.0;
    int used = 0, skip = 0;
    for (size_t p = 0; p < plane; ++p) {
        double xx = 0, rr = 0, xr = 0;
        for (int b = 0; b < c; ++b) {
            const double xv = x.data[static_cast<size_t>(b) * plane + p];
            const double rv = ref.data[static_cast<size_t>(b) * plane + p];
            xx += xv * xv;
            rr += rv * rv;
            xr += xv * rv;
        }
        if (xx == 0.0 || rr == 0.0) {
            ++skip;
            continue;
        }
        const double cosv = std::clamp(xr / std::sqrt(xx * rr), -1.0, 1.0);
        total += std::acos(cosv);
        ++used;
    }
    if (skipped) *skipped = skip;
    check_contract(used > 0, "sam: every pixel has a zero-norm spectrum");
    return total / used * 180.0 / std::numbers::pi;
}

double ergas(const Tensor& x, const Tensor& ref, double ratio) {
    require_same_cube(x, ref, "ergas");
    check_contract(x.rank() == 3, "ergas expects cubes, got " + shape_str(x.shape));
    const int c = x.shape[0];
    const size_t plane = static_cast<size_t>(x.shape[1]) * x.shape[2];
    double acc = 0.0;
    for (int b = 0; b < c; ++b) {
        double se = 0.0, mean_ref = 0.0;
        for (size_t p = 0; p < plane; ++p) {
            const double d =
                x.data[static_cast<size_t>(b) * plane + p] - ref.data[static_cast<size_t>(b) * plane + p];
            se += d * d;
            mean_ref += ref.data[static_cast<size_t>(b) * plane + p];
        }
        mean_ref /= static_cast<double>(plane);
        check_contract(mean_ref != 0.0,
                       "ergas: reference band " + std::to_string(b) + " has zero mean");
        const double rmse = std::sqrt(se / static_cast<double>(plane));
        acc += (rmse / mean_ref) * (rmse / mean_ref);
    }
    return 100.0 * ratio * std::sqrt(acc / c);
}

namespace {

constexpr int kUiqiBlock = 32;

// Block statistics use population (divide by N) variance.
double uiqi_block(const Tensor& x, const Tensor& y, int i0, int j0, int block) {
    const int w = x.shape[1];
    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
    for (int i = 0; i < block; ++i) {
        for (int j = 0; j < block; ++j) {
            const double xv = x.data[static_cast<size_t>(i0 + i) * w + (j0 + j)];
            const double yv = y.data[static_cast<size_t>(i0 + i) * w + (j0 + j)];
            mx += xv;
            my += yv;
            mxx += xv * xv;
            myy += yv * yv;
            mxy += xv * yv;
        }
    }
    const double n = static_cast<double>(block) * block;
    mx /= n;
    my /= n;
    const double vx = mxx / n - mx * mx;
    const double vy = myy / n - my * my;
    const double cxy = mxy / n - mx * my;
    const double denom_var = vx + vy;
    const double denom_lum = mx * mx + my * my;
    // Degenerate blocks follow the reference implementation's case split. The
    // one-pass moments carry rounding noise of order 1e-16 x magnitude^2, so a
    // flat block can report a tiny spurious variance; anything under the noise
    // floor falls back to the luminance term instead of a noise/noise ratio.
    const double noise_floor = 1e-11 * (mxx / n + myy / n + denom_lum);
    if (denom_var > noise_floor && denom_lum != 0.0)
        return 4.0 * cxy * mx * my / (denom_var * denom_lum);
    if (denom_lum != 0.0) return 2.0 * mx * my / denom_lum;
    return 1.0;
}

}  // namespace

double uiqi(const Tensor& x, const Tensor& y) {
    require_same_cube(x, y, "uiqi");
    check_contract(x.rank() == 2, "uiqi expects rank 2, got " + shape_str(x.shape));
    const int h = x.shape[0];
    const int w = x.shape[1];
    // The 32x32 block shrinks to the plane when the plane is smaller, so the
    // index stays defined on desk-scale toys.
    const int block = std::min(kUiqiBlock, std::min(h, w));
    double total = 0.0;
    int count = 0;
    for (int i = 0; i + block <= h; i += block) {
        for (int j = 0; j + block <= w; j += block) {
            total += uiqi_block(x, y, i, j, block);
            ++count;
        }
    }
    return total / count;
}

Tensor gaussian_blur5(const Tensor& plane) {
    check_contract(plane.rank() == 2, "blur expects rank 2, got " + shape_str(plane.shape));
    static const std::array<double, 5> kTap = [] {
        std::array<double, 5> t{};
        double sum = 0.0;
        for (int i = -2; i <= 2; ++i) {
            t[static_cast<size_t>(i + 2)] = std::exp(-(i * i) / 2.0);
            sum += t[static_cast<size_t>(i + 2)];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    const int h = plane.shape[0];
    const int w = plane.shape[1];
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    Tensor rows({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int k = -2; k <= 2; ++k)
                s += kTap[static_cast<size_t>(k + 2)] * plane(i, clampi(j + k, w));
            rows(i, j) = s;
        }
    Tensor out({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int k = -2; k <= 2; ++k)
                s += kTap[static_cast<size_t>(k + 2)] * rows(clampi(i + k, h), j);
            out(i, j) = s;
        }
    return out;
}

Tensor nearest_band_cube(const Tensor& mosaic, const SfaPattern& pattern) {
    check_contract(mosaic.rank() == 2, "mosaic must be rank 2, got " + shape_str(mosaic.shape));
    check_contract(mosaic.shape[0] % 4 == 0 && mosaic.shape[1] % 4 == 0,
                   "mosaic extents must be divisible by 4, got " + shape_str(mosaic.shape));
    const int h = mosaic.shape[0];
    const int w = mosaic.shape[1];
    auto nearest_site_1d = [](int offset, int n, int i) {
        const int last = offset + 4 * ((n - 1 - offset) / 4);
        const double k = (i - offset) / 4.0;
        const int r = offset + 4 * static_cast<int>(std::llround(k));
        return std::clamp(r, offset, last);
    };
    Tensor out({pattern.bands, h, w});
    for (int b = 0; b < pattern.bands; ++b) {
        const auto sites = pattern.sites_of(b);
        double* plane = out.data.data() + static_cast<size_t>(b) * h * w;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                int best_i = -1, best_j = -1;
                int best_d = std::numeric_limits<int>::max();
                for (const auto& [r0, c0] : sites) {
                    const int si = nearest_site_1d(r0, h, i);
                    const int sj = nearest_site_1d(c0, w, j);
                    const int d = (i - si) * (i - si) + (j - sj) * (j - sj);
                    if (d < best_d) {
                        best_d = d;
                        best_i = si;
                        best_j = sj;
                    }
                }
                plane[static_cast<size_t>(i) * w + j] =
                    mosaic.data[static_cast<size_t>(best_i) * w + best_j];
            }
        }
    }
    return out;
}

NoReferenceScores qnr_suite(const Tensor& fused, const Tensor& mosaic, const Tensor& pan,
                            const SfaPattern& pattern, bool preblur) {
    check_contract(fused.rank() == 3, "fused must be a cube, got " + shape_str(fused.shape));
    check_contract(fused.shape[0] == pattern.bands, "fused band count mismatch");
    check_contract(fused.shape[1] == pan.shape[0] && fused.shape[2] == pan.shape[1],
                   "fused extents " + shape_str(fused.shape) + " must match pan " +
                       shape_str(pan.shape));
    const Tensor m = preblur ? gaussian_blur5(mosaic) : mosaic;
    const Tensor p = preblur ? gaussian_blur5(pan) : pan;
    const int c = pattern.bands;

    const Tensor lr_cube = nearest_band_cube(m, pattern);
    const Tensor fused_lr = avg_pool2(fused);
    const Tensor pan_lr = avg_pool2(p);

    auto band_of = [](const Tensor& cube, int b) {
        const size_t plane = static_cast<size_t>(cube.shape[1]) * cube.shape[2];
        return Tensor::from_data({cube.shape[1], cube.shape[2]},
                                 {cube.data.begin() + b * plane,
                                  cube.data.begin() + (b + 1) * plane});
    };

    double d_lambda = 0.0;
    if (c > 1) {
        for (int b = 0; b < c; ++b) {
            for (int r = 0; r < c; ++r) {
                if (b == r) continue;
                const double q_fused = uiqi(band_of(fused_lr, b), band_of(fused_lr, r));
                const double q_lr = uiqi(band_of(lr_cube, b), band_of(lr_cube, r));
                d_lambda += std::abs(q_fused - q_lr);
            }
        }
        d_lambda /= static_cast<double>(c) * (c - 1);
    }

    double d_s = 0.0;
    for (int b = 0; b < c; ++b) {
        const double q_hi = uiqi(band_of(fused, b), p);
        const double q_lo = uiqi(band_of(lr_cube, b), pan_lr);
        d_s += std::abs(q_hi - q_lo);
    }
    d_s /= c;

    return {(1.0 - d_lambda) * (1.0 - d_s), d_lambda, d_s};
}

FullReferenceScores full_reference(const Tensor& fused, const Tensor& ref) {
    return {psnr(fused, ref), ssim(fused, ref), sam(fused, ref), ergas(fused, ref)};
}

}  // namespace flowfuse
