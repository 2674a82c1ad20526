#include "flowfuse/degradation.hpp"

#include <algorithm>
#include <cmath>

namespace flowfuse {

SfaPattern SfaPattern::default_pattern(int bands) {
    check_contract(bands >= 1 && bands <= 16, "pattern supports 1..16 bands, got " +
                                                  std::to_string(bands));
    SfaPattern p;
    p.bands = bands;
    for (int i = 0; i < 16; ++i) p.base[static_cast<size_t>(i)] = i % bands;
    p.validate();
    return p;
}

std::vector<std::pair<int, int>> SfaPattern::sites_of(int band) const {
    std::vector<std::pair<int, int>> sites;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (base[static_cast<size_t>(r * 4 + c)] == band) sites.emplace_back(r, c);
    return sites;
}

void SfaPattern::validate() const {
    check_contract(bands >= 1 && bands <= 16,
                   "pattern band count out of range: " + std::to_string(bands));
    std::vector<int> counts(static_cast<size_t>(bands), 0);
    for (int v : base) {
        check_contract(v >= 0 && v < bands,
                       "pattern cell " + std::to_string(v) + " outside [0," +
                           std::to_string(bands) + ")");
        ++counts[static_cast<size_t>(v)];
    }
    for (int b = 0; b < bands; ++b) {
        check_contract(counts[static_cast<size_t>(b)] >= 1,
                       "band " + std::to_string(b) + " missing from pattern base");
        if (bands == 16)
            check_contract(counts[static_cast<size_t>(b)] == 1,
                           "16-band pattern must use each band exactly once");
    }
}

SpectralResponse SpectralResponse::uniform(int bands) {
    check_contract(bands >= 1, "spectral response needs at least one band");
    SpectralResponse r;
    r.logits = Tensor({bands}, 0.0);
    return r;
}

Tensor SpectralResponse::weights() const {
    check_contract(logits.rank() == 1, "spectral logits must be rank 1");
    Tensor w = logits;
    const double m = w.max();
    double z = 0.0;
    for (double& v : w.data) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : w.data) v /= z;
    return w;
}

Tensor reference_srf(int bands) {
    static constexpr std::array<double, 16> kResponse = {1, 1, 2, 4,  8,  9,  10, 12,
                                                         16, 12, 10, 9, 7,  3,  2,  1};
    check_contract(bands >= 1 && bands <= 16,
                   "reference response defined for 1..16 bands, got " + std::to_string(bands));
    Tensor w({bands});
    double sum = 0.0;
    for (int b = 0; b < bands; ++b) sum += kResponse[static_cast<size_t>(b)];
    for (int b = 0; b < bands; ++b)
        w.data[static_cast<size_t>(b)] = kResponse[static_cast<size_t>(b)] / sum;
    return w;
}

void Observation::validate() const {
    check_contract(mosaic.rank() == 2, "mosaic must be rank 2, got " + shape_str(mosaic.shape));
    check_contract(pan.rank() == 2, "pan must be rank 2, got " + shape_str(pan.shape));
    check_contract(pan.shape[0] == 2 * mosaic.shape[0] && pan.shape[1] == 2 * mosaic.shape[1],
                   "pan extents " + shape_str(pan.shape) + " must be twice mosaic extents " +
                       shape_str(mosaic.shape));
    check_contract(pan.shape[0] % 8 == 0 && pan.shape[1] % 8 == 0,
                   "pan extents must be divisible by 8, got " + shape_str(pan.shape));
}

namespace {

void check_mosaic_input(const Tensor& cube, const SfaPattern& pattern) {
    check_contract(cube.rank() == 3, "mosaic input must be [C,H,W], got " +
                                         shape_str(cube.shape));
    check_contract(cube.shape[0] == pattern.bands,
                   "cube has " + std::to_string(cube.shape[0]) + " bands, pattern expects " +
                       std::to_string(pattern.bands));
    check_contract(cube.shape[1] % 8 == 0 && cube.shape[2] % 8 == 0,
                   "mosaic input extents must be divisible by 8, got " + shape_str(cube.shape));
}

}  // namespace

Tensor mosaic_select(const Tensor& cube, const SfaPattern& pattern) {
    check_mosaic_input(cube, pattern);
    const int h = cube.shape[1];
    const int w = cube.shape[2];
    const size_t plane = static_cast<size_t>(h) * w;
    Tensor out({h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int b = pattern.full_at(i, j);
            out.data[static_cast<size_t>(i) * w + j] =
                cube.data[static_cast<size_t>(b) * plane + static_cast<size_t>(i) * w + j];
        }
    }
    return out;
}

Var mosaic_select(Var cube, const SfaPattern& pattern) {
    Tensor out = mosaic_select(cube.value(), pattern);
    const int h = cube.value().shape[1];
    const int w = cube.value().shape[2];
    return cube.tape->make_node(
        "mosaic_select", std::move(out), {cube},
        [pattern, h, w](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                        const std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const size_t plane = static_cast<size_t>(h) * w;
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    const int b = pattern.full_at(i, j);
                    pg[0]->data[static_cast<size_t>(b) * plane + static_cast<size_t>(i) * w +
                                j] += og.data[static_cast<size_t>(i) * w + j];
                }
            }
        });
}

Tensor apply_mosaic(const Tensor& cube, const SfaPattern& pattern) {
    return avg_pool2(mosaic_select(cube, pattern));
}

Var apply_mosaic(Var cube, const SfaPattern& pattern) {
    return avg_pool2(mosaic_select(cube, pattern));
}

Tensor apply_spectral(const Tensor& cube, const Tensor& weights) {
    check_contract(cube.rank() == 3, "spectral input must be [C,H,W], got " +
                                         shape_str(cube.shape));
    check_contract(weights.rank() == 1 && weights.shape[0] == cube.shape[0],
                   "weights length " + shape_str(weights.shape) + " does not match " +
                       std::to_string(cube.shape[0]) + " bands");
    const size_t plane = static_cast<size_t>(cube.shape[1]) * cube.shape[2];
    Tensor out({cube.shape[1], cube.shape[2]});
    for (int b = 0; b < cube.shape[0]; ++b) {
        const double w = weights.data[static_cast<size_t>(b)];
        const double* src = cube.data.data() + static_cast<size_t>(b) * plane;
        for (size_t i = 0; i < plane; ++i) out.data[i] += w * src[i];
    }
    return out;
}

namespace {

// One-dimensional interpolation helpers. Both express the output sample as
// (1-w)*in[lo] + w*in[hi] with coordinates already clamped to the grid.
struct Tap {
    int lo, hi;
    double w;
};

// Lattice sites at offset, offset+4, ... within [0, n).
Tap lattice_tap(int offset, int n, int i) {
    const int last = offset + 4 * ((n - 1 - offset) / 4);
    if (i <= offset) return {offset, offset, 0.0};
    if (i >= last) return {last, last, 0.0};
    const int lo = offset + 4 * ((i - offset) / 4);
    return {lo, lo + 4, (i - lo) / 4.0};
}

// Half-pixel-aligned doubling: output I samples input at I/2 - 0.25.
Tap up2_tap(int n_in, int I) {
    const double u = 0.5 * I - 0.25;
    if (u <= 0.0) return {0, 0, 0.0};
    if (u >= static_cast<double>(n_in - 1)) return {n_in - 1, n_in - 1, 0.0};
    const int lo = static_cast<int>(u);
    return {lo, lo + 1, u - lo};
}

void check_half_mosaic(const Tensor& m) {
    check_contract(m.rank() == 2, "mosaic must be rank 2, got " + shape_str(m.shape));
    check_contract(m.shape[0] % 4 == 0 && m.shape[1] % 4 == 0,
                   "mosaic extents must be divisible by 4, got " + shape_str(m.shape));
}

// Dense per-band interpolation at mosaic resolution.
Tensor band_interp_forward(const Tensor& m, const SfaPattern& pattern) {
    check_half_mosaic(m);
    const int h = m.shape[0];
    const int w = m.shape[1];
    Tensor out({pattern.bands, h, w});
    for (int b = 0; b < pattern.bands; ++b) {
        const auto sites = pattern.sites_of(b);
        const double inv_n = 1.0 / static_cast<double>(sites.size());
        double* plane = out.data.data() + static_cast<size_t>(b) * h * w;
        for (const auto& [r0, c0] : sites) {
            for (int i = 0; i < h; ++i) {
                const Tap ti = lattice_tap(r0, h, i);
                const double* row_lo = m.data.data() + static_cast<size_t>(ti.lo) * w;
                const double* row_hi = m.data.data() + static_cast<size_t>(ti.hi) * w;
                double* orow = plane + static_cast<size_t>(i) * w;
                for (int j = 0; j < w; ++j) {
                    const Tap tj = lattice_tap(c0, w, j);
                    // Lerp form keeps constants (and site samples) bit-exact.
                    const double top = row_lo[tj.lo] + tj.w * (row_lo[tj.hi] - row_lo[tj.lo]);
                    const double bot = row_hi[tj.lo] + tj.w * (row_hi[tj.hi] - row_hi[tj.lo]);
                    orow[j] += inv_n * (top + ti.w * (bot - top));
                }
            }
        }
    }
    return out;
}

void band_interp_backward(const Tensor& og, const SfaPattern& pattern, Tensor& gm) {
    const int h = gm.shape[0];
    const int w = gm.shape[1];
    for (int b = 0; b < pattern.bands; ++b) {
        const auto sites = pattern.sites_of(b);
        const double inv_n = 1.0 / static_cast<double>(sites.size());
        const double* plane = og.data.data() + static_cast<size_t>(b) * h * w;
        for (const auto& [r0, c0] : sites) {
            for (int i = 0; i < h; ++i) {
                const Tap ti = lattice_tap(r0, h, i);
                double* grow_lo = gm.data.data() + static_cast<size_t>(ti.lo) * w;
                double* grow_hi = gm.data.data() + static_cast<size_t>(ti.hi) * w;
                const double* orow = plane + static_cast<size_t>(i) * w;
                for (int j = 0; j < w; ++j) {
                    const Tap tj = lattice_tap(c0, w, j);
                    const double g = inv_n * orow[j];
                    grow_lo[tj.lo] += (1.0 - ti.w) * (1.0 - tj.w) * g;
                    grow_lo[tj.hi] += (1.0 - ti.w) * tj.w * g;
                    grow_hi[tj.lo] += ti.w * (1.0 - tj.w) * g;
                    grow_hi[tj.hi] += ti.w * tj.w * g;
                }
            }
        }
    }
}

Tensor up2_forward(const Tensor& x) {
    check_contract(x.rank() == 2 || x.rank() == 3,
                   "bilinear_up2 expects rank 2 or 3, got " + shape_str(x.shape));
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
        for (int I = 0; I < 2 * h; ++I) {
            const Tap ti = up2_tap(h, I);
            const double* row_lo = plane + static_cast<size_t>(ti.lo) * w;
            const double* row_hi = plane + static_cast<size_t>(ti.hi) * w;
            double* orow = oplane + static_cast<size_t>(I) * 2 * w;
            for (int J = 0; J < 2 * w; ++J) {
                const Tap tj = up2_tap(w, J);
                // Lerp form keeps constants bit-exact.
                const double top = row_lo[tj.lo] + tj.w * (row_lo[tj.hi] - row_lo[tj.lo]);
                const double bot = row_hi[tj.lo] + tj.w * (row_hi[tj.hi] - row_hi[tj.lo]);
                orow[J] = top + ti.w * (bot - top);
            }
        }
    }
    return out;
}

void up2_backward(const Tensor& og, Tensor& gx) {
    const int bands = gx.rank() == 3 ? gx.shape[0] : 1;
    const int h = gx.shape[gx.rank() - 2];
    const int w = gx.shape[gx.rank() - 1];
    for (int b = 0; b < bands; ++b) {
        double* gplane = gx.data.data() + static_cast<size_t>(b) * h * w;
        const double* oplane = og.data.data() + static_cast<size_t>(b) * 4 * h * w;
        for (int I = 0; I < 2 * h; ++I) {
            const Tap ti = up2_tap(h, I);
            double* grow_lo = gplane + static_cast<size_t>(ti.lo) * w;
            double* grow_hi = gplane + static_cast<size_t>(ti.hi) * w;
            const double* orow = oplane + static_cast<size_t>(I) * 2 * w;
            for (int J = 0; J < 2 * w; ++J) {
                const Tap tj = up2_tap(w, J);
                const double g = orow[J];
                grow_lo[tj.lo] += (1.0 - ti.w) * (1.0 - tj.w) * g;
                grow_lo[tj.hi] += (1.0 - ti.w) * tj.w * g;
                grow_hi[tj.lo] += ti.w * (1.0 - tj.w) * g;
                grow_hi[tj.hi] += ti.w * tj.w * g;
            }
        }
    }
}

}  // namespace

Tensor bilinear_up2(const Tensor& x) { return up2_forward(x); }

Var bilinear_up2(Var x) {
    Tensor out = up2_forward(x.value());
    return x.tape->make_node(
        "bilinear_up2", std::move(out), {x},
        [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
           const std::vector<Tensor*>& pg) {
            if (pg[0]) up2_backward(og, *pg[0]);
        });
}

Tensor interpolate_mosaic(const Tensor& mosaic, const SfaPattern& pattern) {
    return up2_forward(band_interp_forward(mosaic, pattern));
}

Var interpolate_mosaic(Var mosaic, const SfaPattern& pattern) {
    Tensor half = band_interp_forward(mosaic.value(), pattern);
    Var half_var = mosaic.tape->make_node(
        "sfa_band_interp", std::move(half), {mosaic},
        [pattern](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                  const std::vector<Tensor*>& pg) {
            if (pg[0]) band_interp_backward(og, pattern, *pg[0]);
        });
    return bilinear_up2(half_var);
}

Tensor expand_pan(const Tensor& pan, int bands) {
    check_contract(pan.rank() == 2, "expand_pan input must be rank 2, got " +
                                        shape_str(pan.shape));
    check_contract(bands >= 1, "expand_pan needs at least one band");
    Tensor out({bands, pan.shape[0], pan.shape[1]});
    for (int b = 0; b < bands; ++b)
        std::copy(pan.data.begin(), pan.data.end(),
                  out.data.begin() + static_cast<size_t>(b) * pan.data.size());
    return out;
}

Tensor highpass_pan(const Tensor& pan) {
    check_contract(pan.rank() == 2, "highpass input must be rank 2, got " +
                                        shape_str(pan.shape));
    const int h = pan.shape[0];
    const int w = pan.shape[1];
    check_contract(h >= 3 && w >= 3, "highpass needs extents >= 3, got " + shape_str(pan.shape));
    Tensor out({h, w});
    auto at = [&](int i, int j) -> double {
        if (i < 0 || i >= h || j < 0 || j >= w) return 0.0;
        return pan.data[static_cast<size_t>(i) * w + j];
    };
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out.data[static_cast<size_t>(i) * w + j] = at(i - 1, j) + at(i + 1, j) +
                                                       at(i, j - 1) + at(i, j + 1) -
                                                       4.0 * at(i, j);
    return out;
}

}  // namespace flowfuse
