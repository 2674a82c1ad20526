#include "flowfuse/cfm.hpp"

#include <cmath>
#include <numbers>

namespace flowfuse {

PathPoint path_point(const Tensor& x0, const Tensor& x1, double t) {
    check_contract(x0.same_shape(x1), "path endpoints differ: " + shape_str(x0.shape) +
                                          " vs " + shape_str(x1.shape));
    check_contract(t >= 0.0 && t <= 1.0, "path time " + std::to_string(t) + " outside [0,1]");
    PathPoint p{x0, sub(x1, x0)};
    for (size_t i = 0; i < p.xt.data.size(); ++i)
        p.xt.data[i] = (1.0 - t) * x0.data[i] + t * x1.data[i];
    return p;
}

Tensor build_conditioning(const Observation& obs, const SfaPattern& pattern) {
    obs.validate();
    const Tensor m_cube = interpolate_mosaic(obs.mosaic, pattern);
    const int h = obs.pan.shape[0];
    const int w = obs.pan.shape[1];
    Tensor out({pattern.bands + 2, h, w});
    std::copy(m_cube.data.begin(), m_cube.data.end(), out.data.begin());
    const size_t plane = static_cast<size_t>(h) * w;
    std::copy(obs.pan.data.begin(), obs.pan.data.end(),
              out.data.begin() + static_cast<size_t>(pattern.bands) * plane);
    const Tensor highpass = highpass_pan(obs.pan);
    std::copy(highpass.data.begin(), highpass.data.end(),
              out.data.begin() + static_cast<size_t>(pattern.bands + 1) * plane);
    return out;
}

Tensor time_embedding(double t, int height, int width) {
    check_contract(t >= 0.0 && t <= 1.0, "embedding time outside [0,1]");
    Tensor out({16, height, width});
    const size_t plane = static_cast<size_t>(height) * width;
    for (int k = 0; k < 8; ++k) {
        const double phase = 2.0 * std::numbers::pi * std::ldexp(1.0, k) * t;
        const double s = std::sin(phase);
        const double c = std::cos(phase);
        std::fill_n(out.data.begin() + static_cast<size_t>(2 * k) * plane, plane, s);
        std::fill_n(out.data.begin() + static_cast<size_t>(2 * k + 1) * plane, plane, c);
    }
    return out;
}

namespace {

Tensor conv_init(int out_ch, int in_ch, Rng& rng) {
    const double stddev = std::sqrt(2.0 / (in_ch * 9.0));
    return Tensor::randn({out_ch, in_ch, 3, 3}, rng, stddev);
}

}  // namespace

ParamStore init_vf_params(int bands, Rng& rng) {
    check_contract(bands >= 1, "velocity net needs at least one band");
    const int in_ch = 2 * bands + 18;
    ParamStore p;
    p.add("vf.enc1.w", conv_init(32, in_ch, rng));
    p.add("vf.enc1.b", Tensor({32}, 0.0));
    p.add("vf.enc2.w", conv_init(64, 32, rng));
    p.add("vf.enc2.b", Tensor({64}, 0.0));
    p.add("vf.mid.w", conv_init(64, 64, rng));
    p.add("vf.mid.b", Tensor({64}, 0.0));
    p.add("vf.dec2.w", conv_init(64, 128, rng));
    p.add("vf.dec2.b", Tensor({64}, 0.0));
    p.add("vf.dec1.w", conv_init(32, 96, rng));
    p.add("vf.dec1.b", Tensor({32}, 0.0));
    // Zero head: the initial field is identically zero.
    p.add("vf.head.w", Tensor({bands, 32, 3, 3}, 0.0));
    p.add("vf.head.b", Tensor({bands}, 0.0));
    return p;
}

Var vf_forward(Tape& tape, const BoundParams& bound, Var xt, const Tensor& conditioning,
               double t) {
    const Tensor& xv = xt.value();
    check_contract(xv.rank() == 3, "velocity input must be [c,H,W], got " + shape_str(xv.shape));
    const int h = xv.shape[1];
    const int w = xv.shape[2];
    check_contract(h % 4 == 0 && w % 4 == 0,
                   "velocity net needs extents divisible by 4, got " + shape_str(xv.shape));
    check_contract(conditioning.rank() == 3 && conditioning.shape[1] == h &&
                       conditioning.shape[2] == w,
                   "conditioning extents " + shape_str(conditioning.shape) +
                       " do not match state " + shape_str(xv.shape));
    Var input = concat_bands(
        {xt, tape.constant(conditioning), tape.constant(time_embedding(t, h, w))});
    Var e1 = relu(conv2d(input, bound.at("vf.enc1.w"), bound.at("vf.enc1.b")));
    Var e2 = relu(conv2d(avg_pool2(e1), bound.at("vf.enc2.w"), bound.at("vf.enc2.b")));
    Var mid = relu(conv2d(avg_pool2(e2), bound.at("vf.mid.w"), bound.at("vf.mid.b")));
    Var d2 = relu(conv2d(concat_bands({upsample_nearest2(mid), e2}), bound.at("vf.dec2.w"),
                         bound.at("vf.dec2.b")));
    Var d1 = relu(conv2d(concat_bands({upsample_nearest2(d2), e1}), bound.at("vf.dec1.w"),
                         bound.at("vf.dec1.b")));
    return conv2d(d1, bound.at("vf.head.w"), bound.at("vf.head.b"));
}

Tensor vf_apply(const ParamStore& params, const Tensor& xt, const Tensor& conditioning,
                double t) {
    Tape tape;
    BoundParams bound = bind_params(tape, params, false);
    return vf_forward(tape, bound, tape.constant(xt), conditioning, t).value();
}

VelocitySample velocity_loss(Tape& tape, const BoundParams& bound, const PathPoint& path,
                             const Tensor& conditioning, double t) {
    Var v_hat = vf_forward(tape, bound, tape.constant(path.xt), conditioning, t);
    Var loss = l2_norm_sq(sub(v_hat, tape.constant(path.vt)));
    return {v_hat, loss};
}

Var degradation_loss(Var v_hat, const PathPoint& path, double t, Var srf_logits,
                     const Tensor& pan_expanded, const Tensor& pan, const Tensor& mosaic,
                     const SfaPattern& pattern, double lambda) {
    Tape& tape = *v_hat.tape;
    Var x1_hat = add(tape.constant(path.xt), scale(v_hat, 1.0 - t));
    Var h = add(x1_hat, tape.constant(pan_expanded));
    Var weights = softmax(srf_logits);
    Var p_res = l2_norm_sq(sub(tape.constant(pan), spectral_project(h, weights)));
    Var m_res = l2_norm_sq(sub(tape.constant(mosaic), apply_mosaic(h, pattern)));
    return scale(add(p_res, m_res), lambda);
}

Stage2Data make_stage2_data(const Observation& obs, const SfaPattern& pattern) {
    obs.validate();
    pattern.validate();
    return {obs, pattern, build_conditioning(obs, pattern),
            expand_pan(obs.pan, pattern.bands)};
}

namespace {

struct PatchSet {
    Tensor x1;            // residual target [c,ph,pw]
    Tensor conditioning;  // [c+2,ph,pw]
    Tensor pan_expanded;  // [c,ph,pw]
    Tensor pan;           // [ph,pw]
    Tensor mosaic;        // [ph/2,pw/2]
};

// Crops are aligned to the 8-pixel pattern period so the degradation
// operators see the same band layout as on the full scene.
PatchSet crop_patches(const Stage2Data& data, const Tensor& x1_full, int top, int left,
                      int size) {
    PatchSet p;
    p.x1 = crop2(x1_full, top, left, size, size);
    p.conditioning = crop2(data.conditioning, top, left, size, size);
    p.pan_expanded = crop2(data.pan_expanded, top, left, size, size);
    p.pan = crop2(data.obs.pan, top, left, size, size);
    p.mosaic = crop2(data.obs.mosaic, top / 2, left / 2, size / 2, size / 2);
    return p;
}

}  // namespace

EpochStats train_epoch(ParamStore& params, Adam& adam, const Stage2Data& data,
                       const Tensor& h_tilde, const Stage2Config& config, int epoch,
                       Rng& rng) {
    check_contract(epoch >= 1, "epochs are 1-based");
    check_contract(config.batch_size >= 1 && config.batches_per_epoch >= 1,
                   "batch configuration must be positive");
    check_contract(config.patch_pan >= 8 && config.patch_pan % 8 == 0,
                   "patch size must be a positive multiple of 8");
    const int c = data.pattern.bands;
    const int scene_h = data.obs.pan.shape[0];
    const int scene_w = data.obs.pan.shape[1];
    check_contract(h_tilde.rank() == 3 && h_tilde.shape[0] == c &&
                       h_tilde.shape[1] == scene_h && h_tilde.shape[2] == scene_w,
                   "pseudo-target shape " + shape_str(h_tilde.shape) + " does not match scene");
    const int size = config.patch_pan;
    check_contract(size <= scene_h && size <= scene_w, "patch larger than scene");

    const Tensor x1_full = sub(h_tilde, data.pan_expanded);
    const int warmup_epochs =
        static_cast<int>(std::floor(config.warmup_frac * config.epochs));
    const double lambda = epoch <= warmup_epochs ? 0.0 : config.lambda_deg;
    const int offsets_h = (scene_h - size) / 8 + 1;
    const int offsets_w = (scene_w - size) / 8 + 1;

    const auto lr_of = [&](const std::string& name) {
        return name == kSrfLogitsName ? config.lr_srf : config.lr_net;
    };

    double sum_dir = 0.0, sum_trans = 0.0, sum_deg = 0.0, sum_total = 0.0;
    const int total_samples = config.batch_size * config.batches_per_epoch;

    for (int batch = 0; batch < config.batches_per_epoch; ++batch) {
        GradAccumulator acc;
        double batch_total = 0.0;
        for (int s = 0; s < config.batch_size; ++s) {
            const int top = 8 * static_cast<int>(rng.uniform_int(offsets_h));
            const int left = 8 * static_cast<int>(rng.uniform_int(offsets_w));
            const double t = rng.uniform();
            const SpatialTransform trans =
                kAllTransforms[rng.uniform_int(kAllTransforms.size())];
            PatchSet patch = crop_patches(data, x1_full, top, left, size);
            Tensor x0 = Tensor::randn({c, size, size}, rng);
            const PathPoint direct = path_point(x0, patch.x1, t);

            Tape tape;
            BoundParams bound = bind_params(tape, params, true);

            const VelocitySample direct_sample =
                velocity_loss(tape, bound, direct, patch.conditioning, t);
            Var l_dir = direct_sample.loss;

            const Tensor x0_t = apply_transform(x0, trans);
            const Tensor x1_t = apply_transform(patch.x1, trans);
            const Tensor cond_t = apply_transform(patch.conditioning, trans);
            const PathPoint moved = path_point(x0_t, x1_t, t);
            Var l_trans = velocity_loss(tape, bound, moved, cond_t, t).loss;

            Var total = add(l_dir, l_trans);
            double deg_value = 0.0;
            if (lambda > 0.0) {
                Var l_deg = degradation_loss(direct_sample.v_hat, direct, t,
                                             bound.at(kSrfLogitsName), patch.pan_expanded,
                                             patch.pan, patch.mosaic, data.pattern, lambda);
                deg_value = l_deg.value().data[0];
                total = add(total, l_deg);
            }

            const double total_value = total.value().data[0];
            if (!std::isfinite(total_value))
                throw TrainingDivergence("stage-2 loss is non-finite at epoch " +
                                         std::to_string(epoch));
            GradMap grads = tape.backward(total);
            accumulate_param_grads(bound, grads, acc);

            sum_dir += l_dir.value().data[0];
            sum_trans += l_trans.value().data[0];
            sum_deg += deg_value;
            batch_total += total_value;
        }
        acc.scale(1.0 / config.batch_size);
        adam.step(params, acc, lr_of);
        sum_total += batch_total;
    }

    return {epoch, sum_dir / total_samples, sum_trans / total_samples,
            sum_deg / total_samples, sum_total / total_samples};
}

}  // namespace flowfuse
