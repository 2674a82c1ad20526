#pragma once

#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/degradation.hpp"
#include "flowfuse/params.hpp"
#include "flowfuse/prior.hpp"
#include "flowfuse/rng.hpp"
#include "flowfuse/transforms.hpp"

namespace flowfuse {

// Linear path between noise and target: Xt = (1-t) X0 + t X1, constant
// velocity Vt = X1 - X0.
struct PathPoint {
    Tensor xt, vt;
};
PathPoint path_point(const Tensor& x0, const Tensor& x1, double t);

// Conditioning stack: interpolated mosaic cube, PAN, Laplacian-filtered PAN.
// Shape [c+2, H, W].
Tensor build_conditioning(const Observation& obs, const SfaPattern& pattern);

// 16 channels of sin/cos pairs at dyadic frequencies, constant per channel.
Tensor time_embedding(double t, int height, int width);

// Velocity U-Net: two pooling levels (32/64 channels), skip concatenation,
// nearest upsampling, zero-initialized head. Input channels: c for the state,
// c+2 for the conditioning, 16 for the time embedding.
ParamStore init_vf_params(int bands, Rng& rng);

// xt is [c,H,W] with H, W divisible by 4.
Var vf_forward(Tape& tape, const BoundParams& bound, Var xt, const Tensor& conditioning,
               double t);

// Plain forward for inference.
Tensor vf_apply(const ParamStore& params, const Tensor& xt, const Tensor& conditioning,
                double t);

// One velocity prediction and its squared error against the path target.
// Serves both the direct term and the transformed-consistency term (pass a
// transformed path and conditioning for the latter).
struct VelocitySample {
    Var v_hat;
    Var loss;
};
VelocitySample velocity_loss(Tape& tape, const BoundParams& bound, const PathPoint& path,
                             const Tensor& conditioning, double t);

// Consistency of the one-step path extrapolation lifted back to the image
// domain: lambda * (||P - A_P(H)||^2 + ||m - A_m(H)||^2) with
// H = Xt + (1-t) v_hat + P_D and A_P built from the live logits.
Var degradation_loss(Var v_hat, const PathPoint& path, double t, Var srf_logits,
                     const Tensor& pan_expanded, const Tensor& pan, const Tensor& mosaic,
                     const SfaPattern& pattern, double lambda);

struct Stage2Config {
    int epochs = 30;
    double lr_net = 1e-4;
    double lr_srf = 1e-5;
    double lambda_deg = 0.1;
    double warmup_frac = 0.2;  // epochs before the consistency term turns on
    int batch_size = 16;
    int batches_per_epoch = 4;
    int patch_pan = 64;  // mosaic patches are half this
};

// Scene-level immutable training inputs.
struct Stage2Data {
    Observation obs;
    SfaPattern pattern;
    Tensor conditioning;  // [c+2, H, W]
    Tensor pan_expanded;  // [c, H, W]
};

Stage2Data make_stage2_data(const Observation& obs, const SfaPattern& pattern);

struct EpochStats {
    int epoch;
    double loss_dir, loss_trans, loss_deg, loss_total;
};

// One pass of batches_per_epoch x batch_size patch samples; h_tilde is the
// current pseudo-target at PAN extent. lambda is 0 before the warmup epoch.
// Throws TrainingDivergence on a non-finite loss.
EpochStats train_epoch(ParamStore& params, Adam& adam, const Stage2Data& data,
                       const Tensor& h_tilde, const Stage2Config& config, int epoch,
                       Rng& rng);

}  // namespace flowfuse
