#pragma once

#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/degradation.hpp"
#include "flowfuse/params.hpp"
#include "flowfuse/rng.hpp"
#include "flowfuse/transforms.hpp"

namespace flowfuse {

// Tape leaves for every entry of a store, in store order.
struct BoundParams {
    std::vector<std::pair<std::string, Var>> vars;

    Var at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamStore& params, bool requires_grad);

// Adds every parameter gradient present in the map to the accumulator.
void accumulate_param_grads(const BoundParams& bound, const GradMap& grads,
                            GradAccumulator& acc);

// Residual refinement net: 4 conv layers (3x3, 32 channels, ReLU between)
// mapping the interpolated mosaic cube plus the PAN band to a correction that
// is added back onto the interpolated cube. The paired learnable spectral
// response lives in the same store under kSrfLogitsName.
inline constexpr const char* kSrfLogitsName = "srf.logits";

ParamStore init_prior_params(int bands, Rng& rng);

// m_cube is [c,H,W]; pan is [1,H,W]. Output [c,H,W].
Var prior_forward(Tape& tape, const BoundParams& bound, Var m_cube, Var pan);

// Convenience non-training forward from plain tensors.
Tensor prior_apply(const ParamStore& params, const Tensor& m_cube, const Tensor& pan_plane);

// Observation-consistency loss: squared residuals of both degradations,
// ||P - A_P(Y)||^2 + ||m - A_m(Y)||^2.
Var loss_oc(Tape& tape, Var y, const Observation& obs, Var srf_weights,
            const SfaPattern& pattern);

// Equivariance loss: transform Y, degrade it with the current operators,
// re-interpolate the mosaic, and require the net to reproduce the transformed
// cube: ||T(Y) - G(A_P(T(Y)), interp(A_m(T(Y))))||^2.
Var loss_ei(Tape& tape, Var y, const BoundParams& bound, SpatialTransform t,
            const SfaPattern& pattern);

struct PretrainEpochRow {
    int epoch;
    double loss_oc, loss_ei, loss_pre;
};

struct PretrainResult {
    ParamStore params;
    Tensor y;  // pseudo high-resolution cube G(P, M)
    std::vector<PretrainEpochRow> log;
};

struct PretrainConfig {
    int epochs = 60;
    double lr_net = 1e-4;
    double lr_srf = 1e-5;
};

// Full-scene gradient descent on loss_oc + loss_ei; one transform draw per
// epoch. Throws TrainingDivergence when the loss leaves the finite range.
PretrainResult pretrain(const Observation& obs, const SfaPattern& pattern,
                        const PretrainConfig& config, uint64_t seed);

}  // namespace flowfuse
