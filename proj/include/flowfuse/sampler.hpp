#pragma once

#include <functional>

#include "flowfuse/cfm.hpp"
#include "flowfuse/degradation.hpp"
#include "flowfuse/params.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

struct GuidanceConfig {
    int steps = 10;
    double gamma_norm = 0.4;  // normalized intensity; raw scale is 50x this
    uint64_t seed = 0;

    double gamma_raw() const { return gamma_norm * 50.0; }
    void validate() const;
};

struct GuidanceDiagnostics {
    int zero_projections = 0;     // orthogonal_component saw a ~zero g1
    int degenerate_fallbacks = 0;  // conflict-free fell back to the mean
};

// g2 minus its projection onto g1; returns g2 unchanged when g1 is ~zero.
Tensor orthogonal_component(const Tensor& g1, const Tensor& g2,
                            GuidanceDiagnostics* diag = nullptr);

// g / ||g||_1.
Tensor l1_normalize(const Tensor& g);

// Mutual orthogonal projections, normalized and recombined so the result has
// positive inner product with both inputs; near-zero or near-parallel pairs
// fall back to the mean direction.
Tensor conflict_free_direction(const Tensor& g_spa, const Tensor& g_spe,
                               GuidanceDiagnostics* diag = nullptr);

struct GuidancePair {
    Tensor g_spa;  // gradient of ||m - A_m(Xt + P_D)||^2
    Tensor g_spe;  // gradient of ||P - A_P(Xt + P_D)||^2
};

GuidancePair guidance_gradients(const Tensor& xt, const Tensor& pan_expanded,
                                const Observation& obs, const Tensor& srf_weights,
                                const SfaPattern& pattern);

// Plain fixed-step Euler integration of dX/dt = field(X, t) from t=0 to 1.
Tensor euler_integrate(const Tensor& x0, int steps,
                       const std::function<Tensor(const Tensor&, double)>& field);

// Guided generation: Euler steps on the learned field with the conflict-free
// correction subtracted each step, then back to the image domain and clamped
// to [0,1].
Tensor sample(const ParamStore& params, const Stage2Data& data, const GuidanceConfig& config,
              GuidanceDiagnostics* diag = nullptr);

}  // namespace flowfuse
