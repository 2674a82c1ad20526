#include "flowfuse/sampler.hpp"

#include <cmath>

namespace flowfuse {

void GuidanceConfig::validate() const {
    check_contract(steps >= 1, "sampling needs at least one step");
    check_contract(gamma_norm >= 0.0 && gamma_norm <= 1.0,
                   "normalized guidance intensity must lie in [0,1], got " +
                       std::to_string(gamma_norm));
}

namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kParallelCos = 1e-10;

}  // namespace

Tensor orthogonal_component(const Tensor& g1, const Tensor& g2, GuidanceDiagnostics* diag) {
    check_contract(g1.same_shape(g2), "orthogonal_component shape mismatch " +
                                          shape_str(g1.shape) + " vs " + shape_str(g2.shape));
    const double n1 = l2_norm_sq_value(g1);
    if (std::sqrt(n1) < kZeroNorm) {
        if (diag) ++diag->zero_projections;
        return g2;
    }
    const double coef = dot(g1, g2) / n1;
    Tensor out = g2;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= coef * g1.data[i];
    return out;
}

Tensor l1_normalize(const Tensor& g) {
    const double n = l1_norm_value(g);
    check_contract(n > 0.0, "cannot normalize a zero vector");
    return scale(g, 1.0 / n);
}

Tensor conflict_free_direction(const Tensor& g_spa, const Tensor& g_spe,
                               GuidanceDiagnostics* diag) {
    check_contract(g_spa.same_shape(g_spe), "conflict_free_direction shape mismatch " +
                                                shape_str(g_spa.shape) + " vs " +
                                                shape_str(g_spe.shape));
    g_spa.require_finite("g_spa");
    g_spe.require_finite("g_spe");
    const double na = std::sqrt(l2_norm_sq_value(g_spa));
    const double nb = std::sqrt(l2_norm_sq_value(g_spe));
    bool degenerate = na < kZeroNorm || nb < kZeroNorm;
    if (!degenerate) {
        const double cosv = dot(g_spa, g_spe) / (na * nb);
        degenerate = 1.0 - std::abs(cosv) <= kParallelCos;
    }
    if (degenerate) {
        if (diag) ++diag->degenerate_fallbacks;
        Tensor out = g_spa;
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = 0.5 * (g_spa.data[i] + g_spe.data[i]);
        return out;
    }
    const Tensor o1 = orthogonal_component(g_spa, g_spe, diag);
    const Tensor o2 = orthogonal_component(g_spe, g_spa, diag);
    const Tensor g_v = l1_normalize(add(l1_normalize(o1), l1_normalize(o2)));
    const double magnitude = dot(g_spa, g_v) + dot(g_spe, g_v);
    return scale(g_v, magnitude);
}

GuidancePair guidance_gradients(const Tensor& xt, const Tensor& pan_expanded,
                                const Observation& obs, const Tensor& srf_weights,
                                const SfaPattern& pattern) {
    check_contract(xt.same_shape(pan_expanded), "state and expanded PAN shapes differ: " +
                                                    shape_str(xt.shape) + " vs " +
                                                    shape_str(pan_expanded.shape));
    Tape tape;
    Var x = tape.leaf(xt, true);
    Var h = add(x, tape.constant(pan_expanded));
    Var l_spa = l2_norm_sq(sub(tape.constant(obs.mosaic), apply_mosaic(h, pattern)));
    Var l_spe = l2_norm_sq(
        sub(tape.constant(obs.pan), spectral_project(h, tape.constant(srf_weights))));
    const GradMap spa = tape.backward(l_spa);
    const GradMap spe = tape.backward(l_spe);
    return {spa.grad(x), spe.grad(x)};
}

Tensor euler_integrate(const Tensor& x0, int steps,
                       const std::function<Tensor(const Tensor&, double)>& field) {
    check_contract(steps >= 1, "euler_integrate needs at least one step");
    Tensor x = x0;
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const Tensor v = field(x, k * dt);
        check_contract(v.same_shape(x), "field output shape " + shape_str(v.shape) +
                                            " differs from state " + shape_str(x.shape));
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += dt * v.data[i];
    }
    return x;
}

Tensor sample(const ParamStore& params, const Stage2Data& data, const GuidanceConfig& config,
              GuidanceDiagnostics* diag) {
    config.validate();
    // Inputs are validated up front so that any non-finite value surfacing
    // inside the loop can only mean the integration itself diverged.
    for (const auto& [name, value] : params.entries()) value.require_finite(name);
    data.conditioning.require_finite("conditioning");
    data.pan_expanded.require_finite("expanded PAN");
    const int c = data.pattern.bands;
    const int h = data.obs.pan.shape[0];
    const int w = data.obs.pan.shape[1];
    const Tensor srf_weights = [&] {
        SpectralResponse r;
        r.logits = params.at(kSrfLogitsName);
        return r.weights();
    }();
    const double gamma = config.gamma_raw();
    const double dt = 1.0 / config.steps;

    Rng rng(Rng::mix(config.seed, 0x5a3f));
    Tensor x = Tensor::randn({c, h, w}, rng);
    for (int k = 0; k < config.steps; ++k) {
        const double t = k * dt;
        try {
            const Tensor v = vf_apply(params, x, data.conditioning, t);
            Tensor correction;
            if (gamma > 0.0) {
                const GuidancePair g = guidance_gradients(x, data.pan_expanded, data.obs,
                                                          srf_weights, data.pattern);
                correction = conflict_free_direction(g.g_spa, g.g_spe, diag);
            }
            for (size_t i = 0; i < x.data.size(); ++i) {
                x.data[i] += dt * v.data[i];
                if (gamma > 0.0) x.data[i] -= gamma * correction.data[i];
            }
        } catch (const ContractViolation& e) {
            // With finite inputs, a non-finite intermediate is an exploding
            // integration, so it is reported as divergence with the step
            // named. Genuine contract errors pass through untouched.
            if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
            throw TrainingDivergence("sampling state became non-finite at step " +
                                     std::to_string(k + 1) + " of " +
                                     std::to_string(config.steps) + ": " + e.what());
        }
        if (!x.all_finite())
            throw TrainingDivergence("sampling state became non-finite at step " +
                                     std::to_string(k + 1) + " of " +
                                     std::to_string(config.steps));
    }
    return clamp01(add(x, data.pan_expanded));
}

}  // namespace flowfuse
