#include "flowfuse/prior.hpp"

#include <cmath>

namespace flowfuse {

Var BoundParams::at(const std::string& name) const {
    for (const auto& [n, v] : vars)
        if (n == name) return v;
    throw ContractViolation("parameter '" + name + "' not bound");
}

BoundParams bind_params(Tape& tape, const ParamStore& params, bool requires_grad) {
    BoundParams bound;
    bound.vars.reserve(params.size());
    for (const auto& [name, value] : params.entries())
        bound.vars.emplace_back(name, tape.leaf(value, requires_grad));
    return bound;
}

void accumulate_param_grads(const BoundParams& bound, const GradMap& grads,
                            GradAccumulator& acc) {
    for (const auto& [name, var] : bound.vars) {
        const Tensor* g = grads.maybe_grad(var);
        if (g) acc.add(name, *g);
    }
}

namespace {

Tensor conv_init(int out_ch, int in_ch, Rng& rng) {
    // He-style scale for 3x3 ReLU stacks.
    const double stddev = std::sqrt(2.0 / (in_ch * 9.0));
    return Tensor::randn({out_ch, in_ch, 3, 3}, rng, stddev);
}

}  // namespace

ParamStore init_prior_params(int bands, Rng& rng) {
    check_contract(bands >= 1, "prior net needs at least one band");
    ParamStore p;
    p.add("prior.conv1.w", conv_init(32, bands + 1, rng));
    p.add("prior.conv1.b", Tensor({32}, 0.0));
    p.add("prior.conv2.w", conv_init(32, 32, rng));
    p.add("prior.conv2.b", Tensor({32}, 0.0));
    p.add("prior.conv3.w", conv_init(32, 32, rng));
    p.add("prior.conv3.b", Tensor({32}, 0.0));
    // Zero-initialized head: the net starts as the identity refinement.
    p.add("prior.conv4.w", Tensor({bands, 32, 3, 3}, 0.0));
    p.add("prior.conv4.b", Tensor({bands}, 0.0));
    p.add(kSrfLogitsName, Tensor({bands}, 0.0));
    return p;
}

Var prior_forward(Tape& tape, const BoundParams& bound, Var m_cube, Var pan) {
    check_contract(pan.value().rank() == 3 && pan.value().shape[0] == 1,
                   "prior pan input must be [1,H,W], got " + shape_str(pan.value().shape));
    Var x = concat_bands({m_cube, pan});
    Var h = relu(conv2d(x, bound.at("prior.conv1.w"), bound.at("prior.conv1.b")));
    h = relu(conv2d(h, bound.at("prior.conv2.w"), bound.at("prior.conv2.b")));
    h = relu(conv2d(h, bound.at("prior.conv3.w"), bound.at("prior.conv3.b")));
    Var r = conv2d(h, bound.at("prior.conv4.w"), bound.at("prior.conv4.b"));
    (void)tape;
    return add(r, m_cube);
}

Tensor prior_apply(const ParamStore& params, const Tensor& m_cube, const Tensor& pan_plane) {
    check_contract(pan_plane.rank() == 2, "prior_apply pan must be rank 2");
    Tape tape;
    BoundParams bound = bind_params(tape, params, false);
    Var m = tape.constant(m_cube);
    Var p = tape.constant(
        Tensor::from_data({1, pan_plane.shape[0], pan_plane.shape[1]}, pan_plane.data));
    return prior_forward(tape, bound, m, p).value();
}

Var loss_oc(Tape& tape, Var y, const Observation& obs, Var srf_weights,
            const SfaPattern& pattern) {
    Var p_hat = spectral_project(y, srf_weights);
    Var m_hat = apply_mosaic(y, pattern);
    Var spectral_term = l2_norm_sq(sub(tape.constant(obs.pan), p_hat));
    Var spatial_term = l2_norm_sq(sub(tape.constant(obs.mosaic), m_hat));
    return add(spectral_term, spatial_term);
}

Var loss_ei(Tape& tape, Var y, const BoundParams& bound, SpatialTransform t,
            const SfaPattern& pattern) {
    Var ty = apply_transform(y, t);
    Var weights = softmax(bound.at(kSrfLogitsName));
    Var pan_t = spectral_project(ty, weights);
    const auto& ps = pan_t.value().shape;
    Var pan_t_cube = reshape(pan_t, {1, ps[0], ps[1]});
    Var mosaic_t = apply_mosaic(ty, pattern);
    Var m_cube_t = interpolate_mosaic(mosaic_t, pattern);
    Var y2 = prior_forward(tape, bound, m_cube_t, pan_t_cube);
    return l2_norm_sq(sub(ty, y2));
}

PretrainResult pretrain(const Observation& obs, const SfaPattern& pattern,
                        const PretrainConfig& config, uint64_t seed) {
    check_contract(config.epochs >= 1, "pretrain needs at least one epoch");
    check_contract(config.lr_net > 0.0 && config.lr_srf > 0.0,
                   "pretrain learning rates must be positive");
    obs.validate();
    pattern.validate();

    Rng init_rng(Rng::mix(seed, 0x9e11));
    Rng draw_rng(Rng::mix(seed, 0x7a21));

    PretrainResult result;
    result.params = init_prior_params(pattern.bands, init_rng);

    const Tensor m_cube = interpolate_mosaic(obs.mosaic, pattern);
    const Tensor pan_cube =
        Tensor::from_data({1, obs.pan.shape[0], obs.pan.shape[1]}, obs.pan.data);

    Adam adam;
    const auto lr_of = [&](const std::string& name) {
        return name == kSrfLogitsName ? config.lr_srf : config.lr_net;
    };

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const SpatialTransform t =
            kAllTransforms[draw_rng.uniform_int(kAllTransforms.size())];
        Tape tape;
        BoundParams bound = bind_params(tape, result.params, true);
        Var y = prior_forward(tape, bound, tape.constant(m_cube), tape.constant(pan_cube));
        Var weights = softmax(bound.at(kSrfLogitsName));
        Var l_oc = loss_oc(tape, y, obs, weights, pattern);
        Var l_ei = loss_ei(tape, y, bound, t, pattern);
        Var total = add(l_oc, l_ei);
        const double loss_value = total.value().data[0];
        if (!std::isfinite(loss_value))
            throw TrainingDivergence("pretrain loss is non-finite at epoch " +
                                     std::to_string(epoch));
        GradMap grads = tape.backward(total);
        GradAccumulator acc;
        accumulate_param_grads(bound, grads, acc);
        adam.step(result.params, acc, lr_of);
        result.log.push_back(
            {epoch, l_oc.value().data[0], l_ei.value().data[0], loss_value});
    }

    result.y = prior_apply(result.params, m_cube, obs.pan);
    return result;
}

}  // namespace flowfuse
