#include "doctest.h"

#include <cmath>

#include "flowfuse/pipeline.hpp"
#include "flowfuse/sampler.hpp"
#include "flowfuse/voting.hpp"
#include "test_support.hpp"

using namespace flowfuse;
using namespace flowfuse::testing;

namespace {

// One-band world where a constant offset d gives the exact energy
// d^2 * (pixels + mosaic pixels), making target energies easy to dial in.
struct EnergyRig {
    SfaPattern pattern = SfaPattern::default_pattern(1);
    Observation obs{Tensor({4, 4}, 0.0), Tensor({8, 8}, 0.0)};
    Tensor srf{Tensor({1}, 1.0)};

    Tensor cube_with_energy(double e) const {
        return Tensor({1, 8, 8}, std::sqrt(e / 80.0));
    }
};

}  // namespace

TEST_CASE("the consistency energy is zero on the truth and quadratic in offsets") {
    const SfaPattern pattern = SfaPattern::default_pattern(16);
    Rng rng(601);
    Tensor h = Tensor::randn({16, 16, 16}, rng, 0.1);
    for (double& v : h.data) v += 0.5;
    const Tensor srf = reference_srf(16);
    const Observation obs{apply_mosaic(h, pattern), apply_spectral(h, srf)};

    CHECK(eval_consistency(h, obs, srf, pattern) == 0.0);

    const double delta = 0.2;
    Tensor shifted = h;
    for (double& v : shifted.data) v += delta;
    // N PAN pixels + S mosaic pixels, each off by exactly delta.
    const double expect = delta * delta * (16 * 16 + 8 * 8);
    CHECK(eval_consistency(shifted, obs, srf, pattern) ==
          doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("a half win rate is not enough to replace the target") {
    const EnergyRig rig;
    VoteState state{rig.cube_with_energy(0.4), 0.0, 10, 4, 0.75};
    const std::vector<Tensor> candidates = {
        rig.cube_with_energy(0.5), rig.cube_with_energy(0.3),
        rig.cube_with_energy(0.7), rig.cube_with_energy(0.2)};
    const Tensor before = state.h_tilde;
    const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, 12);
    CHECK(r.win_rate == 0.5);
    CHECK_FALSE(r.updated);
    CHECK(r.winner == -1);
    CHECK(r.incumbent_score == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(bit_identical(state.h_tilde, before));
}

TEST_CASE("a unanimous vote installs the lowest-energy candidate") {
    const EnergyRig rig;
    VoteState state{rig.cube_with_energy(0.4), 0.0, 10, 4, 0.75};
    const std::vector<Tensor> candidates = {
        rig.cube_with_energy(0.3), rig.cube_with_energy(0.2),
        rig.cube_with_energy(0.35), rig.cube_with_energy(0.1)};
    const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, 20);
    CHECK(r.win_rate == 1.0);
    CHECK(r.updated);
    CHECK(r.winner == 3);
    CHECK(bit_identical(state.h_tilde, candidates[3]));
    CHECK(state.score == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("candidates tied with the incumbent never win") {
    const EnergyRig rig;
    VoteState state{rig.cube_with_energy(0.4), 0.0, 10, 4, 0.75};
    const std::vector<Tensor> candidates(4, state.h_tilde);
    const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, 5);
    CHECK(r.win_rate == 0.0);
    CHECK_FALSE(r.updated);
}

TEST_CASE("vote decisions match direct evaluation for every win pattern up to k=5") {
    const EnergyRig rig;
    for (int k = 1; k <= 5; ++k) {
        for (int mask = 0; mask < (1 << k); ++mask) {
            VoteState state{rig.cube_with_energy(1.0), 0.0, 10, k, 0.75};
            std::vector<Tensor> candidates;
            std::vector<double> energies;
            int wins = 0;
            for (int i = 0; i < k; ++i) {
                const bool win = (mask >> i) & 1;
                // Winners sit below the incumbent's energy, spread so the
                // argmin is unique; losers sit above it.
                const double e = win ? 0.2 + 0.05 * i : 1.5 + 0.05 * i;
                candidates.push_back(rig.cube_with_energy(e));
                energies.push_back(e);
                wins += win ? 1 : 0;
            }
            const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, 1);

            const bool should_update =
                static_cast<double>(wins) / k >= 0.75 - 1e-12;
            CHECK(r.updated == should_update);
            CHECK(r.win_rate == doctest::Approx(static_cast<double>(wins) / k));
            if (should_update) {
                int best = 0;
                for (int i = 1; i < k; ++i)
                    if (energies[i] < energies[best]) best = i;
                CHECK(r.winner == best);
                CHECK(state.score <= 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("argmin ties resolve to the lowest candidate index") {
    const EnergyRig rig;
    VoteState state{rig.cube_with_energy(1.0), 0.0, 10, 4, 0.75};
    const std::vector<Tensor> candidates = {
        rig.cube_with_energy(0.2), rig.cube_with_energy(0.2),
        rig.cube_with_energy(0.2), rig.cube_with_energy(0.2)};
    const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, 2);
    CHECK(r.updated);
    CHECK(r.winner == 0);
}

TEST_CASE("voting requires candidates and a sane configuration") {
    const EnergyRig rig;
    VoteState state{rig.cube_with_energy(1.0), 0.0, 10, 4, 0.75};
    CHECK_THROWS_AS((void)vote(state, {}, rig.obs, rig.srf, rig.pattern, 1),
                    ContractViolation);

    VoteState bad_threshold{rig.cube_with_energy(1.0), 0.0, 10, 4, 1.5};
    CHECK_THROWS_AS(bad_threshold.validate(), ContractViolation);
    VoteState bad_k{rig.cube_with_energy(1.0), 0.0, 4, 10, 0.75};
    CHECK_THROWS_AS(bad_k.validate(), ContractViolation);
}

TEST_CASE("votes never raise the incumbent's energy") {
    const EnergyRig rig;
    Rng rng(602);
    VoteState state{rig.cube_with_energy(1.0), 0.0, 10, 4, 0.5};
    double last = 1.0;
    for (int round = 0; round < 20; ++round) {
        std::vector<Tensor> candidates;
        for (int i = 0; i < 4; ++i)
            candidates.push_back(rig.cube_with_energy(rng.uniform(0.1, 2.0)));
        const VoteRecord r = vote(state, candidates, rig.obs, rig.srf, rig.pattern, round);
        CHECK(state.score <= last + 1e-12);
        if (!r.updated) CHECK(state.score == doctest::Approx(last).epsilon(1e-12));
        last = state.score;
    }
}

TEST_CASE("the orthogonality operator removes the parallel component") {
    const Tensor g1 = Tensor::from_data({2}, {1, 0});
    const Tensor g2 = Tensor::from_data({2}, {1, 1});
    CHECK(orthogonal_component(g1, g2).data == std::vector<double>{0, 1});

    // Parallel input collapses to zero.
    const Tensor par = orthogonal_component(g1, Tensor::from_data({2}, {2.5, 0}));
    CHECK(par.data == std::vector<double>{0, 0});

    // Already-orthogonal input passes through unchanged.
    const Tensor orth = Tensor::from_data({2}, {0, -3});
    CHECK(bit_identical(orthogonal_component(g1, orth), orth));

    // A vanishing first argument returns the second unchanged, with a note.
    GuidanceDiagnostics diag;
    const Tensor zero({2}, 0.0);
    CHECK(bit_identical(orthogonal_component(zero, g2, &diag), g2));
    CHECK(diag.zero_projections == 1);

    const Tensor big = random_tensor({50}, 603);
    const Tensor other = random_tensor({50}, 604);
    CHECK(std::abs(dot(big, orthogonal_component(big, other))) <
          1e-10 * l2_norm_sq_value(big));
}

TEST_CASE("the conflict-free direction matches the worked two-dimensional case") {
    const Tensor g_spa = Tensor::from_data({2}, {1, 0});
    const Tensor g_spe = Tensor::from_data({2}, {0, 1});
    const Tensor g = conflict_free_direction(g_spa, g_spe);
    CHECK(g.data == std::vector<double>{0.5, 0.5});
    CHECK(dot(g, g_spa) == 0.5);
    CHECK(dot(g, g_spe) == 0.5);
}

TEST_CASE("parallel gradients fall back to their mean") {
    GuidanceDiagnostics diag;
    const Tensor g = conflict_free_direction(Tensor::from_data({2}, {1, 0}),
                                             Tensor::from_data({2}, {1, 0}), &diag);
    CHECK(g.data == std::vector<double>{1, 0});
    CHECK(diag.degenerate_fallbacks == 1);

    GuidanceDiagnostics diag2;
    const Tensor z = conflict_free_direction(Tensor({3}, 0.0), Tensor({3}, 0.0), &diag2);
    for (double v : z.data) CHECK(v == 0.0);
    CHECK(diag2.degenerate_fallbacks == 1);
}

TEST_CASE("unit normalization ignores positive rescaling") {
    const Tensor g = random_tensor({20}, 605);
    const Tensor a = l1_normalize(g);
    CHECK(l1_norm_value(a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(a, l1_normalize(scale(g, 37.5))) < 1e-12);
    CHECK(max_abs_diff(a, l1_normalize(scale(g, 0.001))) < 1e-12);
}

TEST_CASE("the combined update agrees with both gradients on random pairs") {
    Rng rng(606);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = 2 + static_cast<int>(rng.uniform_int(999));
        Tensor a({dim}), b({dim});
        for (double& v : a.data) v = rng.normal();
        for (double& v : b.data) v = rng.normal();
        GuidanceDiagnostics diag;
        const Tensor g = conflict_free_direction(a, b, &diag);
        if (diag.degenerate_fallbacks > 0) continue;  // exact parallels only
        CHECK(dot(g, a) > 0.0);
        CHECK(dot(g, b) > 0.0);
    }
}

TEST_CASE("guidance gradients vanish at the true scene and match finite differences") {
    const SfaPattern pattern = SfaPattern::default_pattern(2);
    Rng rng(607);
    Tensor h = Tensor::randn({2, 8, 8}, rng, 0.1);
    for (double& v : h.data) v += 0.5;
    const Tensor srf = reference_srf(2);
    const Observation obs{apply_mosaic(h, pattern), apply_spectral(h, srf)};
    const Tensor pan_expanded = expand_pan(obs.pan, 2);

    // Xt + P_D reconstructs H_gt up to one rounding step, so the residuals
    // and hence the gradients carry only rounding noise.
    const Tensor xt_true = sub(h, pan_expanded);
    const GuidancePair at_min = guidance_gradients(xt_true, pan_expanded, obs, srf, pattern);
    for (double v : at_min.g_spa.data) CHECK(std::abs(v) < 1e-12);
    for (double v : at_min.g_spe.data) CHECK(std::abs(v) < 1e-12);

    const Tensor xt = random_tensor({2, 8, 8}, 608, 0.4);
    const GuidancePair pair = guidance_gradients(xt, pan_expanded, obs, srf, pattern);

    const double step = 1e-5;
    auto fd_against = [&](const Tensor& analytic, auto&& loss_of) {
        double worst = 0.0;
        for (size_t i = 0; i < xt.data.size(); ++i) {
            Tensor lo = xt, hi = xt;
            lo.data[i] -= step;
            hi.data[i] += step;
            const double numeric = (loss_of(hi) - loss_of(lo)) / (2 * step);
            worst = std::max(worst, grad_rel_err(analytic.data[i], numeric));
        }
        return worst;
    };
    auto spa_loss = [&](const Tensor& x) {
        const Tensor res = sub(obs.mosaic, apply_mosaic(add(x, pan_expanded), pattern));
        return l2_norm_sq_value(res);
    };
    auto spe_loss = [&](const Tensor& x) {
        const Tensor res = sub(obs.pan, apply_spectral(add(x, pan_expanded), srf));
        return l2_norm_sq_value(res);
    };
    CHECK(fd_against(pair.g_spa, spa_loss) < 1e-4);
    CHECK(fd_against(pair.g_spe, spe_loss) < 1e-4);
}

TEST_CASE("Euler integration of the oracle field lands on the target exactly") {
    const Tensor x0 = random_tensor({3, 6, 6}, 609);
    const Tensor x1 = random_tensor({3, 6, 6}, 610);
    const Tensor v = sub(x1, x0);
    for (int steps : {1, 10, 37}) {
        const Tensor end = euler_integrate(
            x0, steps, [&](const Tensor&, double) { return v; });
        CHECK_MESSAGE(max_abs_diff(end, x1) < 1e-12, steps << " steps");
    }
}

TEST_CASE("sampling is seed-deterministic and ignores the state under a zero field") {
    SceneSpec spec;
    spec.bands = 4;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 611;
    const Scene scene = simulate(spec);
    const Stage2Data data = make_stage2_data(scene.obs, scene.pattern);
    Rng rng(612);
    ParamStore params = init_vf_params(4, rng);  // zero head: zero field
    params.add(kSrfLogitsName, SpectralResponse::uniform(4).logits);

    GuidanceConfig g;
    g.steps = 10;
    g.gamma_norm = 0.0;
    g.seed = 99;

    const Tensor h1 = sample(params, data, g);
    const Tensor h2 = sample(params, data, g);
    CHECK(bit_identical(h1, h2));
    for (double v : h1.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // A zero field never moves the state, so the step count is irrelevant.
    GuidanceConfig one = g;
    one.steps = 1;
    CHECK(bit_identical(sample(params, data, one), h1));

    GuidanceConfig other = g;
    other.seed = 100;
    CHECK_FALSE(bit_identical(sample(params, data, other), h1));
}

TEST_CASE("guided sampling with default intensity stays finite and in range") {
    SceneSpec spec;
    spec.bands = 4;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 613;
    const Scene scene = simulate(spec);
    const Stage2Data data = make_stage2_data(scene.obs, scene.pattern);
    Rng rng(614);
    ParamStore params = init_vf_params(4, rng);
    params.add(kSrfLogitsName, SpectralResponse::uniform(4).logits);

    GuidanceConfig g;  // defaults: 10 steps, 0.4 normalized
    g.seed = 7;
    CHECK(g.gamma_raw() == doctest::Approx(20.0));
    GuidanceDiagnostics diag;
    const Tensor h = sample(params, data, g, &diag);
    h.require_finite("guided sample");
    for (double v : h.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("invalid guidance configurations are rejected") {
    GuidanceConfig bad;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    GuidanceConfig hot;
    hot.gamma_norm = 1.2;
    CHECK_THROWS_AS(hot.validate(), ContractViolation);
    GuidanceConfig cold;
    cold.gamma_norm = -0.1;
    CHECK_THROWS_AS(cold.validate(), ContractViolation);
}

TEST_CASE("a blown-up checkpoint aborts sampling with the step named") {
    SceneSpec spec;
    spec.bands = 2;
    spec.height = 8;
    spec.width = 8;
    spec.seed = 615;
    const Scene scene = simulate(spec);
    const Stage2Data data = make_stage2_data(scene.obs, scene.pattern);
    Rng rng(616);
    ParamStore params = init_vf_params(2, rng);
    params.add(kSrfLogitsName, SpectralResponse::uniform(2).logits);
    // Finite but absurd head weights, as a diverged run would leave behind:
    // the state then grows by orders of magnitude per step until it overflows
    // mid-integration, which the step guard must catch and localize.
    for (double& v : params.at("vf.head.w").data) v = 1e9;
    for (double& v : params.at("vf.head.b").data) v = 1e9;

    GuidanceConfig g;
    g.steps = 40;
    g.gamma_norm = 0.0;  // pure learned field; guidance has its own guards
    g.seed = 1;
    try {
        (void)sample(params, data, g);
        FAIL("expected divergence");
    } catch (const TrainingDivergence& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }

    // An outright non-finite checkpoint never reaches integration; it fails
    // the leaf validation up front.
    params.at("vf.head.b").data[0] = std::nan("");
    CHECK_THROWS_AS((void)sample(params, data, g), ContractViolation);
}
