#include "flowfuse/voting.hpp"

namespace flowfuse {

double eval_consistency(const Tensor& x, const Observation& obs, const Tensor& srf_weights,
                        const SfaPattern& pattern) {
    const Tensor p_hat = apply_spectral(x, srf_weights);
    const Tensor m_hat = apply_mosaic(x, pattern);
    return l2_norm_sq_value(sub(obs.pan, p_hat)) + l2_norm_sq_value(sub(obs.mosaic, m_hat));
}

void VoteState::validate() const {
    check_contract(threshold > 0.0 && threshold <= 1.0,
                   "vote threshold must lie in (0,1], got " + std::to_string(threshold));
    check_contract(window >= 1, "vote window must be positive");
    check_contract(candidates >= 1 && candidates <= window,
                   "candidate count must lie in [1, window]");
}

VoteRecord vote(VoteState& state, const std::vector<Tensor>& candidates,
                const Observation& obs, const Tensor& srf_weights, const SfaPattern& pattern,
                int epoch) {
    state.validate();
    check_contract(!candidates.empty(), "vote needs at least one candidate");
    check_contract(static_cast<int>(candidates.size()) == state.candidates,
                   "expected " + std::to_string(state.candidates) + " candidates, got " +
                       std::to_string(candidates.size()));

    VoteRecord record;
    record.epoch = epoch;
    record.incumbent_score = eval_consistency(state.h_tilde, obs, srf_weights, pattern);

    int wins = 0;
    int best = -1;
    double best_score = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const double score = eval_consistency(candidates[i], obs, srf_weights, pattern);
        record.candidate_scores.push_back(score);
        if (score < record.incumbent_score) ++wins;
        if (best < 0 || score < best_score) {  // ties keep the lowest index
            best = static_cast<int>(i);
            best_score = score;
        }
    }
    record.win_rate = static_cast<double>(wins) / static_cast<double>(candidates.size());
    record.updated = record.win_rate >= state.threshold;
    if (record.updated) {
        record.winner = best;
        state.h_tilde = candidates[static_cast<size_t>(best)];
        state.score = best_score;
    } else {
        state.score = record.incumbent_score;
    }
    return record;
}

}  // namespace flowfuse
