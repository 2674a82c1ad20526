#pragma once

#include <vector>

#include "flowfuse/degradation.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

// Observation-consistency energy: ||P - A_P(X)||^2 + ||m - A_m(X)||^2.
double eval_consistency(const Tensor& x, const Observation& obs, const Tensor& srf_weights,
                        const SfaPattern& pattern);

struct VoteState {
    Tensor h_tilde;
    double score = 0.0;  // energy of h_tilde under the operators of the last vote
    int window = 10;     // checkpoint window K
    int candidates = 4;  // draws per vote k
    double threshold = 0.75;

    void validate() const;
};

struct VoteRecord {
    int epoch = 0;
    std::vector<double> candidate_scores;
    double incumbent_score = 0.0;
    double win_rate = 0.0;
    bool updated = false;
    int winner = -1;  // candidate index when updated
};

// Replaces the incumbent with the lowest-energy candidate iff the fraction of
// candidates with strictly lower energy reaches the threshold. The incumbent
// score is recomputed from scratch so operator drift cannot leave it stale.
VoteRecord vote(VoteState& state, const std::vector<Tensor>& candidates,
                const Observation& obs, const Tensor& srf_weights, const SfaPattern& pattern,
                int epoch);

}  // namespace flowfuse
