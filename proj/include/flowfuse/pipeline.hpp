#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowfuse/cfm.hpp"
#include "flowfuse/degradation.hpp"
#include "flowfuse/prior.hpp"
#include "flowfuse/sampler.hpp"
#include "flowfuse/voting.hpp"

namespace flowfuse {

enum class SceneKind { kSmoothFields, kPiecewisePatches, kFromFile };

struct SceneSpec {
    int bands = 16;
    int height = 64;
    int width = 64;
    SceneKind kind = SceneKind::kSmoothFields;
    uint64_t seed = 1;
    std::filesystem::path path;  // source cube for kFromFile

    void validate() const;
};

struct Scene {
    Tensor h_gt;  // [c,H,W] in [0,1]
    Observation obs;
    SfaPattern pattern;
};

// Seeded synthetic cube in [0,1] with shared smooth structure across bands.
Tensor generate_ground_truth(const SceneSpec& spec);

// Ground truth plus observations degraded with the reference response and
// the given (default: row-major base) pattern.
Scene simulate(const SceneSpec& spec);
Scene simulate(const SceneSpec& spec, const SfaPattern& pattern);

void save_scene(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir);

enum class VoteStrategy { kRandom, kFixed };

struct RunConfig {
    uint64_t seed = 1;
    PretrainConfig stage1;
    Stage2Config stage2;
    int vote_window = 10;
    int vote_candidates = 4;
    double vote_threshold = 0.75;
    VoteStrategy vote_strategy = VoteStrategy::kRandom;
    int sample_steps = 10;
    double gamma_norm = 0.4;

    void validate() const;
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct RunArtifacts {
    ParamStore prior_params;
    Tensor y;  // stage-1 pseudo high-resolution cube
    ParamStore final_params;
    Tensor h_tilde;   // final pseudo-target
    Tensor h_final;   // final guided sample
    std::vector<PretrainEpochRow> pretrain_log;
    std::vector<EpochStats> train_log;
    std::vector<double> target_energy;  // E(h_tilde) after each epoch
    std::vector<VoteRecord> vote_log;
};

// Stage 2 alone, starting from given stage-1 outputs. Persists checkpoints,
// logs, the evolving pseudo-target, and the final sample under out_dir.
RunArtifacts run_stage2(const RunConfig& config, const Scene& scene,
                        const ParamStore& prior_params, const Tensor& y,
                        const std::filesystem::path& out_dir);

// Pretraining followed by stage 2.
RunArtifacts run_two_stage(const RunConfig& config, const Scene& scene,
                           const std::filesystem::path& out_dir);

// Log serialization (also used by the CLI).
std::string pretrain_log_csv(const std::vector<PretrainEpochRow>& rows);
std::string train_log_csv(const std::vector<EpochStats>& rows,
                          const std::vector<double>& target_energy);
std::string vote_log_jsonl(const std::vector<VoteRecord>& records);

}  // namespace flowfuse
