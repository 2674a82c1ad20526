#include "flowfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "flowfuse/io.hpp"
#include "json.hpp"

namespace flowfuse {

namespace fs = std::filesystem;

void SceneSpec::validate() const {
    check_contract(bands >= 1 && bands <= 16,
                   "scene bands must lie in [1,16], got " + std::to_string(bands));
    check_contract(height >= 8 && width >= 8 && height % 8 == 0 && width % 8 == 0,
                   "scene extents must be positive multiples of 8, got " +
                       std::to_string(height) + "x" + std::to_string(width));
    if (kind == SceneKind::kFromFile)
        check_contract(!path.empty(), "file-backed scene needs a source path");
}

namespace {

// Affine map of the whole cube into [0.05, 0.95]; degenerate ranges become
// the midpoint.
void normalize_cube(Tensor& cube) {
    const double lo = cube.min();
    const double hi = cube.max();
    if (hi - lo < 1e-12) {
        std::fill(cube.data.begin(), cube.data.end(), 0.5);
        return;
    }
    for (double& v : cube.data) v = 0.05 + 0.9 * (v - lo) / (hi - lo);
}

Tensor smooth_field(int height, int width, Rng& rng) {
    Tensor field = Tensor::randn({height / 8, width / 8}, rng);
    field = bilinear_up2(bilinear_up2(bilinear_up2(field)));
    return field;
}

Tensor smooth_scene(const SceneSpec& spec) {
    Rng rng(Rng::mix(spec.seed, 0x5ce1));
    constexpr int kFields = 4;
    std::vector<Tensor> fields;
    for (int f = 0; f < kFields; ++f) fields.push_back(smooth_field(spec.height, spec.width, rng));
    Tensor cube({spec.bands, spec.height, spec.width});
    const size_t plane = static_cast<size_t>(spec.height) * spec.width;
    for (int b = 0; b < spec.bands; ++b) {
        std::array<double, kFields> mix;
        for (double& v : mix) v = rng.uniform(-1.0, 1.0);
        const double offset = rng.uniform(-0.5, 0.5);
        double* dst = cube.data.data() + static_cast<size_t>(b) * plane;
        for (size_t i = 0; i < plane; ++i) {
            double v = offset;
            for (int f = 0; f < kFields; ++f) v += mix[static_cast<size_t>(f)] * fields[static_cast<size_t>(f)].data[i];
            dst[i] = v;
        }
    }
    normalize_cube(cube);
    return cube;
}

Tensor patch_scene(const SceneSpec& spec) {
    Rng rng(Rng::mix(spec.seed, 0x9a7c));
    Tensor cube({spec.bands, spec.height, spec.width});
    for (int b = 0; b < spec.bands; ++b) {
        const double base = rng.uniform(-0.5, 0.5);
        const size_t plane = static_cast<size_t>(spec.height) * spec.width;
        std::fill_n(cube.data.begin() + static_cast<size_t>(b) * plane, plane, base);
    }
    constexpr int kRects = 12;
    for (int r = 0; r < kRects; ++r) {
        const int h = 4 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.height / 2)));
        const int w = 4 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.width / 2)));
        const int top = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.height - h + 1)));
        const int left = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.width - w + 1)));
        for (int b = 0; b < spec.bands; ++b) {
            const double delta = rng.uniform(-1.0, 1.0);
            for (int i = top; i < top + h; ++i)
                for (int j = left; j < left + w; ++j) cube(b, i, j) += delta;
        }
    }
    normalize_cube(cube);
    return cube;
}

}  // namespace

Tensor generate_ground_truth(const SceneSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case SceneKind::kSmoothFields: return smooth_scene(spec);
        case SceneKind::kPiecewisePatches: return patch_scene(spec);
        case SceneKind::kFromFile: {
            Tensor cube = read_cube(spec.path);
            check_contract(cube.rank() == 3, "scene file must hold a cube");
            check_contract(cube.shape[1] % 8 == 0 && cube.shape[2] % 8 == 0,
                           "scene file extents must be multiples of 8");
            check_contract(cube.min() >= 0.0 && cube.max() <= 1.0,
                           "scene file values must lie in [0,1]");
            return cube;
        }
    }
    throw ContractViolation("unknown scene kind");
}

Scene simulate(const SceneSpec& spec) {
    return simulate(spec, SfaPattern::default_pattern(spec.bands));
}

Scene simulate(const SceneSpec& spec, const SfaPattern& pattern) {
    Scene scene;
    scene.h_gt = generate_ground_truth(spec);
    check_contract(pattern.bands == scene.h_gt.shape[0],
                   "pattern band count does not match scene");
    scene.pattern = pattern;
    scene.pattern.validate();
    scene.obs.mosaic = apply_mosaic(scene.h_gt, scene.pattern);
    scene.obs.pan = apply_spectral(scene.h_gt, reference_srf(scene.h_gt.shape[0]));
    scene.obs.validate();
    return scene;
}

void save_scene(const fs::path& dir, const Scene& scene) {
    fs::create_directories(dir);
    write_cube(dir / "h_gt.cube", scene.h_gt);
    write_cube(dir / "mosaic.cube", scene.obs.mosaic);
    write_cube(dir / "pan.cube", scene.obs.pan);
    write_pattern(dir / "pattern.txt", scene.pattern);
}

Scene load_scene(const fs::path& dir) {
    Scene scene;
    scene.h_gt = read_cube(dir / "h_gt.cube");
    scene.obs.mosaic = read_cube(dir / "mosaic.cube");
    scene.obs.pan = read_cube(dir / "pan.cube");
    scene.pattern = read_pattern(dir / "pattern.txt");
    scene.obs.validate();
    check_contract(scene.h_gt.rank() == 3 && scene.h_gt.shape[0] == scene.pattern.bands,
                   "scene cube and pattern band counts differ");
    return scene;
}

void RunConfig::validate() const {
    check_contract(stage1.epochs >= 1, "stage1.epochs must be >= 1");
    check_contract(stage1.lr_net > 0.0, "stage1.lr_net must be positive");
    check_contract(stage1.lr_srf > 0.0, "stage1.lr_srf must be positive");
    check_contract(stage2.epochs >= 1, "stage2.epochs must be >= 1");
    check_contract(stage2.lr_net > 0.0, "stage2.lr_net must be positive");
    check_contract(stage2.lr_srf > 0.0, "stage2.lr_srf must be positive");
    check_contract(stage2.lambda_deg >= 0.0, "stage2.lambda_deg must be >= 0");
    check_contract(stage2.warmup_frac >= 0.0 && stage2.warmup_frac <= 1.0,
                   "stage2.warmup_frac must lie in [0,1]");
    check_contract(stage2.batch_size >= 1, "stage2.batch_size must be >= 1");
    check_contract(stage2.batches_per_epoch >= 1, "stage2.batches_per_epoch must be >= 1");
    check_contract(stage2.patch_pan >= 8 && stage2.patch_pan % 8 == 0,
                   "stage2.patch_pan must be a positive multiple of 8");
    check_contract(vote_window >= 1, "voting.window must be >= 1");
    check_contract(vote_candidates >= 1 && vote_candidates <= vote_window,
                   "voting.candidates must lie in [1, voting.window]");
    check_contract(vote_threshold > 0.0 && vote_threshold <= 1.0,
                   "voting.threshold must lie in (0,1]");
    check_contract(sample_steps >= 1, "sampling.steps must be >= 1");
    check_contract(gamma_norm >= 0.0 && gamma_norm <= 1.0,
                   "sampling.gamma_norm must lie in [0,1]");
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw IoError("config: unknown key '" + where + key + "'");
    }
}

template <typename T>
void load_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw IoError(std::string("config: field '") + key + "' has the wrong type");
    }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig config;
    reject_unknown_keys(j, {"seed", "stage1", "stage2", "voting", "sampling"}, "");
    load_field(j, "seed", config.seed);
    if (j.contains("stage1")) {
        const json& s = j.at("stage1");
        reject_unknown_keys(s, {"epochs", "lr_net", "lr_srf"}, "stage1.");
        load_field(s, "epochs", config.stage1.epochs);
        load_field(s, "lr_net", config.stage1.lr_net);
        load_field(s, "lr_srf", config.stage1.lr_srf);
    }
    if (j.contains("stage2")) {
        const json& s = j.at("stage2");
        reject_unknown_keys(s,
                            {"epochs", "lr_net", "lr_srf", "lambda_deg", "warmup_frac",
                             "batch_size", "batches_per_epoch", "patch_pan"},
                            "stage2.");
        load_field(s, "epochs", config.stage2.epochs);
        load_field(s, "lr_net", config.stage2.lr_net);
        load_field(s, "lr_srf", config.stage2.lr_srf);
        load_field(s, "lambda_deg", config.stage2.lambda_deg);
        load_field(s, "warmup_frac", config.stage2.warmup_frac);
        load_field(s, "batch_size", config.stage2.batch_size);
        load_field(s, "batches_per_epoch", config.stage2.batches_per_epoch);
        load_field(s, "patch_pan", config.stage2.patch_pan);
    }
    if (j.contains("voting")) {
        const json& s = j.at("voting");
        reject_unknown_keys(s, {"window", "candidates", "threshold", "strategy"}, "voting.");
        load_field(s, "window", config.vote_window);
        load_field(s, "candidates", config.vote_candidates);
        load_field(s, "threshold", config.vote_threshold);
        if (s.contains("strategy")) {
            const std::string strategy = s.at("strategy").get<std::string>();
            if (strategy == "random")
                config.vote_strategy = VoteStrategy::kRandom;
            else if (strategy == "fixed")
                config.vote_strategy = VoteStrategy::kFixed;
            else
                throw IoError("config: voting.strategy must be 'random' or 'fixed', got '" +
                              strategy + "'");
        }
    }
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        reject_unknown_keys(s, {"steps", "gamma_norm"}, "sampling.");
        load_field(s, "steps", config.sample_steps);
        load_field(s, "gamma_norm", config.gamma_norm);
    }
    try {
        config.validate();
    } catch (const ContractViolation& e) {
        throw IoError(std::string("config: ") + e.what());
    }
    return config;
}

std::string RunConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["stage1"] = {{"epochs", stage1.epochs},
                   {"lr_net", stage1.lr_net},
                   {"lr_srf", stage1.lr_srf}};
    j["stage2"] = {{"epochs", stage2.epochs},
                   {"lr_net", stage2.lr_net},
                   {"lr_srf", stage2.lr_srf},
                   {"lambda_deg", stage2.lambda_deg},
                   {"warmup_frac", stage2.warmup_frac},
                   {"batch_size", stage2.batch_size},
                   {"batches_per_epoch", stage2.batches_per_epoch},
                   {"patch_pan", stage2.patch_pan}};
    j["voting"] = {{"window", vote_window},
                   {"candidates", vote_candidates},
                   {"threshold", vote_threshold},
                   {"strategy", vote_strategy == VoteStrategy::kRandom ? "random" : "fixed"}};
    j["sampling"] = {{"steps", sample_steps}, {"gamma_norm", gamma_norm}};
    return j.dump(2) + "\n";
}

namespace {

std::string checkpoint_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%03d.ckpt", epoch);
    return buf;
}

// Distinct epochs from the window (epoch-window, epoch], most recent last.
std::vector<int> pick_checkpoints(VoteStrategy strategy, int epoch, int window, int count,
                                  Rng& rng) {
    const int lo = std::max(1, epoch - window + 1);
    std::vector<int> pool;
    for (int e = lo; e <= epoch; ++e) pool.push_back(e);
    check_contract(static_cast<int>(pool.size()) >= count,
                   "vote window holds fewer checkpoints than candidates");
    if (strategy == VoteStrategy::kFixed)
        return {pool.end() - count, pool.end()};
    std::vector<int> picked;
    for (int i = 0; i < count; ++i) {
        const size_t at = rng.uniform_int(pool.size());
        picked.push_back(pool[at]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

Tensor current_srf_weights(const ParamStore& params) {
    SpectralResponse r;
    r.logits = params.at(kSrfLogitsName);
    return r.weights();
}

}  // namespace

RunArtifacts run_stage2(const RunConfig& config, const Scene& scene,
                        const ParamStore& prior_params, const Tensor& y,
                        const fs::path& out_dir) {
    config.validate();
    scene.obs.validate();
    fs::create_directories(out_dir / "checkpoints");

    RunArtifacts artifacts;
    artifacts.prior_params = prior_params;
    artifacts.y = y;

    const Stage2Data data = make_stage2_data(scene.obs, scene.pattern);

    Rng init_rng(Rng::mix(config.seed, 0x2e11));
    ParamStore params = init_vf_params(scene.pattern.bands, init_rng);
    params.add(kSrfLogitsName, prior_params.at(kSrfLogitsName));

    VoteState vote_state;
    vote_state.h_tilde = y;
    vote_state.window = config.vote_window;
    vote_state.candidates = config.vote_candidates;
    vote_state.threshold = config.vote_threshold;
    vote_state.validate();

    Adam adam;
    Rng train_rng(Rng::mix(config.seed, 0x7e42));

    for (int epoch = 1; epoch <= config.stage2.epochs; ++epoch) {
        const EpochStats stats = train_epoch(params, adam, data, vote_state.h_tilde,
                                             config.stage2, epoch, train_rng);
        artifacts.train_log.push_back(stats);
        write_checkpoint(out_dir / "checkpoints" / checkpoint_name(epoch), params);

        if (epoch % config.vote_window == 0 && epoch >= config.vote_candidates) {
            Rng select_rng(Rng::mix(Rng::mix(config.seed, 0x5e1e), static_cast<uint64_t>(epoch)));
            const std::vector<int> picked =
                pick_checkpoints(config.vote_strategy, epoch, config.vote_window,
                                 config.vote_candidates, select_rng);
            std::vector<Tensor> candidates;
            for (size_t slot = 0; slot < picked.size(); ++slot) {
                const ParamStore ckpt = read_checkpoint(
                    out_dir / "checkpoints" / checkpoint_name(picked[slot]));
                GuidanceConfig g;
                g.steps = config.sample_steps;
                g.gamma_norm = config.gamma_norm;
                g.seed = Rng::mix(Rng::mix(config.seed, 0xca4d),
                                  static_cast<uint64_t>(epoch) * 64 + slot);
                candidates.push_back(sample(ckpt, data, g));
            }
            VoteRecord record = vote(vote_state, candidates, scene.obs,
                                     current_srf_weights(params), scene.pattern, epoch);
            artifacts.vote_log.push_back(record);
            write_text_atomic(out_dir / "votes.jsonl", vote_log_jsonl(artifacts.vote_log));
            write_cube(out_dir / "h_tilde.cube", vote_state.h_tilde);
        }

        artifacts.target_energy.push_back(eval_consistency(
            vote_state.h_tilde, scene.obs, current_srf_weights(params), scene.pattern));
        write_text_atomic(out_dir / "train_log.csv",
                          train_log_csv(artifacts.train_log, artifacts.target_energy));
    }

    GuidanceConfig final_cfg;
    final_cfg.steps = config.sample_steps;
    final_cfg.gamma_norm = config.gamma_norm;
    final_cfg.seed = Rng::mix(config.seed, 0xf1a1);
    artifacts.h_final = sample(params, data, final_cfg);

    artifacts.final_params = params;
    artifacts.h_tilde = vote_state.h_tilde;
    write_cube(out_dir / "h_tilde.cube", artifacts.h_tilde);
    write_cube(out_dir / "h_final.cube", artifacts.h_final);
    write_checkpoint(out_dir / "final.ckpt", params);
    return artifacts;
}

RunArtifacts run_two_stage(const RunConfig& config, const Scene& scene,
                           const fs::path& out_dir) {
    config.validate();
    fs::create_directories(out_dir);
    const PretrainResult stage1 =
        pretrain(scene.obs, scene.pattern, config.stage1, Rng::mix(config.seed, 0x0001));
    write_checkpoint(out_dir / "prior.ckpt", stage1.params);
    write_cube(out_dir / "y.cube", stage1.y);
    write_text_atomic(out_dir / "pretrain_log.csv", pretrain_log_csv(stage1.log));

    RunArtifacts artifacts = run_stage2(config, scene, stage1.params, stage1.y, out_dir);
    artifacts.pretrain_log = stage1.log;
    return artifacts;
}

std::string pretrain_log_csv(const std::vector<PretrainEpochRow>& rows) {
    std::string out = "epoch,loss_oc,loss_ei,loss_pre\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "," + format_double(r.loss_oc) + "," +
               format_double(r.loss_ei) + "," + format_double(r.loss_pre) + "\n";
    }
    return out;
}

std::string train_log_csv(const std::vector<EpochStats>& rows,
                          const std::vector<double>& target_energy) {
    check_contract(rows.size() == target_energy.size() || target_energy.empty(),
                   "training log and energy column sizes differ");
    std::string out = "epoch,loss_dir,loss_trans,loss_deg,loss_total,target_energy\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out += std::to_string(r.epoch) + "," + format_double(r.loss_dir) + "," +
               format_double(r.loss_trans) + "," + format_double(r.loss_deg) + "," +
               format_double(r.loss_total) + ",";
        out += target_energy.empty() ? "" : format_double(target_energy[i]);
        out += "\n";
    }
    return out;
}

std::string vote_log_jsonl(const std::vector<VoteRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        json j;
        j["epoch"] = r.epoch;
        j["candidate_scores"] = r.candidate_scores;
        j["incumbent_score"] = r.incumbent_score;
        j["win_rate"] = r.win_rate;
        j["updated"] = r.updated;
        j["winner"] = r.winner;
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace flowfuse
