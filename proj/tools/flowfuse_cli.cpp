#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "flowfuse/io.hpp"
#include "flowfuse/metrics.hpp"
#include "flowfuse/pipeline.hpp"
#include "flowfuse/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace flowfuse;

namespace {

// Relative output paths land under FLOWFUSE_OUT_DIR when it is set.
fs::path resolve_out(const fs::path& p) {
    const char* base = std::getenv("FLOWFUSE_OUT_DIR");
    if (base && *base && p.is_relative()) return fs::path(base) / p;
    return p;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return RunConfig::from_json_text(read_text(path));
}

std::string full_reference_csv(const FullReferenceScores& s) {
    return "psnr,ssim,sam,ergas\n" + format_double(s.psnr) + "," + format_double(s.ssim) +
           "," + format_double(s.sam) + "," + format_double(s.ergas) + "\n";
}

std::array<int, 3> default_rgb(int bands) {
    if (bands >= 14) return {12, 7, 2};
    return {bands - 1, bands / 2, 0};
}

int run(int argc, char** argv) {
    CLI::App app{"Semi-supervised fusion of a mosaiced hyperspectral image with a PAN image"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene and observations");
    int sim_bands = 16, sim_size = 64, sim_width = 0;
    uint64_t sim_seed = 1;
    std::string sim_kind = "smooth", sim_out, sim_pattern;
    sim->add_option("--bands", sim_bands, "Band count (1..16)");
    sim->add_option("--size", sim_size, "Height (and width unless --width) of the PAN plane");
    sim->add_option("--width", sim_width, "PAN width when different from --size");
    sim->add_option("--seed", sim_seed, "Generator seed");
    sim->add_option("--kind", sim_kind, "Scene kind: smooth | patches")
        ->check(CLI::IsMember({"smooth", "patches"}));
    sim->add_option("--pattern", sim_pattern, "Pattern file overriding the default layout");
    sim->add_option("--out", sim_out, "Output scene directory")->required();

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Stage 1: fit the prior net to one scene");
    std::string pre_scene, pre_config, pre_out;
    pre->add_option("--scene", pre_scene, "Scene directory from simulate")->required();
    pre->add_option("--config", pre_config, "JSON run configuration");
    pre->add_option("--out", pre_out, "Output directory")->required();

    // train
    auto* trn = app.add_subcommand("train", "Stage 2: flow matching with voting");
    std::string trn_scene, trn_config, trn_prior, trn_out;
    trn->add_option("--scene", trn_scene, "Scene directory from simulate")->required();
    trn->add_option("--prior", trn_prior, "Directory holding prior.ckpt and y.cube")->required();
    trn->add_option("--config", trn_config, "JSON run configuration");
    trn->add_option("--out", trn_out, "Output directory")->required();

    // sample
    auto* smp = app.add_subcommand("sample", "Guided generation from a trained checkpoint");
    std::string smp_scene, smp_ckpt, smp_out;
    int smp_steps = 10;
    double smp_gamma = 0.4;
    uint64_t smp_seed = 1;
    smp->add_option("--scene", smp_scene, "Scene directory")->required();
    smp->add_option("--checkpoint", smp_ckpt, "Stage-2 checkpoint file")->required();
    smp->add_option("--steps", smp_steps, "Euler steps");
    smp->add_option("--gamma-norm", smp_gamma, "Normalized guidance intensity in [0,1]");
    smp->add_option("--seed", smp_seed, "Noise seed");
    smp->add_option("--out", smp_out, "Output cube file")->required();

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Full-reference metrics for a fused cube");
    std::string evl_fused, evl_ref, evl_out;
    evl->add_option("--fused", evl_fused, "Fused cube file")->required();
    evl->add_option("--ref", evl_ref, "Reference cube file")->required();
    evl->add_option("--out", evl_out, "Also write the CSV here");

    // report
    auto* rpt = app.add_subcommand("report", "Full report (CSV + JSON, optional preview)");
    std::string rpt_scene, rpt_fused, rpt_ref, rpt_out, rpt_ppm;
    bool rpt_preblur = false;
    std::vector<int> rpt_rgb;
    rpt->add_option("--scene", rpt_scene, "Scene directory")->required();
    rpt->add_option("--fused", rpt_fused, "Fused cube file")->required();
    rpt->add_option("--ref", rpt_ref, "Reference cube (enables full-reference metrics)");
    rpt->add_flag("--preblur", rpt_preblur, "Blur observations before the no-reference scores");
    rpt->add_option("--ppm", rpt_ppm, "Write a pseudo-color preview here");
    rpt->add_option("--rgb", rpt_rgb, "Three 0-based bands for the preview")->expected(3);
    rpt->add_option("--out", rpt_out, "Output file stem (.csv and .json appended)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    if (sim->parsed()) {
        SceneSpec spec;
        spec.bands = sim_bands;
        spec.height = sim_size;
        spec.width = sim_width > 0 ? sim_width : sim_size;
        spec.seed = sim_seed;
        spec.kind = sim_kind == "patches" ? SceneKind::kPiecewisePatches
                                          : SceneKind::kSmoothFields;
        const Scene scene = sim_pattern.empty()
                                ? simulate(spec)
                                : simulate(spec, read_pattern(sim_pattern));
        save_scene(resolve_out(sim_out), scene);
        std::cout << "scene written to " << resolve_out(sim_out).string() << "\n";
    } else if (pre->parsed()) {
        const Scene scene = load_scene(pre_scene);
        const RunConfig config = load_config(pre_config);
        const PretrainResult result =
            pretrain(scene.obs, scene.pattern, config.stage1, Rng::mix(config.seed, 0x0001));
        const fs::path out = resolve_out(pre_out);
        fs::create_directories(out);
        write_checkpoint(out / "prior.ckpt", result.params);
        write_cube(out / "y.cube", result.y);
        write_text_atomic(out / "pretrain_log.csv", pretrain_log_csv(result.log));
        std::cout << "stage-1 artifacts written to " << out.string() << "\n";
    } else if (trn->parsed()) {
        const Scene scene = load_scene(trn_scene);
        const RunConfig config = load_config(trn_config);
        const ParamStore prior_params = read_checkpoint(fs::path(trn_prior) / "prior.ckpt");
        const Tensor y = read_cube(fs::path(trn_prior) / "y.cube");
        run_stage2(config, scene, prior_params, y, resolve_out(trn_out));
        std::cout << "stage-2 artifacts written to " << resolve_out(trn_out).string() << "\n";
    } else if (smp->parsed()) {
        const Scene scene = load_scene(smp_scene);
        const ParamStore params = read_checkpoint(smp_ckpt);
        const Stage2Data data = make_stage2_data(scene.obs, scene.pattern);
        GuidanceConfig g;
        g.steps = smp_steps;
        g.gamma_norm = smp_gamma;
        g.seed = smp_seed;
        write_cube(resolve_out(smp_out), sample(params, data, g));
        std::cout << "sample written to " << resolve_out(smp_out).string() << "\n";
    } else if (evl->parsed()) {
        const Tensor fused = read_cube(evl_fused);
        const Tensor ref = read_cube(evl_ref);
        const std::string csv = full_reference_csv(full_reference(fused, ref));
        std::cout << csv;
        if (!evl_out.empty()) write_text_atomic(resolve_out(evl_out), csv);
    } else if (rpt->parsed()) {
        const Scene scene = load_scene(rpt_scene);
        const Tensor fused = read_cube(rpt_fused);
        const NoReferenceScores nr =
            qnr_suite(fused, scene.obs.mosaic, scene.obs.pan, scene.pattern, rpt_preblur);
        nlohmann::json j;
        j["no_reference"] = {{"qnr", nr.qnr}, {"d_lambda", nr.d_lambda}, {"d_s", nr.d_s}};
        std::string csv = "psnr,ssim,sam,ergas,qnr,d_lambda,d_s\n";
        std::string fr_cells = ",,,";
        if (!rpt_ref.empty()) {
            const FullReferenceScores s = full_reference(fused, read_cube(rpt_ref));
            j["full_reference"] = {{"psnr", s.psnr},
                                   {"ssim", s.ssim},
                                   {"sam", s.sam},
                                   {"ergas", s.ergas}};
            fr_cells = format_double(s.psnr) + "," + format_double(s.ssim) + "," +
                       format_double(s.sam) + "," + format_double(s.ergas);
        }
        csv += fr_cells + "," + format_double(nr.qnr) + "," + format_double(nr.d_lambda) +
               "," + format_double(nr.d_s) + "\n";
        const fs::path stem = resolve_out(rpt_out);
        write_text_atomic(stem.string() + ".csv", csv);
        write_text_atomic(stem.string() + ".json", j.dump(2) + "\n");
        if (!rpt_ppm.empty()) {
            const std::array<int, 3> rgb =
                rpt_rgb.size() == 3 ? std::array<int, 3>{rpt_rgb[0], rpt_rgb[1], rpt_rgb[2]}
                                    : default_rgb(fused.shape[0]);
            write_ppm(resolve_out(rpt_ppm), fused, rgb);
        }
        std::cout << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ContractViolation& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
    } catch (const TrainingDivergence& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
}
