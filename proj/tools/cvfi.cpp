#include "cvfi/commands.hpp"
#include "cvfi/scheduler.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

cvfi::PipelineConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides, int threads)
{
    json j = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw UsageError("cannot open config " + path);
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw UsageError("config " + path + ": " + e.what());
        }
    }
    try {
        j = cvfi::apply_overrides(std::move(j), overrides);
        cvfi::PipelineConfig cfg = cvfi::config_from_json(j);
        if (threads > 0) cfg.threads = threads;
        return cfg;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

void print(const std::string& text)
{
    std::fwrite(text.data(), 1, text.size(), stdout);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Chunked latent video frame interpolation"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    int threads = 0;
    app.add_option("-c,--config", config_path, "JSON configuration file");
    app.add_option("--set", overrides, "Override a config key, e.g. --set training.steps=10");
    app.add_option("--threads", threads, "Worker cap")->check(CLI::NonNegativeNumber);

    std::string out, corpus, ckpt, lq, gt, mode;
    int s = 0, chunks = 8, period = 2, stop_after = -1;
    double eps = 1.0, alpha = 0.5;
    bool resume = false;

    auto* gen = app.add_subcommand("gen-data", "Write the synthetic train and eval corpus");
    gen->add_option("--out", out, "Output directory")->required();

    auto* tvae = app.add_subcommand("train-vae", "Train the toy codec and its conditional decoder");
    tvae->add_option("--corpus", corpus, "Corpus directory")->required();
    tvae->add_option("--out", out, "Checkpoint directory")->required();

    auto* tdit = app.add_subcommand("train-dit", "Train the denoiser against a frozen codec");
    tdit->add_option("--corpus", corpus, "Corpus directory")->required();
    tdit->add_option("--ckpt", ckpt, "Checkpoint directory holding vae.json")->required();
    tdit->add_flag("--resume", resume, "Continue from dit_state if present");
    tdit->add_option("--stop-after", stop_after, "Stop once this many steps are done");

    auto* interp = app.add_subcommand("interpolate", "Interpolate a low-frame-rate video");
    interp->add_option("--lq", lq, "Input manifest")->required();
    interp->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    interp->add_option("--out", out, "Output directory")->required();
    interp->add_option("--gt", gt, "Ground-truth manifest for PSNR");
    interp->add_option("--s", s, "Upsampling factor (default: inference.s)");
    interp->add_option("--mode", mode, "causal or skip_concat");

    auto* abl = app.add_subcommand("ablate", "Ablation table over the eval corpus");
    abl->add_option("--corpus", corpus, "Corpus directory")->required();
    abl->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    abl->add_option("--out", out, "Output CSV")->required();

    auto* plan = app.add_subcommand("plan", "Print a generation plan as JSON");
    plan->add_option("--chunks", chunks, "Chunk count")->check(CLI::PositiveNumber);
    plan->add_option("--mode", mode, "causal or skip_concat");
    plan->add_option("--period", period, "Skip period")->check(CLI::Range(2, 1 << 20));

    auto* sim = app.add_subcommand("simulate", "Per-chunk error of a plan under the linear error model, as CSV");
    sim->add_option("--chunks", chunks, "Chunk count")->check(CLI::PositiveNumber);
    sim->add_option("--mode", mode, "causal or skip_concat");
    sim->add_option("--period", period, "Skip period")->check(CLI::Range(2, 1 << 20));
    sim->add_option("--eps", eps, "Per-step error");
    sim->add_option("--alpha", alpha, "Context error carry-over");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    cvfi::PipelineConfig cfg;
    try {
        cfg = resolve_config(config_path, overrides, threads);
        if (!mode.empty()) cfg.inference.mode = cvfi::inference_mode_from_string(mode);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*gen) {
            const auto manifests = cvfi::cmd_gen_data(cfg, out);
            std::cout << "wrote " << manifests.size() << " clips to " << out << "\n";
        } else if (*tvae) {
            const auto run = cvfi::cmd_train_vae(cfg, corpus, out);
            const double last = run.base_trace.empty() ? 0.0 : run.base_trace.back().l1;
            std::cout << "vae: " << run.base_trace.size() << " base + " << run.cond_trace.size() << " cond steps, last l1 " << last << "\n";
        } else if (*tdit) {
            cvfi::DitRunOptions o;
            o.resume = resume;
            if (stop_after >= 0) o.stop_after = stop_after;
            const auto run = cvfi::cmd_train_dit(cfg, corpus, ckpt, o);
            std::cout << "dit: " << run.next_step << "/" << cfg.training.steps << " steps"
                      << (run.trace.empty() ? std::string() : ", last loss " + std::to_string(run.trace.back().loss)) << "\n";
        } else if (*interp) {
            cvfi::InterpolateRequest r;
            r.lq_manifest = lq;
            r.ckpt = ckpt;
            r.out = out;
            if (!gt.empty()) r.gt_manifest = gt;
            r.s = s > 0 ? s : cfg.inference.s;
            print(cvfi::cmd_interpolate(cfg, r).dump(2) + "\n");
        } else if (*abl) {
            const auto table = cvfi::cmd_ablate(cfg, corpus, ckpt, out);
            print(cvfi::ablation_csv(table));
            std::cout << "repeat-previous baseline psnr " << table.baseline_psnr << " flicker " << table.baseline_flicker << "\n";
        } else if (*plan || *sim) {
            const auto p = cfg.inference.mode == cvfi::InferenceMode::causal ? cvfi::plan_causal(chunks) : cvfi::plan_skip_concat(chunks, period);
            if (*plan)
                print(cvfi::plan_to_json(p) + "\n");
            else
                print(cvfi::error_csv(p, cvfi::simulate_error(p, cvfi::ErrorModel{eps, alpha})));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
