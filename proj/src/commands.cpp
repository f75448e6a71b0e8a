#include "cvfi/commands.hpp"

#include "cvfi/checkpoint.hpp"
#include "cvfi/conditioning.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace cvfi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string clip_name(int i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip_%03d", i);
    return buf;
}

std::string vae_trace_csv(const VaeRun& run)
{
    std::string out = "stage,step,l1,kl,total\n";
    auto emit = [&](const char* stage, const std::vector<VaeTrainRecord>& trace) {
        for (const auto& r : trace) out += std::string(stage) + "," + std::to_string(r.step) + "," + fmt(r.l1) + "," + fmt(r.kl) + "," + fmt(r.total) + "\n";
    };
    emit("base", run.base_trace);
    emit("cond", run.cond_trace);
    return out;
}

std::string dit_trace_csv(const std::vector<DitTrainRecord>& trace)
{
    std::string out = "step,loss\n";
    for (const auto& r : trace) out += std::to_string(r.step) + "," + fmt(r.loss) + "\n";
    return out;
}

json trace_to_json(const std::vector<DitTrainRecord>& trace)
{
    json j = json::array();
    for (const auto& r : trace) j.push_back({r.step, r.loss});
    return j;
}

std::vector<DitTrainRecord> trace_from_json(const json& j)
{
    std::vector<DitTrainRecord> out;
    for (const auto& e : j) out.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
    return out;
}

std::shared_ptr<ToyVae<float>> load_vae(const PipelineConfig& cfg, const fs::path& base)
{
    if (!checkpoint_exists(base)) throw std::runtime_error("missing checkpoint " + base.string() + ".json/.bin");
    auto vae = std::make_shared<ToyVae<float>>(cfg.codec, 0);
    assign_params(vae->params(), load_checkpoint(base).params);
    return vae;
}

}  // namespace

std::vector<fs::path> cmd_gen_data(const PipelineConfig& cfg, const fs::path& out)
{
    std::vector<fs::path> manifests;
    for (const bool eval : {false, true}) {
        const fs::path dir = out / (eval ? "eval" : "train");
        fs::create_directories(dir);
        const std::vector<FrameSequence> clips = synthetic_corpus(cfg.data, eval);
        if (clips.empty()) std::cerr << "warning: no " << (eval ? "eval" : "train") << " clips requested\n";
        for (std::size_t i = 0; i < clips.size(); ++i) {
            const fs::path clip_dir = dir / clip_name(static_cast<int>(i));
            save_video(clips[i], clip_dir);
            manifests.push_back(clip_dir / "manifest.json");
        }
    }
    return manifests;
}

std::vector<FrameSequence> load_corpus(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
    std::vector<fs::path> manifests;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json")) manifests.push_back(e.path() / "manifest.json");
    std::sort(manifests.begin(), manifests.end());
    std::vector<FrameSequence> out;
    for (const auto& m : manifests) out.push_back(load_video(m));
    return out;
}

VaeRun cmd_train_vae(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& out)
{
    const std::vector<FrameSequence> clips = load_corpus(corpus / "train");
    if (clips.empty()) throw std::runtime_error("empty training corpus: " + (corpus / "train").string());
    VaeRun run = train_vae_recipe(cfg, clips);
    fs::create_directories(out);
    save_checkpoint(Checkpoint{run.vae.params(), std::nullopt, json{{"kind", "vae"}, {"codec", config_to_json(cfg)["codec"]}}}, out / "vae");
    write_text(out / "vae_trace.csv", vae_trace_csv(run));
    return run;
}

DitRun cmd_train_dit(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& ckpt, const DitRunOptions& opt)
{
    const std::vector<FrameSequence> clips = load_corpus(corpus / "train");
    if (clips.empty()) throw std::runtime_error("empty training corpus: " + (corpus / "train").string());
    const VaeCodec codec(load_vae(cfg, ckpt / "vae"));
    LatentNorm norm;
    const std::vector<LatentExample> cache = build_latent_cache(cfg, codec, clips, norm, true);

    Denoiser<float> model(cfg.denoiser, cfg.latent_layout(), cfg.training.seed);
    Adam<float> adam;
    adam.reset(model.params());
    DitRun run;
    const fs::path state = ckpt / "dit_state";
    if (opt.resume && checkpoint_exists(state)) {
        Checkpoint c = load_checkpoint(state);
        assign_params(model.params(), c.params);
        if (!c.optimizer) throw std::runtime_error("resume state lacks optimizer moments: " + state.string());
        adam = *c.optimizer;
        run.next_step = c.meta.at("next_step").get<int>();
        run.trace = trace_from_json(c.meta.at("trace"));
    }
    auto save_state = [&](int next_step) {
        save_checkpoint(Checkpoint{model.params(), adam, json{{"kind", "dit_state"}, {"next_step", next_step}, {"trace", trace_to_json(run.trace)}}},
                        state);
    };
    const int end = std::min(cfg.training.steps, opt.stop_after.value_or(cfg.training.steps));
    const int every = cfg.training.checkpoint_every;
    while (run.next_step < end) {
        const int stop = every > 0 ? std::min(end, (run.next_step / every + 1) * every) : end;
        const auto part = train_dit(model, adam, cache, cfg, run.next_step, stop);
        run.trace.insert(run.trace.end(), part.begin(), part.end());
        run.next_step = stop;
        save_state(run.next_step);
    }
    if (!checkpoint_exists(state)) save_state(run.next_step);
    run.finished = run.next_step >= cfg.training.steps;
    if (run.finished) {
        save_checkpoint(Checkpoint{model.params(), std::nullopt,
                                   json{{"kind", "dit"}, {"denoiser", config_to_json(cfg)["denoiser"]}, {"latent_norm", norm.to_json()}}},
                        ckpt / "dit");
        write_text(ckpt / "dit_trace.csv", dit_trace_csv(run.trace));
    }
    return run;
}

json cmd_interpolate(const PipelineConfig& cfg, const InterpolateRequest& req)
{
    const Models models = load_models(cfg, req.ckpt);
    const FrameSequence lq = load_video(req.lq_manifest);
    InferenceOptions opt = inference_options(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const InferenceResult res = run_inference(lq, req.s, models, cfg, opt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_video(res.video, req.out);

    json report{{"mode", to_string(opt.mode)},
                {"seed", opt.seed},
                {"s", req.s},
                {"steps", opt.steps},
                {"shift", opt.shift},
                {"input_frames", lq.length()},
                {"frame_count", res.video.length()},
                {"padded_frames", res.padded_frames},
                {"chunk_count", res.chunk_count},
                {"peak_resident_chunks", res.peak_resident_chunks},
                {"seconds", seconds},
                {"flicker", flicker(res.video)}};
    if (req.gt_manifest) {
        const FrameSequence gt = load_video(*req.gt_manifest);
        if (gt.length() != res.video.length() || gt.height() != res.video.height() || gt.width() != res.video.width())
            throw std::invalid_argument("ground truth does not match the output geometry");
        json per_frame = json::array();
        for (int t = 0; t < gt.length(); ++t)
            per_frame.push_back(psnr(FrameSequence(gt.frames.frames_range(t, 1)), FrameSequence(res.video.frames.frames_range(t, 1))));
        report["psnr"] = psnr(gt, res.video);
        report["psnr_per_frame"] = per_frame;
        if (req.s > 1) report["interpolated_psnr"] = interpolated_psnr(gt, res.video, req.s);
    }
    write_text(req.out / "report.json", report.dump(2) + "\n");
    return report;
}

AblationTable cmd_ablate(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& ckpt, const fs::path& out_csv)
{
    const std::vector<FrameSequence> clips = load_corpus(corpus / "eval");
    if (clips.empty()) throw std::runtime_error("empty eval corpus: " + (corpus / "eval").string());
    const Models models = load_models(cfg, ckpt);
    const VaeCodec codec(models.vae);
    const int s = cfg.inference.s;

    struct Variant {
        const char* name;
        InferenceMode mode;
        bool cond;
    };
    const Variant variants[] = {{"causal/uncond", InferenceMode::causal, false},
                                {"skip-concat/uncond", InferenceMode::skip_concat, false},
                                {"skip-concat/cond", InferenceMode::skip_concat, true}};
    AblationTable table;
    for (const auto& v : variants) table.rows.push_back({v.name, 0, 0, 0});
    table.rows.push_back({"zero-pad", 0, 0, 0});
    table.rows.push_back({"nearest", 0, 0, 0});

    const double n = static_cast<double>(clips.size());
    for (const auto& clip : clips) {
        const FrameSequence gt = trim_for_factor(clip, s);
        const FrameSequence lq = downsample_temporal(gt, s);
        for (std::size_t i = 0; i < 3; ++i) {
            InferenceOptions opt = inference_options(cfg);
            opt.mode = variants[i].mode;
            opt.cond_decoder = variants[i].cond;
            const InferenceResult res = run_inference(lq, s, models, cfg, opt);
            table.rows[i].psnr += interpolated_psnr(gt, res.video, s) / n;
            table.rows[i].flicker += flicker(res.video) / n;
            table.rows[i].keyframe_psnr += res.generated_keyframe_psnr / n;
        }
        const FrameSequence base = repeat_previous(lq, s);
        table.baseline_psnr += interpolated_psnr(gt, base, s) / n;
        table.baseline_flicker += flicker(base) / n;
        table.rows[3].keyframe_psnr += keyframe_reconstruction_psnr(zero_pad_upsample(lq, s), gt, s, codec, cfg) / n;
        table.rows[4].keyframe_psnr += keyframe_reconstruction_psnr(nn_upsample(lq, s), gt, s, codec, cfg) / n;
    }
    write_text(out_csv, ablation_csv(table));
    return table;
}

std::string ablation_csv(const AblationTable& table)
{
    std::string out = "row,psnr,flicker,keyframe_psnr\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const AblationRow& r = table.rows[i];
        if (i < 3)
            out += r.name + "," + fmt(r.psnr) + "," + fmt(r.flicker) + "," + fmt(r.keyframe_psnr) + "\n";
        else
            out += r.name + ",,," + fmt(r.keyframe_psnr) + "\n";
    }
    return out;
}

}  // namespace cvfi
