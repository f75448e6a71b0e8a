#include "cvfi/pipeline.hpp"

#include "cvfi/checkpoint.hpp"
#include "cvfi/conditioning.hpp"
#include "cvfi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace cvfi {

using nlohmann::json;

std::vector<FrameSequence> synthetic_corpus(const DataConfig& data, bool eval)
{
    std::vector<FrameSequence> out;
    const int count = eval ? data.eval_count : data.train_count;
    const std::uint64_t base = data.seed + (eval ? 1000000u : 0u);
    for (int i = 0; i < count; ++i) out.push_back(gen_synthetic(data.spec, data.frames, data.height, data.width, base + static_cast<std::uint64_t>(i)));
    return out;
}

Tensor4f LatentNorm::apply(const Tensor4f& z) const
{
    if (z.channels() != mean.size()) throw std::invalid_argument("latent norm: channel mismatch");
    MatXf m = (z.matrix().rowwise() - mean).array().rowwise() / std.array();
    return Tensor4f(z.shape(), std::move(m));
}

Tensor4f LatentNorm::invert(const Tensor4f& z) const
{
    if (z.channels() != mean.size()) throw std::invalid_argument("latent norm: channel mismatch");
    MatXf m = (z.matrix().array().rowwise() * std.array()).matrix().rowwise() + mean;
    return Tensor4f(z.shape(), std::move(m));
}

json LatentNorm::to_json() const
{
    return json{{"mean", std::vector<float>(mean.data(), mean.data() + mean.size())}, {"std", std::vector<float>(std.data(), std.data() + std.size())}};
}

LatentNorm LatentNorm::from_json(const json& j)
{
    const auto m = j.at("mean").get<std::vector<float>>();
    const auto s = j.at("std").get<std::vector<float>>();
    if (m.size() != s.size() || m.empty()) throw std::invalid_argument("latent norm: malformed statistics");
    LatentNorm n;
    n.mean = Eigen::Map<const RowVecX<float>>(m.data(), static_cast<Eigen::Index>(m.size()));
    n.std = Eigen::Map<const RowVecX<float>>(s.data(), static_cast<Eigen::Index>(s.size()));
    return n;
}

LatentNorm LatentNorm::identity(int channels)
{
    return {RowVecX<float>::Zero(channels), RowVecX<float>::Ones(channels)};
}

LatentNorm fit_latent_norm(const std::vector<Tensor4f>& latents)
{
    if (latents.empty()) throw std::invalid_argument("fit_latent_norm: no latents");
    const int c = latents[0].channels();
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(c), sq = Eigen::RowVectorXd::Zero(c);
    double n = 0;
    for (const auto& z : latents) {
        const MatXd m = z.matrix().cast<double>();
        sum += m.colwise().sum();
        sq += m.array().square().matrix().colwise().sum();
        n += static_cast<double>(m.rows());
    }
    const Eigen::RowVectorXd mean = sum / n;
    const Eigen::RowVectorXd var = (sq / n - mean.array().square().matrix()).cwiseMax(1e-12);
    return {mean.cast<float>(), var.cwiseSqrt().cast<float>()};
}

FrameSequence trim_for_factor(const FrameSequence& clip, int s)
{
    if (s < 1) throw std::invalid_argument("trim_for_factor: s must be >= 1");
    const int usable = s * ((clip.length() - 1) / s) + 1;
    return FrameSequence(clip.frames.frames_range(0, usable), clip.frame_rate_hint);
}

ConditionVideo make_condition(const FrameSequence& lq, int s, int chunk_len)
{
    ConditionVideo c;
    const FrameSequence up = nn_upsample(lq, s);
    c.frames_hq = up.length();
    c.padded = padded_length(c.frames_hq, chunk_len);
    c.lq_up = pad_repeat_last(up.frames, c.padded);
    c.mask = pad_zeros(build_mask(c.frames_hq, s, lq.height(), lq.width()).values, c.padded);
    return c;
}

std::vector<LatentExample> build_latent_cache(const PipelineConfig& cfg, const FrameCodec& codec, const std::vector<FrameSequence>& corpus,
                                              LatentNorm& norm, bool fit_norm)
{
    std::vector<LatentExample> out;
    for (const auto& clip : corpus) {
        const TilePlan tiles = plan_tiles(clip.height(), clip.width(), cfg.tile, cfg.tile_stride);
        for (int s = cfg.training.s_min; s <= cfg.training.s_max; ++s) {
            const FrameSequence x = trim_for_factor(clip, s);
            const ConditionVideo cond = make_condition(downsample_temporal(x, s), s, cfg.chunk_len);
            const ChunkPlan chunks = plan_chunks(cond.padded, cfg.chunk_len);
            LatentExample e;
            e.s = s;
            e.gt = tiled_encode(FrameSequence(pad_repeat_last(x.frames, cond.padded)), codec, tiles, chunks).values;
            e.lq = tiled_encode(FrameSequence(cond.lq_up), codec, tiles, chunks).values;
            e.mask = encode_mask(cond.mask, codec.spatial_stride(), codec.temporal_stride());
            out.push_back(std::move(e));
        }
    }
    if (fit_norm) {
        std::vector<Tensor4f> gts;
        for (const auto& e : out) gts.push_back(e.gt);
        norm = fit_latent_norm(gts);
    }
    for (auto& e : out) {
        e.gt = norm.apply(e.gt);
        e.lq = norm.apply(e.lq);
    }
    return out;
}

namespace {

struct DitSample {
    Tensor4f input;
    Tensor4f target;
    std::vector<double> taus;
    TokenLayout layout;
};

}  // namespace

std::vector<DitTrainRecord> train_dit(Denoiser<float>& model, Adam<float>& optimizer, const std::vector<LatentExample>& cache,
                                      const PipelineConfig& cfg, int start_step, int end_step, const std::function<void(int)>& on_step_done)
{
    if (cache.empty()) throw std::invalid_argument("train_dit: empty latent cache");
    const DitTrainingConfig& tc = cfg.training;
    const LatentLayout layout = model.layout();
    const int F = layout.chunk_frames, patch = model.config().token_patch;
    const int crop = tc.crop / cfg.codec.spatial_stride;
    std::vector<DitTrainRecord> trace;
    for (int step = start_step; step < end_step; ++step) {
        std::seed_seq seq{static_cast<std::uint64_t>(tc.seed), static_cast<std::uint64_t>(step), std::uint64_t{3}};
        std::mt19937_64 rng(seq);
        std::vector<DitSample> samples(tc.batch);
        for (auto& sm : samples) {
            const LatentExample& e = cache[std::uniform_int_distribution<std::size_t>(0, cache.size() - 1)(rng)];
            const int n_chunks = e.gt.frames() / F;
            const int n = std::uniform_int_distribution<int>(1, std::min(tc.max_window_chunks, n_chunks))(rng);
            const int c0 = std::uniform_int_distribution<int>(0, n_chunks - n)(rng);
            const int cy = std::uniform_int_distribution<int>(0, (e.gt.height() - crop) / layout.spatial_chunk)(rng) * layout.spatial_chunk;
            const int cx = std::uniform_int_distribution<int>(0, (e.gt.width() - crop) / layout.spatial_chunk)(rng) * layout.spatial_chunk;
            const Tensor4f x0 = e.gt.crop(c0 * F, n * F, cy, crop, cx, crop);
            ConditionLatent cond{e.lq.crop(c0 * F, n * F, cy, crop, cx, crop), e.mask.crop(c0 * F, n * F, cy, crop, cx, crop)};
            FmSample<float> fm = draw_fm_sample(x0, F, tc.shift_train, rng);
            sm.input = concat_condition(fm.noised, cond);
            sm.target = std::move(fm.target);
            sm.taus = std::move(fm.taus);
            sm.layout = model.token_layout(x0.shape());
            sm.layout.pos_y0 = cy / patch;
            sm.layout.pos_x0 = cx / patch;
        }
        std::vector<std::vector<MatXf>> grads(tc.batch);
        std::vector<double> losses(tc.batch);
        parallel_for(tc.batch, cfg.threads, [&](int b) {
            grads[b] = model.params().zeros_like();
            losses[b] = denoiser_loss_with_grads<float>(model, samples[b].input, samples[b].taus, samples[b].target, &grads[b], 1.0f, &samples[b].layout);
        });
        std::vector<MatXf> total = model.params().zeros_like();
        DitTrainRecord rec;
        rec.step = step;
        for (int b = 0; b < tc.batch; ++b) {
            for (std::size_t i = 0; i < total.size(); ++i) total[i] += grads[b][i];
            rec.loss += losses[b] / tc.batch;
        }
        if (!std::isfinite(rec.loss)) throw std::runtime_error("denoiser training diverged (non-finite loss) at step " + std::to_string(step));
        for (auto& g : total) g /= static_cast<float>(tc.batch);
        optimizer.lr = scheduled_lr(tc.lr, 100, 0.1, step, tc.steps);
        optimizer.update(model.params(), total);
        trace.push_back(rec);
        if (on_step_done) on_step_done(step);
    }
    return trace;
}

InferenceOptions inference_options(const PipelineConfig& cfg)
{
    InferenceOptions o;
    o.mode = cfg.inference.mode;
    o.steps = cfg.inference.steps;
    o.shift = cfg.inference.shift_infer;
    o.skip_period = cfg.inference.skip_period;
    o.max_chunks_per_invocation = cfg.inference.max_chunks_per_invocation;
    o.seed = cfg.inference.seed;
    return o;
}

InferenceResult run_inference(const FrameSequence& lq, int s, const Models& models, const PipelineConfig& cfg, const InferenceOptions& opt)
{
    if (!models.vae || !models.dit) throw std::invalid_argument("run_inference: models not loaded");
    if (lq.length() < 1) throw std::invalid_argument("empty video");
    if (lq.channels() != 3) throw std::invalid_argument("run_inference: expects 3-channel frames");
    InferenceResult res;
    if (s == 1) {
        res.video = lq;
        res.frames_hq = lq.length();
        return res;
    }
    const VaeCodec codec(models.vae);
    const ConditionVideo cond = make_condition(lq, s, cfg.chunk_len);
    const TilePlan tiles = plan_tiles(lq.height(), lq.width(), cfg.tile, cfg.tile_stride);
    const int L = cfg.chunk_len, rs = codec.spatial_stride(), rt = codec.temporal_stride();
    const int N = cond.padded / L;
    res.frames_hq = cond.frames_hq;
    res.padded_frames = cond.padded - cond.frames_hq;
    res.chunk_count = N;
    res.plan = opt.mode == InferenceMode::causal ? plan_causal(N) : plan_skip_concat(N, opt.skip_period);
    const WindowConfig window{opt.max_chunks_per_invocation};
    validate(res.plan, &window);
    const std::vector<int> last = last_use(res.plan);
    const ShiftSchedule schedule = make_schedule(opt.steps, opt.shift);
    const Shape3 chunk_shape{L / rt, lq.height() / rs, lq.width() / rs};
    const int C = codec.latent_channels();

    std::map<int, Tensor4f> latents;
    std::map<int, ConditionLatent> conds;
    auto condition_of = [&](int c) -> const ConditionLatent& {
        auto it = conds.find(c);
        if (it == conds.end()) {
            ConditionLatent cl{models.norm.apply(tiled_encode_chunk(cond.lq_up.frames_range(c * L, L), codec, tiles)),
                               encode_mask(cond.mask.frames_range(c * L, L), rs, rt)};
            it = conds.emplace(c, std::move(cl)).first;
        }
        return it->second;
    };

    Tensor4f out(cond.padded, lq.height(), lq.width(), 3);
    for (std::size_t k = 0; k < res.plan.steps.size(); ++k) {
        const PlanStep& step = res.plan.steps[k];
        std::vector<int> slots = step.targets;
        slots.insert(slots.end(), step.contexts.begin(), step.contexts.end());
        std::sort(slots.begin(), slots.end());
        SampleWindow<float> w;
        w.chunk_shape = chunk_shape;
        w.channels = C;
        std::vector<Tensor4f> lq_parts, mask_parts;
        for (int c : slots) {
            const bool is_target = std::find(step.targets.begin(), step.targets.end(), c) != step.targets.end();
            w.roles.push_back(is_target ? ChunkRole::target : ChunkRole::context);
            w.contexts.push_back(is_target ? nullptr : &latents.at(c));
            const ConditionLatent& cl = condition_of(c);
            lq_parts.push_back(cl.lq_latent);
            mask_parts.push_back(cl.mask_latent);
        }
        const ConditionLatent window_cond{concat_frames(lq_parts), concat_frames(mask_parts)};
        const VelocityFn<float> velocity = [&](const Tensor4f& x, const std::vector<double>& taus) {
            return denoise(*models.dit, x, window_cond, taus).matrix();
        };
        std::seed_seq seq{static_cast<std::uint64_t>(opt.seed), static_cast<std::uint64_t>(k)};
        std::mt19937_64 rng(seq);
        std::vector<Tensor4f> generated = euler_sample(velocity, w, schedule, rng);

        std::size_t g = 0;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (w.roles[i] != ChunkRole::target) continue;
            const int c = slots[i];
            const Tensor4f lq_block = cond.lq_up.frames_range(c * L, L);
            const Tensor4f pixels = tiled_decode_chunk(models.norm.invert(generated[g]), codec, tiles, opt.cond_decoder ? &lq_block : nullptr);
            out.paste(pixels, c * L, 0, 0);
            latents.emplace(c, std::move(generated[g]));
            ++g;
        }
        res.peak_resident_chunks = std::max(res.peak_resident_chunks, static_cast<int>(latents.size()));
        for (int c : slots)
            if (last[c] <= static_cast<int>(k)) {
                latents.erase(c);
                conds.erase(c);
            }
    }

    Tensor4f video = out.frames_range(0, cond.frames_hq);
    video.matrix() = video.matrix().cwiseMax(0.0f).cwiseMin(1.0f);
    double kf_mse = 0;
    for (int i = 0; i < lq.length(); ++i) {
        kf_mse += (video.frame_rows(i * s, 1) - lq.frames.frame_rows(i, 1)).cast<double>().squaredNorm();
        video.frame_rows(i * s, 1) = lq.frames.frame_rows(i, 1);
    }
    res.generated_keyframe_psnr = psnr_from_mse(kf_mse / (static_cast<double>(lq.frames.matrix().size())));
    res.video = FrameSequence(std::move(video), lq.frame_rate_hint);
    return res;
}

FrameSequence repeat_previous(const FrameSequence& lq, int s)
{
    if (s < 1 || lq.length() < 1) throw std::invalid_argument("repeat_previous: bad input");
    const int n = s * (lq.length() - 1) + 1;
    Tensor4f out(n, lq.height(), lq.width(), lq.channels());
    for (int t = 0; t < n; ++t) out.frame_rows(t, 1) = lq.frames.frame_rows(t / s, 1);
    return FrameSequence(std::move(out), lq.frame_rate_hint);
}

double interpolated_psnr(const FrameSequence& gt, const FrameSequence& out, int s)
{
    if (!(gt.frames.shape() == out.frames.shape()) || gt.channels() != out.channels()) throw std::invalid_argument("interpolated_psnr: shape mismatch");
    double sq = 0, n = 0;
    for (int t = 0; t < gt.length(); ++t) {
        if (t % s == 0) continue;
        sq += (gt.frames.frame_rows(t, 1) - out.frames.frame_rows(t, 1)).cast<double>().squaredNorm();
        n += static_cast<double>(gt.frames.frame_rows(t, 1).size());
    }
    if (n == 0) throw std::invalid_argument("interpolated_psnr: no interpolated frames");
    return psnr_from_mse(sq / n);
}

double keyframe_reconstruction_psnr(const FrameSequence& conditioner, const FrameSequence& gt, int s, const FrameCodec& codec,
                                    const PipelineConfig& cfg)
{
    if (conditioner.length() != gt.length()) throw std::invalid_argument("keyframe_reconstruction_psnr: length mismatch");
    const int padded = padded_length(conditioner.length(), cfg.chunk_len);
    const TilePlan tiles = plan_tiles(gt.height(), gt.width(), cfg.tile, cfg.tile_stride);
    const ChunkPlan chunks = plan_chunks(padded, cfg.chunk_len);
    const LatentGrid z = tiled_encode(FrameSequence(pad_repeat_last(conditioner.frames, padded)), codec, tiles, chunks);
    const FrameSequence rec = tiled_decode(z, codec, tiles, chunks);
    double sq = 0, n = 0;
    for (int t = 0; t < gt.length(); t += s) {
        sq += (gt.frames.frame_rows(t, 1) - rec.frames.frame_rows(t, 1)).cast<double>().squaredNorm();
        n += static_cast<double>(gt.frames.frame_rows(t, 1).size());
    }
    return psnr_from_mse(sq / n);
}

VaeRun train_vae_recipe(const PipelineConfig& cfg, const std::vector<FrameSequence>& corpus)
{
    VaeRun run{ToyVae<float>(cfg.codec, cfg.vae_training.seed), {}, {}};
    VaeTrainOptions opt;
    opt.batch = cfg.vae_training.batch;
    opt.crop = cfg.vae_training.crop;
    opt.crop_frames = cfg.chunk_len;
    opt.lr = cfg.vae_training.lr;
    opt.seed = cfg.vae_training.seed;
    opt.threads = cfg.threads;
    opt.s_min = cfg.training.s_min;
    opt.s_max = cfg.training.s_max;
    opt.stage = VaeTrainOptions::Stage::base;
    opt.steps = cfg.vae_training.steps;
    Adam<float> base_opt;
    run.base_trace = train_vae(run.vae, base_opt, corpus, opt);
    opt.stage = VaeTrainOptions::Stage::cond;
    opt.steps = cfg.vae_training.cond_steps;
    Adam<float> cond_opt;
    run.cond_trace = train_vae(run.vae, cond_opt, corpus, opt);
    return run;
}

void save_models(const Models& models, const PipelineConfig& cfg, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const json c = config_to_json(cfg);
    save_checkpoint(Checkpoint{models.vae->params(), std::nullopt, json{{"kind", "vae"}, {"codec", c["codec"]}}}, dir / "vae");
    save_checkpoint(Checkpoint{models.dit->params(), std::nullopt,
                               json{{"kind", "dit"}, {"denoiser", c["denoiser"]}, {"latent_norm", models.norm.to_json()}}},
                    dir / "dit");
}

Models load_models(const PipelineConfig& cfg, const std::filesystem::path& dir)
{
    for (const char* name : {"vae", "dit"})
        if (!checkpoint_exists(dir / name)) throw std::runtime_error("missing checkpoint " + (dir / name).string() + ".json/.bin");
    Models m;
    auto vae = std::make_shared<ToyVae<float>>(cfg.codec, 0);
    assign_params(vae->params(), load_checkpoint(dir / "vae").params);
    const Checkpoint dit_ckpt = load_checkpoint(dir / "dit");
    auto dit = std::make_shared<Denoiser<float>>(cfg.denoiser, cfg.latent_layout(), 0);
    assign_params(dit->params(), dit_ckpt.params);
    if (!dit_ckpt.meta.contains("latent_norm")) throw std::runtime_error("denoiser checkpoint lacks latent normalization");
    m.norm = LatentNorm::from_json(dit_ckpt.meta["latent_norm"]);
    m.vae = std::move(vae);
    m.dit = std::move(dit);
    return m;
}

}  // namespace cvfi
