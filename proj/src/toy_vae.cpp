#include "cvfi/toy_vae.hpp"

#include "cvfi/conditioning.hpp"
#include "cvfi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvfi {

void validate(const VaeConfig& cfg)
{
    if (cfg.level_count < 1) throw std::invalid_argument("VAE level_count must be >= 1");
    if (cfg.spatial_stride != (1 << (cfg.level_count - 1)))
        throw std::invalid_argument("VAE spatial stride " + std::to_string(cfg.spatial_stride) + " must equal 2^(level_count-1) = " +
                                    std::to_string(1 << (cfg.level_count - 1)));
    if (cfg.temporal_stride < 1 || (cfg.temporal_stride & (cfg.temporal_stride - 1)) != 0)
        throw std::invalid_argument("VAE temporal stride must be a power of two");
    if (cfg.temporal_stride > cfg.spatial_stride)
        throw std::invalid_argument("VAE temporal stride cannot exceed the spatial stride (one temporal halving per level)");
    if (cfg.latent_channels < 1) throw std::invalid_argument("VAE latent_channels must be >= 1");
    if (cfg.base_width < 1 || 2 * cfg.base_width > 64) throw std::invalid_argument("VAE base_width must be in [1, 32]");
}

double scheduled_lr(double lr, int warmup_steps, double lr_min_ratio, int step, int total)
{
    if (warmup_steps > 0 && step < warmup_steps) return lr * (step + 1) / warmup_steps;
    const int span = std::max(1, total - warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
    return lr * (lr_min_ratio + (1.0 - lr_min_ratio) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress)));
}

namespace {

struct SampleSpec {
    int clip = 0;
    int s = 1;
    int t0 = 0, y0 = 0, x0 = 0;
    Tensor4f eps;
};

struct SampleResult {
    std::vector<MatXf> grads;
    double l1 = 0, kl = 0;
};

SampleResult run_base_sample(const ToyVae<float>& vae, const std::vector<bool>& mask, const Tensor4f& x, const Tensor4f& eps)
{
    SampleResult r;
    r.grads = vae.params().zeros_like();
    Tape<float> t(true);
    t.bind(vae.params(), &mask);
    const auto enc = vae.encode(t, {t.constant(x.matrix()), x.shape()});
    const Var<float> z = enc.mean.v + exp(scale(enc.log_variance.v, 0.5f)) * t.constant(eps.matrix());
    const auto rec = vae.decode(t, {z, enc.mean.s}, nullptr);
    const Var<float> l1 = l1_loss(rec.v, std::make_shared<const MatXf>(x.matrix()));
    const Var<float> kl = kl_normal(enc.mean.v, enc.log_variance.v);
    const Var<float> loss = l1 + scale(kl, static_cast<float>(kKlWeight));
    t.backward(loss);
    t.accumulate_param_grads(r.grads);
    r.l1 = l1.value()(0, 0);
    r.kl = kl.value()(0, 0);
    return r;
}

SampleResult run_cond_sample(const ToyVae<float>& vae, const std::vector<bool>& mask, const Tensor4f& x, const Tensor4f& lq)
{
    SampleResult r;
    r.grads = vae.params().zeros_like();
    const Tensor4f z = vae_encode(vae, x).mean;
    Tape<float> t(true);
    t.bind(vae.params(), &mask);
    const Vol<float> lq_vol{t.constant(lq.matrix()), lq.shape()};
    const auto rec = vae.decode(t, {t.constant(z.matrix()), z.shape()}, &lq_vol);
    const Var<float> l1 = l1_loss(rec.v, std::make_shared<const MatXf>(x.matrix()));
    t.backward(l1);
    t.accumulate_param_grads(r.grads);
    r.l1 = l1.value()(0, 0);
    return r;
}

}  // namespace

std::vector<VaeTrainRecord> train_vae(ToyVae<float>& vae, Adam<float>& optimizer, const std::vector<FrameSequence>& corpus,
                                      const VaeTrainOptions& opt, int start_step, int end_step)
{
    if (end_step < 0) end_step = opt.steps;
    if (corpus.empty()) throw std::invalid_argument("train_vae: empty corpus");
    const VaeConfig& cfg = vae.config();
    if (opt.crop % cfg.spatial_stride || opt.crop_frames % cfg.temporal_stride)
        throw std::invalid_argument("train_vae: crop size must be divisible by the codec strides");
    for (const auto& clip : corpus)
        if (clip.length() < opt.crop_frames || clip.height() < opt.crop || clip.width() < opt.crop)
            throw std::invalid_argument("train_vae: clip smaller than the training crop");
    const bool cond = opt.stage == VaeTrainOptions::Stage::cond;
    using Part = ToyVae<float>::Part;
    const std::vector<bool> mask = cond ? vae.mask({Part::cond}) : vae.mask({Part::encoder, Part::decoder});
    const int latent_t = opt.crop_frames / cfg.temporal_stride, latent_hw = opt.crop / cfg.spatial_stride;

    std::vector<VaeTrainRecord> trace;
    for (int step = start_step; step < end_step; ++step) {
        optimizer.lr = scheduled_lr(opt.lr, opt.warmup_steps, opt.lr_min_ratio, step, opt.steps);
        std::seed_seq seq{static_cast<std::uint64_t>(opt.seed), static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(cond ? 2 : 1)};
        std::mt19937_64 rng(seq);
        std::vector<SampleSpec> specs(opt.batch);
        for (auto& sp : specs) {
            sp.clip = std::uniform_int_distribution<int>(0, static_cast<int>(corpus.size()) - 1)(rng);
            const FrameSequence& clip = corpus[sp.clip];
            int usable = clip.length();
            if (cond) {
                sp.s = std::uniform_int_distribution<int>(opt.s_min, opt.s_max)(rng);
                usable = sp.s * ((clip.length() - 1) / sp.s) + 1;
                if (usable < opt.crop_frames) usable = clip.length();
            }
            sp.t0 = std::uniform_int_distribution<int>(0, usable - opt.crop_frames)(rng);
            sp.y0 = std::uniform_int_distribution<int>(0, clip.height() - opt.crop)(rng);
            sp.x0 = std::uniform_int_distribution<int>(0, clip.width() - opt.crop)(rng);
            if (!cond) {
                sp.eps = Tensor4f(latent_t, latent_hw, latent_hw, cfg.latent_channels);
                std::normal_distribution<float> normal(0.0f, 1.0f);
                for (Eigen::Index i = 0; i < sp.eps.matrix().size(); ++i) sp.eps.matrix().data()[i] = normal(rng);
            }
        }

        std::vector<SampleResult> results(opt.batch);
        parallel_for(opt.batch, opt.threads, [&](int b) {
            const SampleSpec& sp = specs[b];
            const FrameSequence& clip = corpus[sp.clip];
            const Tensor4f x = clip.frames.crop(sp.t0, opt.crop_frames, sp.y0, opt.crop, sp.x0, opt.crop);
            if (cond) {
                const int usable = sp.s * ((clip.length() - 1) / sp.s) + 1;
                FrameSequence head(clip.frames.frames_range(0, usable));
                const FrameSequence lq_up = nn_upsample(downsample_temporal(head, sp.s), sp.s);
                const Tensor4f lq = lq_up.frames.crop(sp.t0, opt.crop_frames, sp.y0, opt.crop, sp.x0, opt.crop);
                results[b] = run_cond_sample(vae, mask, x, lq);
            } else {
                results[b] = run_base_sample(vae, mask, x, sp.eps);
            }
        });

        std::vector<MatXf> grads = vae.params().zeros_like();
        VaeTrainRecord rec;
        rec.step = step;
        for (const auto& r : results) {
            for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += r.grads[i];
            rec.l1 += r.l1 / opt.batch;
            rec.kl += r.kl / opt.batch;
        }
        rec.total = rec.l1 + (cond ? 0.0 : kKlWeight * rec.kl);
        if (!std::isfinite(rec.total)) throw std::runtime_error("VAE training diverged (non-finite loss) at step " + std::to_string(step));
        for (auto& g : grads) g /= static_cast<float>(opt.batch);
        optimizer.update(vae.params(), grads, &mask);
        trace.push_back(rec);
    }
    return trace;
}

}  // namespace cvfi
