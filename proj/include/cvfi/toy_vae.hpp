#ifndef CVFI_TOY_VAE_HPP
#define CVFI_TOY_VAE_HPP

#include "cvfi/autograd.hpp"
#include "cvfi/optim.hpp"
#include "cvfi/tiling.hpp"
#include "cvfi/video_io.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace cvfi {

struct VaeConfig {
    int spatial_stride = 4;
    int temporal_stride = 2;
    int latent_channels = 4;
    int base_width = 16;
    int level_count = 3;
    double init_log_variance = -8.0;
};

/// Throws std::invalid_argument on inconsistent strides/levels.
void validate(const VaeConfig& cfg);

template <typename Scalar>
struct LatentStats {
    Tensor4<Scalar> mean;
    Tensor4<Scalar> log_variance;
};

struct VaeLoss {
    double l1 = 0;
    double kl = 0;
    double total = 0;
};

inline constexpr double kKlWeight = 1e-6;

/// Small strided-convolution VAE over (frames × h × w × 3) blocks.
///
/// Decoder levels run coarse to fine (level 0 is latent resolution). The
/// conditional branch mirrors the decoder level stack: at every level the
/// low-frame-rate pixels are pooled to that level's resolution, passed
/// through a conv + SiLU, and added to the decoder activation through a
/// zero-initialized 1×1×1 projection.
template <typename Scalar>
class ToyVae {
public:
    enum class Part { encoder, decoder, cond };

    ToyVae(const VaeConfig& cfg, std::uint64_t seed) : cfg_(cfg)
    {
        validate(cfg_);
        std::mt19937_64 rng(seed);
        const int L = cfg_.level_count;
        const Conv3dGeometry k3;
        auto conv = [&](const std::string& name, int cin, int cout, int taps, Part part, bool zero = false) {
            const int fan_in = taps * cin;
            const int w = params_.add(name + ".w", zero ? MatX<Scalar>::Zero(fan_in, cout)
                                                         : init_uniform<Scalar>(fan_in, cout, fan_in, rng, std::sqrt(6.0)));
            params_.add(name + ".b", MatX<Scalar>::Zero(1, cout));
            part_.push_back(part);
            part_.push_back(part);
            return w;
        };
        enc_in_ = conv("enc.in", 3, width(L - 1), k3.taps(), Part::encoder);
        for (int l = L - 2; l >= 0; --l) enc_down_.push_back(conv("enc.down" + std::to_string(l), width(l + 1), width(l), k3.taps(), Part::encoder));
        enc_mid_ = conv("enc.mid", width(0), width(0), k3.taps(), Part::encoder);
        enc_out_ = conv("enc.out", width(0), 2 * cfg_.latent_channels, k3.taps(), Part::encoder);
        params_.values[enc_out_ + 1].rightCols(cfg_.latent_channels).setConstant(static_cast<Scalar>(cfg_.init_log_variance));

        dec_in_ = conv("dec.in", cfg_.latent_channels, width(0), k3.taps(), Part::decoder);
        dec_mid_ = conv("dec.mid", width(0), width(0), k3.taps(), Part::decoder);
        for (int l = 0; l + 1 < L; ++l) dec_up_.push_back(conv("dec.up" + std::to_string(l + 1), width(l), width(l + 1), k3.taps(), Part::decoder));
        dec_out_ = conv("dec.out", width(L - 1), 3, k3.taps(), Part::decoder);

        for (int l = 0; l < L; ++l) {
            cond_feat_.push_back(conv("cond.feat" + std::to_string(l), 3, width(l), k3.taps(), Part::cond));
            cond_zero_.push_back(conv("cond.zero" + std::to_string(l), width(l), width(l), 1, Part::cond, true));
        }
    }

    const VaeConfig& config() const { return cfg_; }
    ParamSet<Scalar>& params() { return params_; }
    const ParamSet<Scalar>& params() const { return params_; }

    /// Trainable mask selecting the given parts.
    std::vector<bool> mask(std::initializer_list<Part> parts) const
    {
        std::vector<bool> m(part_.size(), false);
        for (std::size_t i = 0; i < part_.size(); ++i)
            for (Part p : parts) m[i] = m[i] || part_[i] == p;
        return m;
    }

    int width(int level) const { return level == cfg_.level_count - 1 ? cfg_.base_width : 2 * cfg_.base_width; }

    /// Shape of decoder level `level` for a pixel block of shape `pixels`.
    Shape3 level_shape(Shape3 pixels, int level) const
    {
        const int L = cfg_.level_count;
        const int log_rt = ilog2(cfg_.temporal_stride);
        return {pixels.t / cfg_.temporal_stride * (1 << std::min(level, log_rt)), pixels.h >> (L - 1 - level), pixels.w >> (L - 1 - level)};
    }

    void check_block(Shape3 s) const
    {
        if (s.t % cfg_.temporal_stride || s.h % cfg_.spatial_stride || s.w % cfg_.spatial_stride)
            throw std::invalid_argument("VAE block " + to_string(s) + " not divisible by strides (t " + std::to_string(cfg_.temporal_stride) +
                                        ", s " + std::to_string(cfg_.spatial_stride) + ")");
    }

    struct Encoded {
        Vol<Scalar> mean;
        Vol<Scalar> log_variance;
    };

    Encoded encode(Tape<Scalar>& t, Vol<Scalar> x) const
    {
        check_block(x.s);
        if (x.v.cols() != 3) throw std::invalid_argument("VAE expects 3-channel frames");
        const int L = cfg_.level_count;
        const int log_rt = ilog2(cfg_.temporal_stride);
        Vol<Scalar> h = act(conv(t, x, enc_in_, Conv3dGeometry{}));
        for (int i = 0; i < L - 1; ++i) {
            const int level = L - 2 - i;
            Conv3dGeometry down;
            down.st = level < log_rt ? 2 : 1;
            down.sh = down.sw = 2;
            h = act(conv(t, h, enc_down_[i], down));
        }
        h = {h.v + act(conv(t, h, enc_mid_, Conv3dGeometry{})).v, h.s};
        const Vol<Scalar> stats = conv(t, h, enc_out_, Conv3dGeometry{});
        const int c = cfg_.latent_channels;
        return {{slice_cols(stats.v, 0, c), stats.s}, {slice_cols(stats.v, c, c), stats.s}};
    }

    /// Plain decoder when `lq` is null; conditional decoder otherwise.
    Vol<Scalar> decode(Tape<Scalar>& t, Vol<Scalar> z, const Vol<Scalar>* lq) const
    {
        if (z.v.cols() != cfg_.latent_channels)
            throw std::invalid_argument("latent has " + std::to_string(z.v.cols()) + " channels, VAE expects " + std::to_string(cfg_.latent_channels));
        const int L = cfg_.level_count;
        const int log_rt = ilog2(cfg_.temporal_stride);
        const Shape3 pixels{z.s.t * cfg_.temporal_stride, z.s.h * cfg_.spatial_stride, z.s.w * cfg_.spatial_stride};
        if (lq && !(lq->s == pixels))
            throw std::invalid_argument("conditional decode: LQ block " + to_string(lq->s) + " misaligned with latent block (expects " +
                                        to_string(pixels) + ")");
        Vol<Scalar> h = act(conv(t, z, dec_in_, Conv3dGeometry{}));
        h = {h.v + act(conv(t, h, dec_mid_, Conv3dGeometry{})).v, h.s};
        if (lq) h = inject(t, h, *lq, pixels, 0);
        for (int l = 0; l + 1 < L; ++l) {
            h = upsample_nearest(h, l < log_rt ? 2 : 1, 2);
            h = act(conv(t, h, dec_up_[l], Conv3dGeometry{}));
            if (lq) h = inject(t, h, *lq, pixels, l + 1);
        }
        const Vol<Scalar> out = conv(t, h, dec_out_, Conv3dGeometry{});
        return {sigmoid(out.v), out.s};
    }

private:
    static int ilog2(int v)
    {
        int r = 0;
        while ((1 << r) < v) ++r;
        return r;
    }

    Vol<Scalar> conv(Tape<Scalar>& t, Vol<Scalar> x, int w_slot, const Conv3dGeometry& g) const
    {
        const Eigen::Index taps = params_.values[w_slot].rows() / x.v.cols();
        Conv3dGeometry geo = g;
        if (taps == 1) geo = Conv3dGeometry{1, 1, 1, 1, 1, 1, 0, 0, 0};
        return conv3d(x, t.param(w_slot), t.param(w_slot + 1), geo);
    }

    static Vol<Scalar> act(Vol<Scalar> x) { return {silu(x.v), x.s}; }

    Vol<Scalar> inject(Tape<Scalar>& t, Vol<Scalar> h, const Vol<Scalar>& lq, Shape3 pixels, int level) const
    {
        const Shape3 ls = level_shape(pixels, level);
        Vol<Scalar> pooled = avg_pool(lq, pixels.t / ls.t, pixels.h / ls.h);
        Vol<Scalar> feat = act(conv(t, pooled, cond_feat_[level], Conv3dGeometry{}));
        Vol<Scalar> proj = conv(t, feat, cond_zero_[level], Conv3dGeometry{});
        return {h.v + proj.v, h.s};
    }

    VaeConfig cfg_;
    ParamSet<Scalar> params_;
    std::vector<Part> part_;
    int enc_in_ = -1, enc_mid_ = -1, enc_out_ = -1;
    std::vector<int> enc_down_;
    int dec_in_ = -1, dec_mid_ = -1, dec_out_ = -1;
    std::vector<int> dec_up_;
    std::vector<int> cond_feat_, cond_zero_;
};

template <typename Scalar>
LatentStats<Scalar> vae_encode(const ToyVae<Scalar>& vae, const Tensor4<Scalar>& block)
{
    Tape<Scalar> t(false);
    t.bind(vae.params());
    const auto enc = vae.encode(t, {t.constant(block.matrix()), block.shape()});
    return {Tensor4<Scalar>(enc.mean.s, enc.mean.v.value()), Tensor4<Scalar>(enc.log_variance.s, enc.log_variance.v.value())};
}

template <typename Scalar>
Tensor4<Scalar> vae_decode(const ToyVae<Scalar>& vae, const Tensor4<Scalar>& z)
{
    Tape<Scalar> t(false);
    t.bind(vae.params());
    const auto out = vae.decode(t, {t.constant(z.matrix()), z.shape()}, nullptr);
    return Tensor4<Scalar>(out.s, out.v.value());
}

template <typename Scalar>
Tensor4<Scalar> cond_decode(const ToyVae<Scalar>& vae, const Tensor4<Scalar>& z, const Tensor4<Scalar>& lq_block)
{
    Tape<Scalar> t(false);
    t.bind(vae.params());
    const Vol<Scalar> lq{t.constant(lq_block.matrix()), lq_block.shape()};
    const auto out = vae.decode(t, {t.constant(z.matrix()), z.shape()}, &lq);
    return Tensor4<Scalar>(out.s, out.v.value());
}

/// L1 reconstruction plus 1e-6-weighted KL to the unit normal.
template <typename Scalar>
VaeLoss vae_loss(const Tensor4<Scalar>& x, const Tensor4<Scalar>& x_hat, const LatentStats<Scalar>& stats)
{
    if (!(x.shape() == x_hat.shape()) || x.channels() != x_hat.channels()) throw std::invalid_argument("vae_loss: shape mismatch");
    VaeLoss out;
    out.l1 = (x.matrix() - x_hat.matrix()).template cast<double>().cwiseAbs().mean();
    const auto mu = stats.mean.matrix().template cast<double>().array();
    const auto lv = stats.log_variance.matrix().template cast<double>().array();
    out.kl = stats.mean.matrix().size() ? (0.5 * (mu.square() + lv.exp() - 1.0 - lv)).mean() : 0.0;
    out.total = out.l1 + kKlWeight * out.kl;
    return out;
}

struct VaeTrainOptions {
    enum class Stage { base, cond };
    Stage stage = Stage::base;
    int steps = 2000;  // total schedule length; a resumed run continues toward it
    int batch = 4;
    int crop = 16;        // spatial crop size in pixels
    int crop_frames = 8;  // temporal crop (one chunk)
    double lr = 1e-3;
    int warmup_steps = 100;
    double lr_min_ratio = 0.1;  // cosine decay floor as a fraction of lr
    std::uint64_t seed = 0;
    int threads = 1;
    int s_min = 2;  // LQ factors for the conditional stage
    int s_max = 4;
};

struct VaeTrainRecord {
    int step = 0;
    double l1 = 0;
    double kl = 0;
    double total = 0;
};

/// Learning rate at `step`: linear warmup, then cosine decay to lr·lr_min_ratio at `total`.
double scheduled_lr(double lr, int warmup_steps, double lr_min_ratio, int step, int total);

/// Runs steps [start_step, end_step) of VAE training; end_step < 0 means
/// opt.steps. The batch for step k depends only on (seed, k), so a resumed
/// run replays the uninterrupted one. Throws on a non-finite loss, naming the step.
std::vector<VaeTrainRecord> train_vae(ToyVae<float>& vae, Adam<float>& optimizer, const std::vector<FrameSequence>& corpus,
                                      const VaeTrainOptions& opt, int start_step = 0, int end_step = -1);

/// Reverse-mode gradient of the training loss for one fixed block and fixed
/// reparameterization noise; exposed for gradient checks.
template <typename Scalar>
Scalar vae_loss_with_grads(const ToyVae<Scalar>& vae, const Tensor4<Scalar>& x, const Tensor4<Scalar>& eps, const Tensor4<Scalar>* lq,
                           std::vector<MatX<Scalar>>* grads)
{
    Tape<Scalar> t(grads != nullptr);
    t.bind(vae.params());
    const auto enc = vae.encode(t, {t.constant(x.matrix()), x.shape()});
    const Var<Scalar> noise = t.constant(eps.matrix());
    const Var<Scalar> z = enc.mean.v + exp(scale(enc.log_variance.v, Scalar(0.5))) * noise;
    Vol<Scalar> lq_vol;
    if (lq) lq_vol = {t.constant(lq->matrix()), lq->shape()};
    const auto rec = vae.decode(t, {z, enc.mean.s}, lq ? &lq_vol : nullptr);
    const auto target = std::make_shared<const MatX<Scalar>>(x.matrix());
    const Var<Scalar> loss = l1_loss(rec.v, target) + scale(kl_normal(enc.mean.v, enc.log_variance.v), static_cast<Scalar>(kKlWeight));
    if (grads) {
        t.backward(loss);
        t.accumulate_param_grads(*grads);
    }
    return loss.value()(0, 0);
}

/// FrameCodec backed by a trained ToyVae; encodes to the posterior mean.
class VaeCodec final : public FrameCodec {
public:
    explicit VaeCodec(std::shared_ptr<const ToyVae<float>> vae) : vae_(std::move(vae)) {}
    int spatial_stride() const override { return vae_->config().spatial_stride; }
    int temporal_stride() const override { return vae_->config().temporal_stride; }
    int latent_channels() const override { return vae_->config().latent_channels; }
    std::string codec_id() const override { return "toy-vae"; }
    Tensor4f encode(const Tensor4f& block) const override { return vae_encode(*vae_, block).mean; }
    Tensor4f decode(const Tensor4f& latent, const Tensor4f* cond) const override
    {
        return cond ? cond_decode(*vae_, latent, *cond) : vae_decode(*vae_, latent);
    }
    const ToyVae<float>& vae() const { return *vae_; }

private:
    std::shared_ptr<const ToyVae<float>> vae_;
};

}  // namespace cvfi

#endif  // CVFI_TOY_VAE_HPP
