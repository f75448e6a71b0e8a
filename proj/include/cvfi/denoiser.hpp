#ifndef CVFI_DENOISER_HPP
#define CVFI_DENOISER_HPP

#include "cvfi/autograd.hpp"
#include "cvfi/conditioning.hpp"
#include "cvfi/flow_matching.hpp"
#include "cvfi/optim.hpp"
#include "cvfi/sparse_attention.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvfi {

struct DenoiserConfig {
    int model_dim = 64;
    int head_count = 4;
    int layer_count = 4;
    int token_patch = 2;
    int mlp_ratio = 4;
    int time_features = 64;
    WindowSpec window;
    /// adaLN-Zero: modulation and output projections start at zero.
    bool zero_init = true;
};

void validate(const DenoiserConfig& cfg);

/// Geometry tying latent pixels to tokens and attention chunks.
struct LatentLayout {
    int latent_channels = 4;  // C', also the velocity width
    int cond_channels = 6;    // C' + r_t
    int chunk_frames = 4;     // latent frames per temporal chunk
    int spatial_chunk = 4;    // latent pixels per attention chunk side (tile stride / r_s)
};

/// Token ordering for one latent window. Tokens are chunk major over
/// (temporal chunk, chunk row, chunk col), then (frame, row, col) inside the
/// chunk; features are (dy, dx, channel) within a patch.
struct TokenLayout {
    Shape3 latent;
    int chunk_frames = 1;
    int chunk_side = 1;  // tokens per attention chunk side
    int patch = 1;
    ChunkGrid grid;
    std::vector<int> token_t, token_y, token_x;  // token grid coordinates
    int pos_y0 = 0, pos_x0 = 0;                  // token offset of this window inside the full frame

    int token_count() const { return grid.token_count(); }
    Eigen::Index latent_row(int token, int dy, int dx) const
    {
        return (static_cast<Eigen::Index>(token_t[token]) * latent.h + token_y[token] * patch + dy) * latent.w + token_x[token] * patch + dx;
    }
};

TokenLayout make_token_layout(Shape3 latent, int chunk_frames, int spatial_chunk, int patch);

template <typename Scalar>
MatX<Scalar> patchify(const Tensor4<Scalar>& x, const TokenLayout& layout)
{
    if (!(x.shape() == layout.latent)) throw std::invalid_argument("patchify: latent " + to_string(x.shape()) + " does not match layout");
    const int p = layout.patch, c = x.channels();
    MatX<Scalar> out(layout.token_count(), p * p * c);
    for (int n = 0; n < layout.token_count(); ++n)
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) out.row(n).segment((dy * p + dx) * c, c) = x.matrix().row(layout.latent_row(n, dy, dx));
    return out;
}

template <typename Scalar>
Tensor4<Scalar> unpatchify(const MatX<Scalar>& tokens, const TokenLayout& layout, int channels)
{
    const int p = layout.patch;
    if (tokens.rows() != layout.token_count() || tokens.cols() != p * p * channels) throw std::invalid_argument("unpatchify: token shape mismatch");
    Tensor4<Scalar> out(layout.latent, channels);
    for (int n = 0; n < layout.token_count(); ++n)
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) out.matrix().row(layout.latent_row(n, dy, dx)) = tokens.row(n).segment((dy * p + dx) * channels, channels);
    return out;
}

/// Separable sinusoidal features of (latent frame, token row, token col).
template <typename Scalar>
MatX<Scalar> position_encoding(const TokenLayout& layout, int dim)
{
    const int g_t = 2 * (dim / 6), g_y = 2 * ((dim - g_t) / 4), g_x = dim - g_t - g_y;
    MatX<Scalar> out(layout.token_count(), dim);
    auto fill = [&](int n, int offset, int width, int pos) {
        const int half = width / 2;
        for (int k = 0; k < half; ++k) {
            const double freq = std::pow(100.0, -static_cast<double>(k) / std::max(1, half));
            out(n, offset + 2 * k) = static_cast<Scalar>(std::sin(pos * freq));
            out(n, offset + 2 * k + 1) = static_cast<Scalar>(std::cos(pos * freq));
        }
        if (width % 2) out(n, offset + width - 1) = Scalar(0);
    };
    for (int n = 0; n < layout.token_count(); ++n) {
        fill(n, 0, g_t, layout.token_t[n]);
        fill(n, g_t, g_y, layout.pos_y0 + layout.token_y[n]);
        fill(n, g_t + g_y, g_x, layout.pos_x0 + layout.token_x[n]);
    }
    return out;
}

/// Sinusoidal features of 1000·τ, one row per chunk.
template <typename Scalar>
MatX<Scalar> time_features(const std::vector<double>& taus, int dim)
{
    MatX<Scalar> out(static_cast<Eigen::Index>(taus.size()), dim);
    const int half = dim / 2;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        check_tau(taus[i]);
        for (int k = 0; k < half; ++k) {
            const double arg = 1000.0 * taus[i] * std::pow(10000.0, -static_cast<double>(k) / half);
            out(static_cast<Eigen::Index>(i), k) = static_cast<Scalar>(std::cos(arg));
            out(static_cast<Eigen::Index>(i), half + k) = static_cast<Scalar>(std::sin(arg));
        }
        if (dim % 2) out(static_cast<Eigen::Index>(i), dim - 1) = Scalar(0);
    }
    return out;
}

/// Transformer over patchified (noised, lq, mask) latents predicting the
/// velocity of the noised channels. Each block is modulated per temporal
/// chunk by that chunk's noise-level embedding.
template <typename Scalar>
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, const LatentLayout& layout, std::uint64_t seed) : cfg_(cfg), layout_(layout)
    {
        validate(cfg_);
        if (layout_.spatial_chunk % cfg_.token_patch != 0)
            throw std::invalid_argument("attention chunk side " + std::to_string(layout_.spatial_chunk) + " not divisible by token_patch " +
                                        std::to_string(cfg_.token_patch));
        std::mt19937_64 rng(seed);
        const int D = cfg_.model_dim, p2 = cfg_.token_patch * cfg_.token_patch;
        const int in_dim = p2 * (layout_.latent_channels + layout_.cond_channels);
        auto lin = [&](const std::string& name, int in, int out, bool zero) {
            const int w = params_.add(name + ".w", zero && cfg_.zero_init ? MatX<Scalar>::Zero(in, out)
                                                                         : init_uniform<Scalar>(in, out, in, rng, std::sqrt(3.0)));
            params_.add(name + ".b", zero && cfg_.zero_init ? MatX<Scalar>::Zero(1, out) : init_uniform<Scalar>(1, out, in, rng, 0.1));
            return w;
        };
        embed_ = lin("embed", in_dim, D, false);
        t1_ = lin("time.fc1", cfg_.time_features, D, false);
        t2_ = lin("time.fc2", D, D, false);
        for (int l = 0; l < cfg_.layer_count; ++l) {
            const std::string b = "block" + std::to_string(l);
            Block blk;
            blk.mod = lin(b + ".mod", D, 6 * D, true);
            blk.qkv = lin(b + ".qkv", D, 3 * D, false);
            blk.proj = lin(b + ".proj", D, D, false);
            blk.fc1 = lin(b + ".fc1", D, cfg_.mlp_ratio * D, false);
            blk.fc2 = lin(b + ".fc2", cfg_.mlp_ratio * D, D, false);
            blocks_.push_back(blk);
        }
        final_mod_ = lin("final.mod", D, 2 * D, true);
        head_ = lin("head", D, p2 * layout_.latent_channels, true);
    }

    const DenoiserConfig& config() const { return cfg_; }
    const LatentLayout& layout() const { return layout_; }
    ParamSet<Scalar>& params() { return params_; }
    const ParamSet<Scalar>& params() const { return params_; }
    int input_channels() const { return layout_.latent_channels + layout_.cond_channels; }

    TokenLayout token_layout(Shape3 latent) const
    {
        return make_token_layout(latent, layout_.chunk_frames, layout_.spatial_chunk, cfg_.token_patch);
    }

    /// Velocity in token space (tokens × p²·C'). `input` carries the
    /// concatenated (noised, lq, mask) channels.
    Var<Scalar> forward(Tape<Scalar>& t, const Tensor4<Scalar>& input, const std::vector<double>& taus, const TokenLayout& tl) const
    {
        if (input.channels() != input_channels())
            throw std::invalid_argument("denoiser expects " + std::to_string(input_channels()) + " input channels, got " +
                                        std::to_string(input.channels()));
        if (static_cast<int>(taus.size()) != tl.grid.nT)
            throw std::invalid_argument("denoiser: " + std::to_string(taus.size()) + " noise levels for " + std::to_string(tl.grid.nT) +
                                        " temporal chunks");
        const int D = cfg_.model_dim;
        auto chunk_of = std::make_shared<std::vector<int>>(tl.token_count());
        for (int n = 0; n < tl.token_count(); ++n) (*chunk_of)[n] = tl.grid.chunk_of_token(n).t;

        Var<Scalar> h = linear(t.constant(patchify(input, tl)), t.param(embed_), t.param(embed_ + 1)) + t.constant(position_encoding<Scalar>(tl, D));
        const Var<Scalar> c = linear(silu(linear(t.constant(time_features<Scalar>(taus, cfg_.time_features)), t.param(t1_), t.param(t1_ + 1))),
                                     t.param(t2_), t.param(t2_ + 1));
        const Var<Scalar> sc = silu(c);
        for (const Block& blk : blocks_) {
            const Var<Scalar> mod = gather_rows(linear(sc, t.param(blk.mod), t.param(blk.mod + 1)), chunk_of);
            const Var<Scalar> a_in = modulate(layer_norm(h), slice_cols(mod, 0, D), slice_cols(mod, D, D));
            const Var<Scalar> qkv = linear(a_in, t.param(blk.qkv), t.param(blk.qkv + 1));
            const Var<Scalar> att = sparse_attention(slice_cols(qkv, 0, D), slice_cols(qkv, D, D), slice_cols(qkv, 2 * D, D), tl.grid, cfg_.window,
                                                     cfg_.head_count);
            h = h + slice_cols(mod, 2 * D, D) * linear(att, t.param(blk.proj), t.param(blk.proj + 1));
            const Var<Scalar> m_in = modulate(layer_norm(h), slice_cols(mod, 3 * D, D), slice_cols(mod, 4 * D, D));
            const Var<Scalar> mlp = linear(gelu(linear(m_in, t.param(blk.fc1), t.param(blk.fc1 + 1))), t.param(blk.fc2), t.param(blk.fc2 + 1));
            h = h + slice_cols(mod, 5 * D, D) * mlp;
        }
        const Var<Scalar> fmod = gather_rows(linear(sc, t.param(final_mod_), t.param(final_mod_ + 1)), chunk_of);
        const Var<Scalar> out_in = modulate(layer_norm(h), slice_cols(fmod, 0, D), slice_cols(fmod, D, D));
        return linear(out_in, t.param(head_), t.param(head_ + 1));
    }

private:
    struct Block {
        int mod = -1, qkv = -1, proj = -1, fc1 = -1, fc2 = -1;
    };

    static Var<Scalar> modulate(Var<Scalar> x, Var<Scalar> shift, Var<Scalar> scale)
    {
        return x * add_scalar(scale, Scalar(1)) + shift;
    }

    DenoiserConfig cfg_;
    LatentLayout layout_;
    ParamSet<Scalar> params_;
    int embed_ = -1, t1_ = -1, t2_ = -1, final_mod_ = -1, head_ = -1;
    std::vector<Block> blocks_;
};

/// Velocity prediction for a model input that already holds the
/// (noised, lq, mask) channels.
template <typename Scalar>
Tensor4<Scalar> denoise_input(const Denoiser<Scalar>& model, const Tensor4<Scalar>& input, const std::vector<double>& taus)
{
    const TokenLayout tl = model.token_layout(input.shape());
    Tape<Scalar> t(false);
    t.bind(model.params());
    const Var<Scalar> v = model.forward(t, input, taus, tl);
    return unpatchify(v.value(), tl, model.layout().latent_channels);
}

inline Tensor4f denoise(const Denoiser<float>& model, const Tensor4f& noised, const ConditionLatent& cond, const std::vector<double>& taus)
{
    if (noised.channels() != model.layout().latent_channels) throw std::invalid_argument("denoise: noised latent channel mismatch");
    return denoise_input(model, concat_condition(noised, cond), taus);
}

/// MSE between the predicted and target velocity; fills `grads` when given.
/// A non-finite gradient throws, naming the parameter.
template <typename Scalar>
Scalar denoiser_loss_with_grads(const Denoiser<Scalar>& model, const Tensor4<Scalar>& input, const std::vector<double>& taus,
                                const Tensor4<Scalar>& target, std::vector<MatX<Scalar>>* grads, Scalar loss_scale = Scalar(1),
                                const TokenLayout* layout = nullptr)
{
    const TokenLayout tl = layout ? *layout : model.token_layout(input.shape());
    Tape<Scalar> t(grads != nullptr);
    t.bind(model.params());
    const Var<Scalar> v = model.forward(t, input, taus, tl);
    const Var<Scalar> loss = mse_loss(v, std::make_shared<const MatX<Scalar>>(patchify(target, tl)));
    if (grads) {
        t.backward(loss, loss_scale);
        std::vector<MatX<Scalar>> local = model.params().zeros_like();
        t.accumulate_param_grads(local);
        for (std::size_t i = 0; i < local.size(); ++i) {
            if (!local[i].allFinite()) throw std::runtime_error("non-finite gradient for parameter '" + model.params().names[i] + "'");
            (*grads)[i] += local[i];
        }
    }
    return loss.value()(0, 0) * loss_scale;
}

}  // namespace cvfi

#endif  // CVFI_DENOISER_HPP
