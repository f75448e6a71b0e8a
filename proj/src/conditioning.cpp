#include "cvfi/conditioning.hpp"

#include <stdexcept>
#include <string>

namespace cvfi {

FrameSequence nn_upsample(const FrameSequence& lq, int s)
{
    if (s < 1) throw std::invalid_argument("nn_upsample: factor must be >= 1");
    if (lq.length() < 1) throw std::invalid_argument("empty video");
    const int n = s * (lq.length() - 1) + 1;
    Tensor4f out(n, lq.height(), lq.width(), lq.channels());
    for (int t = 0; t < n; ++t) out.frame_rows(t, 1) = lq.frames.frame_rows(nearest_keyframe(t, s), 1);
    return FrameSequence(std::move(out), lq.frame_rate_hint);
}

FrameSequence zero_pad_upsample(const FrameSequence& lq, int s)
{
    if (s < 1) throw std::invalid_argument("zero_pad_upsample: factor must be >= 1");
    if (lq.length() < 1) throw std::invalid_argument("empty video");
    const int n = s * (lq.length() - 1) + 1;
    Tensor4f out(n, lq.height(), lq.width(), lq.channels());
    for (int k = 0; k < lq.length(); ++k) out.frame_rows(k * s, 1) = lq.frames.frame_rows(k, 1);
    return FrameSequence(std::move(out), lq.frame_rate_hint);
}

KeyframeMask build_mask(int frames_hq, int s, int height, int width)
{
    if (s < 1) throw std::invalid_argument("build_mask: factor must be >= 1");
    if (frames_hq < 1 || (frames_hq - 1) % s != 0)
        throw std::invalid_argument("build_mask: (T_hq-1)=" + std::to_string(frames_hq - 1) + " not divisible by s=" + std::to_string(s));
    KeyframeMask m;
    m.s = s;
    m.values = Tensor4f(frames_hq, height, width, 1);
    for (int t = 0; t < frames_hq; t += s) m.values.frame_rows(t, 1).setOnes();
    return m;
}

Tensor4f pad_repeat_last(const Tensor4f& frames, int total)
{
    if (total < frames.frames()) throw std::invalid_argument("pad_repeat_last: target shorter than input");
    Tensor4f out(total, frames.height(), frames.width(), frames.channels());
    out.frame_rows(0, frames.frames()) = frames.matrix();
    for (int t = frames.frames(); t < total; ++t) out.frame_rows(t, 1) = frames.frame_rows(frames.frames() - 1, 1);
    return out;
}

Tensor4f pad_zeros(const Tensor4f& frames, int total)
{
    if (total < frames.frames()) throw std::invalid_argument("pad_zeros: target shorter than input");
    Tensor4f out(total, frames.height(), frames.width(), frames.channels());
    out.frame_rows(0, frames.frames()) = frames.matrix();
    return out;
}

Tensor4f encode_mask(const Tensor4f& mask, int r_s, int r_t)
{
    if (r_s < 1 || r_t < 1) throw std::invalid_argument("encode_mask: strides must be >= 1");
    if (mask.channels() != 1) throw std::invalid_argument("encode_mask: mask must have one channel");
    if (mask.frames() % r_t != 0)
        throw std::invalid_argument("encode_mask: " + std::to_string(mask.frames()) + " frames not divisible by r_t=" + std::to_string(r_t));
    if (mask.height() % r_s != 0 || mask.width() % r_s != 0)
        throw std::invalid_argument("encode_mask: spatial dims not divisible by r_s=" + std::to_string(r_s));
    Tensor4f out(mask.frames() / r_t, mask.height() / r_s, mask.width() / r_s, r_t);
    for (int k = 0; k < out.frames(); ++k)
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x)
                for (int c = 0; c < r_t; ++c) out(k, y, x, c) = mask(k * r_t + c, y * r_s, x * r_s, 0);
    return out;
}

Tensor4f decode_mask(const Tensor4f& mask_latent, int r_s, int r_t)
{
    if (mask_latent.channels() != r_t) throw std::invalid_argument("decode_mask: channel count must equal r_t");
    Tensor4f out(mask_latent.frames() * r_t, mask_latent.height() * r_s, mask_latent.width() * r_s, 1);
    for (int t = 0; t < out.frames(); ++t)
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x) out(t, y, x, 0) = mask_latent(t / r_t, y / r_s, x / r_s, t % r_t);
    return out;
}

Tensor4f concat_condition(const Tensor4f& noised_gt, const ConditionLatent& cond)
{
    if (!(noised_gt.shape() == cond.lq_latent.shape()) || !(noised_gt.shape() == cond.mask_latent.shape()))
        throw std::invalid_argument("concat_condition: latent dims differ (" + to_string(noised_gt.shape()) + ", " +
                                    to_string(cond.lq_latent.shape()) + ", " + to_string(cond.mask_latent.shape()) + ")");
    const int c0 = noised_gt.channels(), c1 = cond.lq_latent.channels(), c2 = cond.mask_latent.channels();
    Tensor4f out(noised_gt.shape(), c0 + c1 + c2);
    out.matrix().leftCols(c0) = noised_gt.matrix();
    out.matrix().middleCols(c0, c1) = cond.lq_latent.matrix();
    out.matrix().rightCols(c2) = cond.mask_latent.matrix();
    return out;
}

}  // namespace cvfi
