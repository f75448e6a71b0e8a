#ifndef CVFI_CONDITIONING_HPP
#define CVFI_CONDITIONING_HPP

#include "cvfi/tensor.hpp"
#include "cvfi/video_io.hpp"

namespace cvfi {

/// Index of the keyframe nearest to high-rate frame t; ties go to the earlier one.
inline int nearest_keyframe(int t, int s)
{
    const int k = t / s;
    const int r = t - k * s;
    return 2 * r > s ? k + 1 : k;
}

/// Length s·(T−1)+1 sequence with output[t] = lq[nearest_keyframe(t, s)].
FrameSequence nn_upsample(const FrameSequence& lq, int s);

/// Reference conditioner for the padding comparison: keyframes in place,
/// every unobserved frame set to zero.
FrameSequence zero_pad_upsample(const FrameSequence& lq, int s);

/// Per-pixel binary mask, T_hq×H×W×1; frame t is all ones iff t ≡ 0 (mod s).
struct KeyframeMask {
    Tensor4f values;
    int s = 1;
};

KeyframeMask build_mask(int frames_hq, int s, int height, int width);

/// Extends a video to `total` frames by repeating its last frame.
Tensor4f pad_repeat_last(const Tensor4f& frames, int total);
/// Extends a tensor to `total` frames with zeros.
Tensor4f pad_zeros(const Tensor4f& frames, int total);

/// Nearest spatial downsample by r_s, then time-to-channels: channel c of
/// latent frame k is mask frame k·r_t + c.
Tensor4f encode_mask(const Tensor4f& mask, int r_s, int r_t);
/// Exact inverse of encode_mask for masks constant over r_s×r_s cells.
Tensor4f decode_mask(const Tensor4f& mask_latent, int r_s, int r_t);

struct ConditionLatent {
    Tensor4f lq_latent;
    Tensor4f mask_latent;
};

/// Channel concatenation in the fixed order (noised_gt, lq_latent, mask_latent).
Tensor4f concat_condition(const Tensor4f& noised_gt, const ConditionLatent& cond);

}  // namespace cvfi

#endif  // CVFI_CONDITIONING_HPP
