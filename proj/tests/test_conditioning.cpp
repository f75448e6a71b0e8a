#include "cvfi/conditioning.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace cvfi;
using cvfi::test::random_tensor;

namespace {

// Frame i holds the constant value `i + 1`, so frame identity is readable.
FrameSequence labelled(int n, int h = 2, int w = 2)
{
    Tensor4f t(n, h, w, 3);
    for (int i = 0; i < n; ++i) t.frame_rows(i, 1).setConstant(static_cast<float>(i + 1) / 16.0f);
    return FrameSequence(t);
}

int label(const FrameSequence& v, int t) { return static_cast<int>(v.frames(t, 0, 0, 0) * 16.0f + 0.5f) - 1; }

}  // namespace

TEST_CASE("nn_upsample index rule")
{
    const FrameSequence two = labelled(2);
    CHECK(nn_upsample(two, 1).frames.matrix() == two.frames.matrix());
    const FrameSequence up4 = nn_upsample(two, 4);
    REQUIRE(up4.length() == 5);
    const int expect4[] = {0, 0, 0, 1, 1};
    for (int t = 0; t < 5; ++t) CHECK(label(up4, t) == expect4[t]);
    const FrameSequence up2 = nn_upsample(labelled(3), 2);
    REQUIRE(up2.length() == 5);
    const int expect2[] = {0, 0, 1, 1, 2};
    for (int t = 0; t < 5; ++t) CHECK(label(up2, t) == expect2[t]);
    for (int s = 1; s <= 9; ++s)
        for (int t = 0; t <= 3 * s; ++t) {
            const double exact = static_cast<double>(t) / s;
            const int lo = static_cast<int>(exact);
            const int want = (exact - lo) > 0.5 ? lo + 1 : lo;
            CHECK(nearest_keyframe(t, s) == want);
        }
}

TEST_CASE("keyframes survive downsample then upsample bit for bit")
{
    std::mt19937_64 rng(1);
    for (int s : {2, 3, 4, 8}) {
        const FrameSequence x(random_tensor<float>({2 * s + 1, 5, 4}, 3, rng));
        const FrameSequence up = nn_upsample(downsample_temporal(x, s), s);
        REQUIRE(up.length() == x.length());
        for (int t = 0; t < x.length(); t += s) CHECK(up.frames.frame_rows(t, 1) == x.frames.frame_rows(t, 1));
    }
}

TEST_CASE("upsampled sequences are piecewise constant")
{
    std::mt19937_64 rng(2);
    for (int s : {2, 3, 5}) {
        const FrameSequence lq(random_tensor<float>({4, 3, 3}, 3, rng));
        const FrameSequence up = nn_upsample(lq, s);
        int changes = 0;
        for (int t = 1; t < up.length(); ++t)
            if (up.frames.frame_rows(t, 1) != up.frames.frame_rows(t - 1, 1)) ++changes;
        CHECK(changes == lq.length() - 1);
    }
}

TEST_CASE("zero-pad conditioner keeps keyframes and blanks the rest")
{
    const FrameSequence lq = labelled(3);
    const FrameSequence z = zero_pad_upsample(lq, 4);
    REQUIRE(z.length() == 9);
    for (int t = 0; t < 9; ++t) {
        if (t % 4 == 0)
            CHECK(z.frames.frame_rows(t, 1) == lq.frames.frame_rows(t / 4, 1));
        else
            CHECK(z.frames.frame_rows(t, 1).isZero());
    }
}

TEST_CASE("build_mask index rule")
{
    const KeyframeMask m = build_mask(5, 4, 2, 3);
    CHECK(m.values.shape() == Shape3{5, 2, 3});
    CHECK(m.values.channels() == 1);
    for (int t = 0; t < 5; ++t) CHECK(m.values.frame_rows(t, 1).isConstant(t % 4 == 0 ? 1.0f : 0.0f));
    CHECK(build_mask(4, 1, 1, 1).values.matrix().isOnes());
    const KeyframeMask m9 = build_mask(9, 2, 1, 1);
    CHECK(m9.values.matrix().sum() == 5.0f);
    CHECK_THROWS_AS(build_mask(6, 4, 1, 1), std::invalid_argument);
}

TEST_CASE("encode_mask time-to-channel rearrangement")
{
    Tensor4f per_frame(4, 4, 4, 1);
    per_frame.frame_rows(0, 1).setOnes();
    const Tensor4f one = encode_mask(per_frame, 1, 4);
    CHECK(one.shape() == Shape3{1, 4, 4});
    CHECK(one.channels() == 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(one(0, y, x, 0) == 1.0f);
            CHECK(one(0, y, x, 1) == 0.0f);
        }
    std::mt19937_64 rng(3);
    const Tensor4f m = random_tensor<float>({8, 2, 2}, 1, rng);
    CHECK(encode_mask(m, 1, 1).matrix() == m.matrix());
    const Tensor4f z = encode_mask(m, 1, 2);
    CHECK(z.frames() == 4);
    CHECK(z.channels() == 2);
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 2; ++c) CHECK(z(k, 1, 0, c) == m(2 * k + c, 1, 0, 0));
    CHECK_THROWS_AS(encode_mask(m, 1, 3), std::invalid_argument);
    CHECK_THROWS_AS(encode_mask(m, 4, 2), std::invalid_argument);
}

TEST_CASE("mask encoding round trips exactly")
{
    for (int s : {2, 3, 4}) {
        const KeyframeMask m = build_mask(4 * s + 1, s, 8, 12);
        const Tensor4f padded = pad_zeros(m.values, 16 * s);
        const Tensor4f z = encode_mask(padded, 4, 2);
        CHECK(((z.matrix().array() == 0.0f) || (z.matrix().array() == 1.0f)).all());
        CHECK(decode_mask(z, 4, 2).matrix() == padded.matrix());
    }
}

TEST_CASE("padding helpers")
{
    const FrameSequence v = labelled(3);
    const Tensor4f r = pad_repeat_last(v.frames, 5);
    CHECK(r.frames() == 5);
    CHECK(r.frame_rows(4, 1) == v.frames.frame_rows(2, 1));
    const Tensor4f z = pad_zeros(v.frames, 5);
    CHECK(z.frame_rows(3, 2).isZero());
    CHECK(z.frame_rows(0, 3) == v.frames.matrix());
}

TEST_CASE("concat_condition order and channel count")
{
    std::mt19937_64 rng(4);
    const Tensor4f noised = random_tensor<float>({2, 3, 3}, 4, rng);
    const ConditionLatent cond{random_tensor<float>({2, 3, 3}, 4, rng), random_tensor<float>({2, 3, 3}, 2, rng)};
    const Tensor4f in = concat_condition(noised, cond);
    CHECK(in.channels() == 10);
    CHECK(in.matrix().leftCols(4) == noised.matrix());
    CHECK(in.matrix().middleCols(4, 4) == cond.lq_latent.matrix());
    CHECK(in.matrix().rightCols(2) == cond.mask_latent.matrix());
    const ConditionLatent zero_mask{cond.lq_latent, Tensor4f(2, 3, 3, 2)};
    CHECK(concat_condition(noised, zero_mask).matrix() != in.matrix());
    CHECK_THROWS_AS(concat_condition(noised, ConditionLatent{Tensor4f(1, 3, 3, 4), cond.mask_latent}), std::invalid_argument);
}
