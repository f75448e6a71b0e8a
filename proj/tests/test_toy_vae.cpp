#include "cvfi/toy_vae.hpp"

#include "cvfi/conditioning.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace cvfi;
using cvfi::test::random_tensor;

namespace {

VaeConfig tiny_config()
{
    VaeConfig c;
    c.spatial_stride = 2;
    c.temporal_stride = 2;
    c.latent_channels = 2;
    c.base_width = 3;
    c.level_count = 2;
    c.init_log_variance = -1.0;
    return c;
}

std::vector<FrameSequence> tiny_corpus(int n)
{
    std::vector<FrameSequence> out;
    for (int i = 0; i < n; ++i) out.push_back(gen_synthetic(SyntheticSpec{}, 9, 16, 16, 100 + i));
    return out;
}

VaeTrainOptions tiny_options(int steps)
{
    VaeTrainOptions o;
    o.steps = steps;
    o.batch = 2;
    o.crop = 8;
    o.crop_frames = 4;
    o.seed = 3;
    o.warmup_steps = 2;
    return o;
}

}  // namespace

TEST_CASE("encode shapes and purity")
{
    const ToyVae<float> vae(VaeConfig{}, 1);
    std::mt19937_64 rng(1);
    const Tensor4f x = random_tensor<float>({8, 32, 32}, 3, rng);
    const auto a = vae_encode(vae, x);
    CHECK(a.mean.shape() == Shape3{4, 8, 8});
    CHECK(a.mean.channels() == 4);
    CHECK(a.log_variance.shape() == Shape3{4, 8, 8});
    const auto b = vae_encode(vae, x);
    CHECK(a.mean.matrix() == b.mean.matrix());
    CHECK(a.log_variance.matrix() == b.log_variance.matrix());
    const auto z = vae_encode(vae, Tensor4f(8, 32, 32, 3));
    CHECK(z.mean.matrix().allFinite());
    CHECK(z.log_variance.matrix().allFinite());
    CHECK_THROWS_AS(vae_encode(vae, Tensor4f(7, 32, 32, 3)), std::invalid_argument);
    CHECK_THROWS_AS(vae_encode(vae, Tensor4f(8, 30, 32, 3)), std::invalid_argument);
}

TEST_CASE("decode inverts encode shape and stays in [0,1]")
{
    const ToyVae<float> vae(VaeConfig{}, 2);
    std::mt19937_64 rng(2);
    const Tensor4f x = random_tensor<float>({4, 16, 16}, 3, rng);
    const Tensor4f y = vae_decode(vae, vae_encode(vae, x).mean);
    CHECK(y.shape() == x.shape());
    CHECK(y.channels() == 3);
    CHECK(y.matrix().minCoeff() >= 0.0f);
    CHECK(y.matrix().maxCoeff() <= 1.0f);
    const Tensor4f zero(2, 4, 4, 4);
    CHECK(vae_decode(vae, zero).matrix() == vae_decode(vae, zero).matrix());
    CHECK_THROWS(vae_decode(vae, Tensor4f(2, 4, 4, 3)));
}

TEST_CASE("conditional decoder equals the base decoder at initialization")
{
    const ToyVae<float> vae(VaeConfig{}, 3);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const Tensor4f z = random_tensor<float>({2, 4, 4}, 4, rng, -3, 3);
        const Tensor4f lq = random_tensor<float>({4, 16, 16}, 3, rng);
        CHECK(cond_decode(vae, z, lq).matrix() == vae_decode(vae, z).matrix());
    }
    CHECK_THROWS(cond_decode(vae, Tensor4f(2, 4, 4, 4), Tensor4f(4, 12, 16, 3)));
}

TEST_CASE("vae_loss closed forms")
{
    std::mt19937_64 rng(4);
    const Tensor4f x = random_tensor<float>({2, 2, 2}, 3, rng);
    LatentStats<float> zero{Tensor4f(1, 1, 1, 1), Tensor4f(1, 1, 1, 1)};
    const VaeLoss same = vae_loss(x, x, zero);
    CHECK(same.total == 0.0);
    Tensor4f shifted = x;
    shifted.matrix().array() += 0.1f;
    CHECK(vae_loss(x, shifted, zero).l1 == doctest::Approx(0.1).epsilon(1e-6));
    LatentStats<float> one{Tensor4f::constant({1, 1, 1}, 1, 1.0f), Tensor4f(1, 1, 1, 1)};
    const VaeLoss kl = vae_loss(x, x, one);
    CHECK(kl.kl == doctest::Approx(0.5));
    CHECK(kl.total == doctest::Approx(kKlWeight * 0.5));
    for (int i = 0; i < 50; ++i) {
        LatentStats<float> r{random_tensor<float>({1, 2, 2}, 2, rng, -2, 2), random_tensor<float>({1, 2, 2}, 2, rng, -5, 5)};
        CHECK(vae_loss(x, x, r).kl >= 0.0);
    }
    CHECK_THROWS_AS(vae_loss(x, Tensor4f(1, 2, 2, 3), zero), std::invalid_argument);
}

TEST_CASE("vae gradients match central differences in double precision")
{
    ToyVae<double> vae(tiny_config(), 5);
    std::mt19937_64 rng(5);
    // Live injection path so the conditional branch has nonzero gradients.
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int l = 0; l < vae.config().level_count; ++l) {
        MatXd& w = vae.params().values[vae.params().index("cond.zero" + std::to_string(l) + ".w")];
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
    }
    const Tensor4d x = random_tensor<double>({2, 4, 4}, 3, rng);
    const Tensor4d lq = random_tensor<double>({2, 4, 4}, 3, rng);
    Tensor4d eps = random_tensor<double>({1, 2, 2}, 2, rng, -1, 1);
    for (const Tensor4d* cond : {static_cast<const Tensor4d*>(nullptr), &lq}) {
        std::vector<MatXd> grads = vae.params().zeros_like();
        vae_loss_with_grads(vae, x, eps, cond, &grads);
        const auto r = cvfi::test::gradcheck(vae.params(), grads, [&] { return vae_loss_with_grads<double>(vae, x, eps, cond, nullptr); }, rng, 4);
        CHECK(r.checked > 20);
        CHECK(r.max_rel_err < 1e-3);
    }
}

TEST_CASE("lr schedule warms up then decays to the floor")
{
    CHECK(scheduled_lr(1.0, 10, 0.1, 0, 100) == doctest::Approx(0.1));
    CHECK(scheduled_lr(1.0, 10, 0.1, 9, 100) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 10, 0.1, 10, 100) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 10, 0.1, 100, 100) == doctest::Approx(0.1));
    double prev = 2.0;
    for (int s = 10; s <= 100; ++s) {
        const double lr = scheduled_lr(1.0, 10, 0.1, s, 100);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("training with zero steps leaves the weights at initialization")
{
    ToyVae<float> vae(tiny_config(), 6);
    const ToyVae<float> init(tiny_config(), 6);
    Adam<float> adam;
    const auto trace = train_vae(vae, adam, tiny_corpus(2), tiny_options(0));
    CHECK(trace.empty());
    for (int i = 0; i < vae.params().size(); ++i) CHECK(vae.params().values[i] == init.params().values[i]);
}

TEST_CASE("training is deterministic and resumable")
{
    const auto corpus = tiny_corpus(3);
    ToyVae<float> a(tiny_config(), 7), b(tiny_config(), 7), c(tiny_config(), 7);
    Adam<float> oa, ob, oc;
    const auto ta = train_vae(a, oa, corpus, tiny_options(6));
    const auto tb = train_vae(b, ob, corpus, tiny_options(6));
    REQUIRE(ta.size() == 6);
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].total == tb[i].total);
        CHECK(std::isfinite(ta[i].total));
    }
    auto tc = train_vae(c, oc, corpus, tiny_options(6), 0, 3);
    const auto rest = train_vae(c, oc, corpus, tiny_options(6), 3);
    tc.insert(tc.end(), rest.begin(), rest.end());
    REQUIRE(tc.size() == ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(tc[i].total == ta[i].total);
    for (int i = 0; i < a.params().size(); ++i) CHECK(c.params().values[i] == a.params().values[i]);
    for (int i = 0; i < a.params().size(); ++i) CHECK(a.params().values[i] == b.params().values[i]);
}

TEST_CASE("conditional stage trains only the conditional branch")
{
    const auto corpus = tiny_corpus(2);
    ToyVae<float> vae(tiny_config(), 8);
    const ToyVae<float> before(tiny_config(), 8);
    Adam<float> adam;
    VaeTrainOptions o = tiny_options(4);
    o.stage = VaeTrainOptions::Stage::cond;
    o.s_min = o.s_max = 2;
    train_vae(vae, adam, corpus, o);
    using Part = ToyVae<float>::Part;
    const auto cond = vae.mask({Part::cond});
    bool cond_changed = false;
    for (int i = 0; i < vae.params().size(); ++i) {
        if (cond[i])
            cond_changed = cond_changed || vae.params().values[i] != before.params().values[i];
        else
            CHECK(vae.params().values[i] == before.params().values[i]);
    }
    CHECK(cond_changed);

    std::mt19937_64 rng(8);
    const Tensor4f z = random_tensor<float>({2, 4, 4}, 2, rng, -1, 1);
    const Tensor4f lq1 = random_tensor<float>({4, 8, 8}, 3, rng);
    const Tensor4f lq2 = random_tensor<float>({4, 8, 8}, 3, rng);
    CHECK(cond_decode(vae, z, lq1).matrix() != cond_decode(vae, z, lq2).matrix());
}

TEST_CASE("config validation")
{
    VaeConfig c;
    c.spatial_stride = 8;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = {};
    c.latent_channels = 0;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    CHECK_NOTHROW(validate(VaeConfig{}));
}

TEST_CASE("vae codec plugs into the tiled codec")
{
    auto vae = std::make_shared<ToyVae<float>>(VaeConfig{}, 9);
    const VaeCodec codec(vae);
    CHECK(codec.spatial_stride() == 4);
    CHECK(codec.temporal_stride() == 2);
    std::mt19937_64 rng(9);
    const FrameSequence x(random_tensor<float>({8, 32, 32}, 3, rng));
    const TilePlan tiles = plan_tiles(32, 32, 16, 8);
    const ChunkPlan chunks = plan_chunks(8, 8);
    const LatentGrid z = tiled_encode(x, codec, tiles, chunks);
    CHECK(z.values.shape() == Shape3{4, 8, 8});
    const FrameSequence y = tiled_decode(z, codec, tiles, chunks);
    CHECK(y.frames.shape() == x.frames.shape());
}
