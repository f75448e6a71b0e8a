#include "cvfi/sparse_attention.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace cvfi;

namespace {

template <typename Scalar>
MatX<Scalar> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    MatX<Scalar> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
    return m;
}

// Chebyshev window over spatial chunk indices, recomputed from the raw token index.
bool ref_allowed(const ChunkGrid& g, int radius, bool temporal_dense, int q, int k)
{
    const int cq = q / g.tokens_per_chunk, ck = k / g.tokens_per_chunk;
    const int plane = g.nH * g.nW;
    const int tq = cq / plane, tk = ck / plane;
    const int iq = (cq % plane) / g.nW, ik = (ck % plane) / g.nW;
    const int jq = cq % g.nW, jk = ck % g.nW;
    if (!temporal_dense && tq != tk) return false;
    return std::abs(iq - ik) <= radius && std::abs(jq - jk) <= radius;
}

// Full token×token attention with masked entries dropped from the softmax.
template <typename Scalar>
MatX<Scalar> masked_dense(const MatX<Scalar>& q, const MatX<Scalar>& k, const MatX<Scalar>& v, const ChunkGrid& g, const WindowSpec& spec,
                          int heads)
{
    const Eigen::Index n = q.rows(), d = q.cols() / heads;
    MatX<Scalar> out(n, q.cols());
    for (int h = 0; h < heads; ++h) {
        MatX<Scalar> s = q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose() / std::sqrt(static_cast<Scalar>(d));
        for (Eigen::Index a = 0; a < n; ++a) {
            Scalar mx = -std::numeric_limits<Scalar>::infinity();
            for (Eigen::Index b = 0; b < n; ++b)
                if (ref_allowed(g, spec.radius, spec.temporal_dense, static_cast<int>(a), static_cast<int>(b))) mx = std::max(mx, s(a, b));
            Scalar z = 0;
            for (Eigen::Index b = 0; b < n; ++b) {
                s(a, b) = ref_allowed(g, spec.radius, spec.temporal_dense, static_cast<int>(a), static_cast<int>(b)) ? std::exp(s(a, b) - mx) : Scalar(0);
                z += s(a, b);
            }
            s.row(a) /= z;
        }
        out.middleCols(h * d, d) = s * v.middleCols(h * d, d);
    }
    return out;
}

}  // namespace

TEST_CASE("chunk grid mapping is a bijection")
{
    const ChunkGrid g{2, 3, 4, 5};
    CHECK(g.token_count() == 120);
    std::vector<int> seen(g.token_count(), 0);
    for (int tok = 0; tok < g.token_count(); ++tok) {
        const ChunkIndex c = g.chunk_of_token(tok);
        const int back = g.chunk_id(c.t, c.i, c.j) * g.tokens_per_chunk + g.slot_of_token(tok);
        REQUIRE(back >= 0);
        REQUIRE(back < g.token_count());
        ++seen[back];
    }
    for (int s : seen) CHECK(s == 1);
    CHECK_THROWS_AS(validate(ChunkGrid{0, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("allowed follows the square window and ignores time")
{
    const ChunkGrid row{1, 1, 3, 1};
    const WindowSpec r1{1};
    CHECK_FALSE(allowed(row, r1, row.chunk_id(0, 0, 0), row.chunk_id(0, 0, 2)));
    CHECK(allowed(row, r1, row.chunk_id(0, 0, 0), row.chunk_id(0, 0, 1)));
    const ChunkGrid g{3, 4, 4, 2};
    for (int q = 0; q < g.token_count(); ++q)
        for (int k = 0; k < g.token_count(); ++k) {
            CHECK(allowed(g, WindowSpec{8}, q, k));
            CHECK(allowed(g, r1, q, k) == ref_allowed(g, 1, true, q, k));
        }
    const int a = g.chunk_id(0, 2, 1) * 2, b = g.chunk_id(2, 2, 1) * 2 + 1;
    CHECK(allowed(g, WindowSpec{0}, a, b));
    CHECK_FALSE(allowed(g, WindowSpec{0, false}, a, b));
}

TEST_CASE("sparse attention matches masked dense attention over random cases")
{
    std::mt19937_64 rng(11);
    int cases = 0;
    double worst = 0;
    for (int trial = 0; trial < 120; ++trial) {
        std::uniform_int_distribution<int> axis(1, 4), tpc_d(1, 5), heads_d(1, 3), dim_d(1, 6), rad(0, 3);
        const ChunkGrid g{axis(rng), axis(rng), axis(rng), tpc_d(rng)};
        const WindowSpec spec{rad(rng), trial % 7 != 0};
        const int heads = heads_d(rng), width = heads * dim_d(rng);
        const MatXf q = random_mat<float>(g.token_count(), width, rng);
        const MatXf k = random_mat<float>(g.token_count(), width, rng);
        const MatXf v = random_mat<float>(g.token_count(), width, rng);
        const MatXf got = sparse_attention(q, k, v, g, spec, heads);
        const MatXf want = masked_dense(q, k, v, g, spec, heads);
        worst = std::max(worst, static_cast<double>((got - want).cwiseAbs().maxCoeff()));
        ++cases;
    }
    CHECK(cases >= 100);
    CHECK(worst < 1e-5);
}

TEST_CASE("double precision agrees with the oracle to 1e-10")
{
    std::mt19937_64 rng(12);
    const ChunkGrid g{2, 2, 2, 4};
    for (int radius : {0, 1}) {
        const MatXd q = random_mat<double>(g.token_count(), 6, rng);
        const MatXd k = random_mat<double>(g.token_count(), 6, rng);
        const MatXd v = random_mat<double>(g.token_count(), 6, rng);
        const WindowSpec spec{radius};
        CHECK((sparse_attention(q, k, v, g, spec, 2) - masked_dense(q, k, v, g, spec, 2)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("constant values pass through unchanged")
{
    std::mt19937_64 rng(13);
    const ChunkGrid g{2, 3, 3, 3};
    const MatXf q = random_mat<float>(g.token_count(), 4, rng);
    const MatXf k = random_mat<float>(g.token_count(), 4, rng);
    MatXf v(g.token_count(), 4);
    v.rowwise() = Eigen::RowVector4f(0.5f, -1.0f, 2.0f, 3.0f);
    const MatXf out = sparse_attention(q, k, v, g, WindowSpec{1}, 2);
    CHECK((out - v).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("tape attention gradients match central differences")
{
    std::mt19937_64 rng(14);
    const ChunkGrid g{2, 2, 3, 2};
    ParamSet<double> ps;
    ps.add("q", random_mat<double>(g.token_count(), 4, rng));
    ps.add("k", random_mat<double>(g.token_count(), 4, rng));
    ps.add("v", random_mat<double>(g.token_count(), 4, rng));
    const MatXd w = random_mat<double>(g.token_count(), 4, rng);
    for (const WindowSpec spec : {WindowSpec{0}, WindowSpec{1}, WindowSpec{1, false}}) {
        auto run = [&](std::vector<MatXd>* grads) {
            Tape<double> t(grads != nullptr);
            t.bind(ps);
            const Var<double> out = sparse_attention(t.param(0), t.param(1), t.param(2), g, spec, 2);
            const Var<double> loss = sum(out * t.constant(w));
            if (grads) {
                t.backward(loss);
                t.accumulate_param_grads(*grads);
            }
            return loss.value()(0, 0);
        };
        std::vector<MatXd> grads = ps.zeros_like();
        run(&grads);
        const MatXd plain = sparse_attention(ps.values[0], ps.values[1], ps.values[2], g, spec, 2);
        CHECK(run(nullptr) == doctest::Approx(plain.cwiseProduct(w).sum()).epsilon(1e-12));
        const auto r = cvfi::test::gradcheck(ps, grads, [&] { return run(nullptr); }, rng, 12);
        CHECK(r.checked > 20);
        CHECK(r.max_rel_err < 1e-6);
    }
}

TEST_CASE("flop estimate closed forms and scaling")
{
    CHECK(flop_estimate(ChunkGrid{3, 1, 1, 4}, WindowSpec{1}) == 9 * 16);
    CHECK(flop_estimate(ChunkGrid{1, 5, 7, 3}, WindowSpec{0}) == 5 * 7 * 9);
    const ChunkGrid g{2, 4, 5, 3};
    std::int64_t pairs = 0;
    for (int q = 0; q < g.token_count(); ++q)
        for (int k = 0; k < g.token_count(); ++k) pairs += allowed(g, WindowSpec{1}, q, k) ? 1 : 0;
    CHECK(flop_estimate(g, WindowSpec{1}) == pairs);
    const double narrow = static_cast<double>(flop_estimate(ChunkGrid{2, 32, 32, 4}, WindowSpec{1}));
    const double wide = static_cast<double>(flop_estimate(ChunkGrid{2, 32, 64, 4}, WindowSpec{1}));
    CHECK(wide / narrow == doctest::Approx(2.0).epsilon(0.02));
    const double t1 = static_cast<double>(flop_estimate(ChunkGrid{1, 8, 8, 4}, WindowSpec{1}));
    const double t3 = static_cast<double>(flop_estimate(ChunkGrid{3, 8, 8, 4}, WindowSpec{1}));
    CHECK(t3 / t1 == doctest::Approx(9.0));
}

TEST_CASE("allowed keys per query are bounded independent of resolution")
{
    for (int side : {4, 16}) {
        const ChunkGrid g{2, side, side, 2};
        const auto lists = allowed_chunks(g, WindowSpec{1});
        for (const auto& l : lists) CHECK(static_cast<int>(l.size()) * g.tokens_per_chunk <= 9 * g.nT * g.tokens_per_chunk);
    }
}
