// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// Criteria 8 and 9 read the artifacts of the desk training recipe.

#include "cvfi/commands.hpp"
#include "cvfi/conditioning.hpp"
#include "cvfi/denoiser.hpp"
#include "cvfi/flow_matching.hpp"
#include "cvfi/scheduler.hpp"
#include "cvfi/sparse_attention.hpp"
#include "cvfi/tiling.hpp"
#include "cvfi/toy_vae.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace cvfi;
namespace fs = std::filesystem;
using cvfi::test::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// 1-D reference blend weight, recomputed from the ownership rule.
double ref_weight(const std::vector<int>& origins, int tile, int stride, int extent, int a, int p)
{
    int owner = 0;
    for (int i = 0; i < static_cast<int>(origins.size()); ++i)
        if (origins[i] <= p) owner = i;
    const int o = origins[owner];
    const int blend = owner > 0 ? std::min(tile - stride, extent - o) : 0;
    const double w = (p - o) < blend ? static_cast<double>(p - o) / blend : 1.0;
    if (a == owner) return w;
    if (a == owner - 1) return 1.0 - w;
    return 0.0;
}

Outcome tiled_identity()
{
    std::mt19937_64 rng(101);
    const TilePlan plan = plan_tiles(128, 128, 64, 48);
    const IdentityCodec codec;
    double err = 0;
    for (int trial = 0; trial < 4; ++trial) {
        const FrameSequence x(random_tensor<float>({8, 128, 128}, 3, rng));
        const ChunkPlan chunks = plan_chunks(8, 8);
        const FrameSequence y = tiled_decode(tiled_encode(x, codec, plan, chunks), codec, plan, chunks);
        err = std::max(err, static_cast<double>((y.frames.matrix() - x.frames.matrix()).cwiseAbs().maxCoeff()));
    }
    double dev = 0;
    const MatXd cover = coverage_weights(plan);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            double sum = 0;
            for (int a = 0; a < plan.tile_rows(); ++a)
                for (int b = 0; b < plan.tile_cols(); ++b)
                    sum += ref_weight(plan.row_origins, 64, 48, 128, a, y) * ref_weight(plan.col_origins, 64, 48, 128, b, x);
            dev = std::max({dev, std::abs(sum - 1.0), std::abs(cover(y, x) - 1.0)});
        }
    return {err <= 1e-6 && dev <= 1e-9, "max_abs_err=" + num(err) + " weight_dev=" + num(dev)};
}

template <typename Scalar>
MatX<Scalar> randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    MatX<Scalar> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
    return m;
}

Outcome attention_oracle()
{
    std::mt19937_64 rng(202);
    double worst = 0;
    int cases = 0;
    for (int trial = 0; trial < 120; ++trial) {
        std::uniform_int_distribution<int> axis(1, 4), tpc(1, 5), heads_d(1, 3), dim(1, 6), rad(0, 3);
        const ChunkGrid g{axis(rng), axis(rng), axis(rng), tpc(rng)};
        const WindowSpec spec{rad(rng), trial % 5 != 0};
        const int heads = heads_d(rng), width = heads * dim(rng), n = g.token_count(), d = width / heads;
        const MatXf q = randn<float>(n, width, rng), k = randn<float>(n, width, rng), v = randn<float>(n, width, rng);
        MatXf want(n, width);
        for (int h = 0; h < heads; ++h) {
            MatXf s = q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose() / std::sqrt(static_cast<float>(d));
            const int plane = g.nH * g.nW;
            for (int a = 0; a < n; ++a) {
                float mx = -INFINITY;
                std::vector<bool> ok(n);
                for (int b = 0; b < n; ++b) {
                    const int ca = a / g.tokens_per_chunk, cb = b / g.tokens_per_chunk;
                    const bool same_t = ca / plane == cb / plane;
                    ok[b] = (spec.temporal_dense || same_t) && std::abs((ca % plane) / g.nW - (cb % plane) / g.nW) <= spec.radius &&
                            std::abs(ca % g.nW - cb % g.nW) <= spec.radius;
                    if (ok[b]) mx = std::max(mx, s(a, b));
                }
                float z = 0;
                for (int b = 0; b < n; ++b) z += s(a, b) = ok[b] ? std::exp(s(a, b) - mx) : 0.0f;
                s.row(a) /= z;
            }
            want.middleCols(h * d, d) = s * v.middleCols(h * d, d);
        }
        worst = std::max(worst, static_cast<double>((sparse_attention(q, k, v, g, spec, heads) - want).cwiseAbs().maxCoeff()));
        ++cases;
    }
    return {cases >= 100 && worst < 1e-5, std::to_string(cases) + " cases, max_abs_err=" + num(worst)};
}

Outcome gradients()
{
    std::mt19937_64 rng(303);
    VaeConfig vc;
    vc.spatial_stride = 2;
    vc.temporal_stride = 2;
    vc.latent_channels = 2;
    vc.base_width = 3;
    vc.level_count = 2;
    vc.init_log_variance = -1.0;
    ToyVae<double> vae(vc, 5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int l = 0; l < vc.level_count; ++l) {
        MatXd& w = vae.params().values[vae.params().index("cond.zero" + std::to_string(l) + ".w")];
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
    }
    const Tensor4d x = random_tensor<double>({2, 4, 4}, 3, rng), lq = random_tensor<double>({2, 4, 4}, 3, rng);
    const Tensor4d eps = random_tensor<double>({1, 2, 2}, 2, rng, -1, 1);
    std::vector<MatXd> vg = vae.params().zeros_like();
    vae_loss_with_grads(vae, x, eps, &lq, &vg);
    const auto rv = cvfi::test::gradcheck(vae.params(), vg, [&] { return vae_loss_with_grads<double>(vae, x, eps, &lq, nullptr); }, rng, 4);

    DenoiserConfig dc;
    dc.model_dim = 8;
    dc.head_count = 2;
    dc.layer_count = 2;
    dc.token_patch = 1;
    dc.mlp_ratio = 2;
    dc.time_features = 8;
    dc.zero_init = false;
    Denoiser<double> dit(dc, LatentLayout{2, 3, 1, 2}, 6);
    const Tensor4d in = random_tensor<double>({2, 4, 4}, 5, rng, -1, 1), target = random_tensor<double>({2, 4, 4}, 2, rng, -1, 1);
    const std::vector<double> taus{0.25, 0.8};
    std::vector<MatXd> dg = dit.params().zeros_like();
    denoiser_loss_with_grads(dit, in, taus, target, &dg);
    const auto rd = cvfi::test::gradcheck(dit.params(), dg, [&] { return denoiser_loss_with_grads<double>(dit, in, taus, target, nullptr); }, rng, 4);
    return {rv.max_rel_err < 1e-3 && rd.max_rel_err < 1e-3 && rv.checked > 0 && rd.checked > 0,
            "vae max_rel=" + num(rv.max_rel_err) + " (" + std::to_string(rv.checked) + " entries), denoiser max_rel=" + num(rd.max_rel_err) + " (" +
                std::to_string(rd.checked) + " entries)"};
}

Outcome sampler()
{
    std::mt19937_64 init(404);
    const Tensor4d x0 = random_tensor<double>({2, 4, 4}, 4, init, -2, 2);
    const VelocityFn<double> oracle = [&](const Tensor4d& x, const std::vector<double>& t) { return MatXd((x.matrix() - x0.matrix()) / t[0]); };
    SampleWindow<double> w;
    w.chunk_shape = {2, 4, 4};
    w.channels = 4;
    w.roles = {ChunkRole::target};
    w.contexts = {nullptr};
    double err = 0;
    for (int n : {1, 4, 16}) {
        std::mt19937_64 rng(n);
        err = std::max(err, (euler_sample(oracle, w, make_schedule(n, 8.0), rng)[0].matrix() - x0.matrix()).cwiseAbs().maxCoeff());
    }
    const ShiftSchedule s = make_schedule(16, 8.0);
    double grid = s.grid.size() == 17 ? 0.0 : 1.0;
    for (int k = 0; k <= 16 && k < static_cast<int>(s.grid.size()); ++k) {
        const double u = 1.0 - k / 16.0;
        grid = std::max(grid, std::abs(s.grid[k] - 8.0 * u / (1.0 + 7.0 * u)));
    }
    return {err < 1e-5 && grid <= 1e-12, "point_mass_err=" + num(err) + " grid_err=" + num(grid)};
}

Outcome scheduler()
{
    double worst = 0;
    for (int n : {8, 64, 256})
        for (double alpha : {0.25, 0.5, 1.0}) {
            const double eps = 1.0;
            const auto s = simulate_error(plan_skip_concat(n), {eps, alpha});
            const auto c = simulate_error(plan_causal(n), {eps, alpha});
            double geo = 0;
            for (int k = 0; k < n; ++k) geo += std::pow(alpha, k);
            worst = std::max(worst, std::abs(*std::max_element(s.begin(), s.end()) - eps * (1 + alpha)));
            worst = std::max(worst, std::abs(*std::max_element(c.begin(), c.end()) - eps * geo) / geo);
        }
    return {worst <= 1e-12, "max_dev_from_closed_form=" + num(worst)};
}

Outcome zero_init()
{
    const ToyVae<float> vae(VaeConfig{}, 3);
    std::mt19937_64 rng(606);
    int equal = 0;
    for (int i = 0; i < 100; ++i) {
        const Tensor4f z = random_tensor<float>({2, 4, 4}, 4, rng, -3, 3);
        const Tensor4f lq = random_tensor<float>({4, 16, 16}, 3, rng);
        equal += cond_decode(vae, z, lq).matrix() == vae_decode(vae, z).matrix() ? 1 : 0;
    }
    return {equal == 100, std::to_string(equal) + "/100 bit-identical"};
}

Outcome conditioning()
{
    std::mt19937_64 rng(707);
    int bad = 0, checks = 0;
    for (int s : {2, 3, 4, 8}) {
        const FrameSequence x(random_tensor<float>({3 * s + 1, 8, 8}, 3, rng));
        const FrameSequence lq = downsample_temporal(x, s);
        const FrameSequence up = nn_upsample(lq, s);
        for (int t = 0; t < x.length(); t += s, ++checks) bad += up.frames.frame_rows(t, 1) == x.frames.frame_rows(t, 1) ? 0 : 1;
        int changes = 0;
        for (int t = 1; t < up.length(); ++t) changes += up.frames.frame_rows(t, 1) != up.frames.frame_rows(t - 1, 1) ? 1 : 0;
        bad += changes == lq.length() - 1 ? 0 : 1;
        ++checks;
        const Tensor4f mask = pad_zeros(build_mask(4 * s + 1, s, 8, 8).values, 16 * s);
        bad += decode_mask(encode_mask(mask, 4, 2), 4, 2).matrix() == mask.matrix() ? 0 : 1;
        ++checks;
    }
    return {bad == 0, std::to_string(checks - bad) + "/" + std::to_string(checks) + " invariant checks hold"};
}

std::map<std::string, std::vector<std::string>> read_ablation(const fs::path& csv)
{
    std::ifstream f(csv);
    if (!f) throw std::runtime_error("missing " + csv.string());
    std::map<std::string, std::vector<std::string>> rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!cells.empty()) rows[cells[0]] = cells;
    }
    return rows;
}

Outcome end_to_end(const fs::path& art)
{
    const auto rows = read_ablation(art / "ablation.csv");
    const PipelineConfig cfg;
    const int s = 2;
    double base = 0;
    const auto clips = load_corpus(art / "corpus" / "eval");
    if (clips.empty()) throw std::runtime_error("no eval clips under " + (art / "corpus" / "eval").string());
    for (const auto& clip : clips) {
        const FrameSequence gt = trim_for_factor(clip, s);
        base += interpolated_psnr(gt, repeat_previous(downsample_temporal(gt, s), s), s) / static_cast<double>(clips.size());
    }
    const double ours = std::stod(rows.at("skip-concat/cond").at(1));
    const double fl_skip = std::stod(rows.at("skip-concat/cond").at(2));
    const double fl_causal = std::stod(rows.at("causal/uncond").at(2));
    double seconds = -1;
    std::ifstream(art / "recipe_seconds.txt") >> seconds;
    const bool timed = seconds >= 0 && seconds <= 1800;
    return {ours - base >= 1.0 && fl_skip <= fl_causal && timed && cfg.inference.s == s,
            "psnr=" + num(ours) + " baseline=" + num(base) + " gain=" + num(ours - base) + " dB, flicker skip=" + num(fl_skip) +
                " causal=" + num(fl_causal) + ", recipe " + num(seconds) + " s"};
}

Outcome table3(const fs::path& art)
{
    const auto rows = read_ablation(art / "ablation.csv");
    const double zero = std::stod(rows.at("zero-pad").at(3)), nearest = std::stod(rows.at("nearest").at(3));
    return {nearest >= zero, "nearest=" + num(nearest) + " dB zero-pad=" + num(zero) + " dB"};
}

Outcome memory()
{
    const IdentityCodec codec;
    std::size_t peaks[2];
    int i = 0;
    for (int size : {256, 1024}) {
        WorkspaceMeter meter;
        tiled_encode(FrameSequence(Tensor4f(2, size, size, 3)), codec, plan_tiles(size, size, 64, 48), plan_chunks(2, 2), &meter);
        peaks[i++] = meter.peak();
    }
    const double ratio = static_cast<double>(peaks[1]) / static_cast<double>(peaks[0]);
    return {peaks[0] > 0 && std::abs(ratio - 1.0) <= 0.10, "peak_256=" + std::to_string(peaks[0]) + " B peak_1024=" + std::to_string(peaks[1]) +
                                                              " B ratio=" + num(ratio)};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    std::string artifacts = "desk_artifacts";
    std::vector<int> only;
    app.add_option("--artifacts", artifacts, "Directory produced by the desk training recipe");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);

    struct Criterion {
        int id;
        const char* name;
        double limit_s;  // 0: no runtime bound
        std::function<Outcome()> run;
    };
    const fs::path art = artifacts;
    const std::vector<Criterion> criteria{
        {1, "tiled codec seam-freeness", 5, tiled_identity},
        {2, "sparse attention oracle equivalence", 30, attention_oracle},
        {3, "gradient correctness", 60, gradients},
        {4, "flow-matching sampler exactness", 0, sampler},
        {5, "scheduler bounded error", 1, scheduler},
        {6, "zero-init conditional decoder identity", 0, zero_init},
        {7, "conditioning invariants", 5, conditioning},
        {8, "end-to-end learning signal", 0, [&] { return end_to_end(art); }},
        {9, "nearest vs zero-pad conditioning", 0, [&] { return table3(art); }},
        {10, "memory contract", 0, memory},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << " [" << num(secs) << " s"
                  << (c.limit_s > 0 ? ", limit " + num(c.limit_s) + " s" : std::string()) << "]\n";
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    return failed == 0 ? 0 : 1;
}
