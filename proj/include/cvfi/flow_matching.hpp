#ifndef CVFI_FLOW_MATCHING_HPP
#define CVFI_FLOW_MATCHING_HPP

// Time convention: τ = 0 is data, τ = 1 is noise.
//   x_τ = (1 − τ)·x0 + τ·x1,   target velocity v = x1 − x0,
// and sampling integrates τ from 1 down to 0.

#include "cvfi/tensor.hpp"

#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvfi {

inline void check_tau(double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("noise level " + std::to_string(tau) + " outside [0, 1]");
}

template <typename D0, typename D1>
auto interpolate_path(const Eigen::MatrixBase<D0>& x0, const Eigen::MatrixBase<D1>& x1, typename D0::Scalar tau)
{
    check_tau(static_cast<double>(tau));
    if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw std::invalid_argument("interpolate_path: shape mismatch");
    return (typename D0::Scalar(1) - tau) * x0 + tau * x1;
}

template <typename Scalar>
Tensor4<Scalar> interpolate_path(const Tensor4<Scalar>& x0, const Tensor4<Scalar>& x1, Scalar tau)
{
    return Tensor4<Scalar>(x0.shape(), MatX<Scalar>(interpolate_path(x0.matrix(), x1.matrix(), tau)));
}

/// τ = s·u / (1 + (s − 1)·u).
double shift_time(double u, double s);

struct ShiftSchedule {
    double shift = 1.0;
    int step_count = 0;
    std::vector<double> grid;  // step_count + 1 knots, 1 → 0
};

ShiftSchedule make_schedule(int step_count, double shift);

enum class ChunkRole { target, context };

struct NoiseLevelAssignment {
    std::vector<double> taus;
    std::vector<ChunkRole> roles;
};

/// One diffusion-forcing training draw over a window of chunks stacked in
/// time: an independent shifted τ and independent unit noise per chunk.
template <typename Scalar>
struct FmSample {
    std::vector<double> taus;
    Tensor4<Scalar> noised;
    Tensor4<Scalar> target;
};

template <typename Scalar>
FmSample<Scalar> draw_fm_sample(const Tensor4<Scalar>& x0, int chunk_frames, double shift, std::mt19937_64& rng)
{
    if (chunk_frames < 1 || x0.frames() % chunk_frames != 0)
        throw std::invalid_argument("draw_fm_sample: " + std::to_string(x0.frames()) + " latent frames not a multiple of chunk length " +
                                    std::to_string(chunk_frames));
    const int n = x0.frames() / chunk_frames;
    FmSample<Scalar> out;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int i = 0; i < n; ++i) out.taus.push_back(shift_time(uniform(rng), shift));
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    MatX<Scalar> x1(x0.matrix().rows(), x0.matrix().cols());
    for (Eigen::Index i = 0; i < x1.size(); ++i) x1.data()[i] = normal(rng);
    out.noised = Tensor4<Scalar>(x0.shape(), x0.channels());
    const Eigen::Index rows = x1.rows() / n;
    for (int i = 0; i < n; ++i)
        out.noised.matrix().middleRows(i * rows, rows) =
            interpolate_path(x0.matrix().middleRows(i * rows, rows), x1.middleRows(i * rows, rows), static_cast<Scalar>(out.taus[i]));
    out.target = Tensor4<Scalar>(x0.shape(), MatX<Scalar>(x1 - x0.matrix()));
    return out;
}

/// Velocity model over a window of chunks stacked along time, one τ per chunk.
template <typename Scalar>
using VelocityFn = std::function<MatX<Scalar>(const Tensor4<Scalar>& x, const std::vector<double>& taus)>;

struct FmLoss {
    double total = 0;
    std::vector<double> per_chunk;
};

/// Mean-squared error between model(x_τ) and x1 − x0, averaged over chunks and elements.
template <typename Scalar>
FmLoss fm_loss(const VelocityFn<Scalar>& model, const Tensor4<Scalar>& gt, int chunk_frames, double shift, std::mt19937_64& rng)
{
    const FmSample<Scalar> s = draw_fm_sample(gt, chunk_frames, shift, rng);
    const MatX<Scalar> pred = model(s.noised, s.taus);
    if (pred.rows() != gt.matrix().rows() || pred.cols() != gt.matrix().cols()) throw std::invalid_argument("fm_loss: model output shape mismatch");
    const MatX<Scalar> diff = pred - s.target.matrix();
    FmLoss out;
    const Eigen::Index rows = diff.rows() / static_cast<Eigen::Index>(s.taus.size());
    for (std::size_t i = 0; i < s.taus.size(); ++i)
        out.per_chunk.push_back(diff.middleRows(static_cast<Eigen::Index>(i) * rows, rows).template cast<double>().squaredNorm() /
                                static_cast<double>(rows * diff.cols()));
    out.total = diff.template cast<double>().squaredNorm() / static_cast<double>(diff.size());
    return out;
}

/// Chunks of one model invocation in temporal order. Context slots carry
/// clean latents; target slots are generated.
template <typename Scalar>
struct SampleWindow {
    Shape3 chunk_shape;
    int channels = 0;
    std::vector<ChunkRole> roles;
    std::vector<const Tensor4<Scalar>*> contexts;  // non-null exactly for context slots
};

/// Euler integration of the targets from τ = 1 to 0 with contexts held at τ = 0.
/// Returns the generated target chunks in slot order.
template <typename Scalar>
std::vector<Tensor4<Scalar>> euler_sample(const VelocityFn<Scalar>& model, const SampleWindow<Scalar>& window, const ShiftSchedule& schedule,
                                          std::mt19937_64& rng)
{
    const std::size_t n = window.roles.size();
    if (n == 0 || window.contexts.size() != n) throw std::invalid_argument("euler_sample: malformed window");
    if (schedule.grid.size() != static_cast<std::size_t>(schedule.step_count) + 1) throw std::invalid_argument("euler_sample: malformed schedule");
    const Eigen::Index rows = window.chunk_shape.positions();
    Tensor4<Scalar> x(Shape3{window.chunk_shape.t * static_cast<int>(n), window.chunk_shape.h, window.chunk_shape.w}, window.channels);
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    for (std::size_t i = 0; i < n; ++i) {
        auto block = x.matrix().middleRows(static_cast<Eigen::Index>(i) * rows, rows);
        if (window.roles[i] == ChunkRole::context) {
            const Tensor4<Scalar>* c = window.contexts[i];
            if (!c) throw std::invalid_argument("euler_sample: missing context latent for slot " + std::to_string(i));
            if (!(c->shape() == window.chunk_shape) || c->channels() != window.channels)
                throw std::invalid_argument("euler_sample: context latent shape mismatch at slot " + std::to_string(i));
            block = c->matrix();
        } else {
            for (Eigen::Index r = 0; r < block.rows(); ++r)
                for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = normal(rng);
        }
    }
    std::vector<double> taus(n, 0.0);
    for (int k = 0; k < schedule.step_count; ++k) {
        for (std::size_t i = 0; i < n; ++i) taus[i] = window.roles[i] == ChunkRole::target ? schedule.grid[k] : 0.0;
        const MatX<Scalar> v = model(x, taus);
        if (v.rows() != x.matrix().rows() || v.cols() != x.matrix().cols()) throw std::invalid_argument("euler_sample: model output shape mismatch");
        const Scalar h = static_cast<Scalar>(schedule.grid[k] - schedule.grid[k + 1]);
        for (std::size_t i = 0; i < n; ++i)
            if (window.roles[i] == ChunkRole::target)
                x.matrix().middleRows(static_cast<Eigen::Index>(i) * rows, rows) -= h * v.middleRows(static_cast<Eigen::Index>(i) * rows, rows);
    }
    std::vector<Tensor4<Scalar>> out;
    for (std::size_t i = 0; i < n; ++i)
        if (window.roles[i] == ChunkRole::target) out.push_back(x.frames_range(static_cast<int>(i) * window.chunk_shape.t, window.chunk_shape.t));
    return out;
}

}  // namespace cvfi

#endif  // CVFI_FLOW_MATCHING_HPP
