#ifndef CVFI_OPTIM_HPP
#define CVFI_OPTIM_HPP

#include "cvfi/autograd.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace cvfi {

/// Adam with decoupled weight decay and optional global-norm clipping.
template <typename Scalar>
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 0.0;  // 0 disables clipping
    long step = 0;
    std::vector<MatX<Scalar>> m;
    std::vector<MatX<Scalar>> v;

    void reset(const ParamSet<Scalar>& params)
    {
        m = params.zeros_like();
        v = params.zeros_like();
        step = 0;
    }

    /// Applies one update. Slots with trainable[slot] == false are untouched.
    void update(ParamSet<Scalar>& params, std::vector<MatX<Scalar>>& grads, const std::vector<bool>* trainable = nullptr)
    {
        if (m.size() != params.values.size()) reset(params);
        ++step;
        Scalar factor = Scalar(1);
        if (clip_norm > 0) {
            double sq = 0;
            for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
            const double norm = std::sqrt(sq);
            if (norm > clip_norm) factor = static_cast<Scalar>(clip_norm / norm);
        }
        const Scalar b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
        const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1, static_cast<double>(step)));
        const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2, static_cast<double>(step)));
        const Scalar lr_s = static_cast<Scalar>(lr), eps_s = static_cast<Scalar>(eps), wd = static_cast<Scalar>(lr * weight_decay);
        for (std::size_t i = 0; i < params.values.size(); ++i) {
            if (trainable && !(*trainable)[i]) continue;
            const auto g = (grads[i] * factor).array();
            m[i].array() = b1 * m[i].array() + (Scalar(1) - b1) * g;
            v[i].array() = b2 * v[i].array() + (Scalar(1) - b2) * g.square();
            if (wd != Scalar(0)) params.values[i] *= (Scalar(1) - wd);
            params.values[i].array() -= lr_s * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps_s);
        }
    }
};

/// Uniform(-bound, bound) fill with bound = gain / sqrt(fan_in).
template <typename Scalar>
MatX<Scalar> init_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng, double gain = 1.0)
{
    const double bound = gain / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatX<Scalar> out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<Scalar>(dist(rng));
    return out;
}

}  // namespace cvfi

#endif  // CVFI_OPTIM_HPP
