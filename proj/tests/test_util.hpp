#ifndef CVFI_TEST_UTIL_HPP
#define CVFI_TEST_UTIL_HPP

#include "cvfi/autograd.hpp"
#include "cvfi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace cvfi::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cvfi_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename Scalar>
Tensor4<Scalar> random_tensor(Shape3 s, int c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor4<Scalar> t(s, c);
    for (Eigen::Index i = 0; i < t.matrix().size(); ++i) t.matrix().data()[i] = static_cast<Scalar>(d(rng));
    return t;
}

struct GradCheck {
    double max_rel_err = 0;
    int checked = 0;
};

/// Central differences on `per_slot` random entries of every parameter slot,
/// against the reverse-mode gradients in `grads`. Entries where both values
/// are below `floor` in magnitude are skipped.
template <typename LossFn>
GradCheck gradcheck(ParamSet<double>& params, const std::vector<MatXd>& grads, LossFn&& loss, std::mt19937_64& rng, int per_slot,
                    double h = 1e-6, double floor = 1e-7)
{
    GradCheck out;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        MatXd& p = params.values[i];
        for (int n = 0; n < per_slot; ++n) {
            const Eigen::Index k = std::uniform_int_distribution<Eigen::Index>(0, p.size() - 1)(rng);
            const double keep = p.data()[k];
            p.data()[k] = keep + h;
            const double up = loss();
            p.data()[k] = keep - h;
            const double down = loss();
            p.data()[k] = keep;
            const double numeric = (up - down) / (2 * h);
            const double analytic = grads[i].data()[k];
            const double scale = std::max(std::abs(numeric), std::abs(analytic));
            if (scale < floor) continue;
            out.max_rel_err = std::max(out.max_rel_err, std::abs(numeric - analytic) / scale);
            ++out.checked;
        }
    }
    return out;
}

}  // namespace cvfi::test

#endif  // CVFI_TEST_UTIL_HPP
