#ifndef CVFI_TENSOR_HPP
#define CVFI_TENSOR_HPP

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvfi {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVecX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatXf = MatX<float>;
using MatXd = MatX<double>;

/// Spatio-temporal extent of a channels-last volume.
struct Shape3 {
    int t = 0;
    int h = 0;
    int w = 0;

    int positions() const { return t * h * w; }
    bool operator==(const Shape3&) const = default;
};

inline std::string to_string(const Shape3& s)
{
    return std::to_string(s.t) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

/// T×H×W×C array stored as a row-major (T·H·W)×C matrix, so every
/// position is one contiguous row of channels.
template <typename Scalar>
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int t, int h, int w, int c) : shape_{t, h, w}, data_(MatX<Scalar>::Zero(t * h * w, c)) {}
    Tensor4(Shape3 s, int c) : Tensor4(s.t, s.h, s.w, c) {}
    Tensor4(Shape3 s, MatX<Scalar> data) : shape_(s), data_(std::move(data))
    {
        if (data_.rows() != s.positions())
            throw std::invalid_argument("Tensor4: row count does not match shape " + to_string(s));
    }

    static Tensor4 constant(Shape3 s, int c, Scalar v)
    {
        Tensor4 out(s, c);
        out.data_.setConstant(v);
        return out;
    }

    int frames() const { return shape_.t; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    int channels() const { return static_cast<int>(data_.cols()); }
    const Shape3& shape() const { return shape_; }
    bool empty() const { return data_.size() == 0; }

    Eigen::Index row(int t, int y, int x) const { return (static_cast<Eigen::Index>(t) * shape_.h + y) * shape_.w + x; }

    Scalar& operator()(int t, int y, int x, int c) { return data_(row(t, y, x), c); }
    Scalar operator()(int t, int y, int x, int c) const { return data_(row(t, y, x), c); }

    MatX<Scalar>& matrix() { return data_; }
    const MatX<Scalar>& matrix() const { return data_; }

    /// Rows of frame range [t0, t0+count) as a block of the backing matrix.
    auto frame_rows(int t0, int count) { return data_.middleRows(row(t0, 0, 0), static_cast<Eigen::Index>(count) * shape_.h * shape_.w); }
    auto frame_rows(int t0, int count) const { return data_.middleRows(row(t0, 0, 0), static_cast<Eigen::Index>(count) * shape_.h * shape_.w); }

    /// Copy of the sub-volume [t0,t0+nt)×[y0,y0+nh)×[x0,x0+nw).
    Tensor4 crop(int t0, int nt, int y0, int nh, int x0, int nw) const
    {
        if (t0 < 0 || y0 < 0 || x0 < 0 || t0 + nt > shape_.t || y0 + nh > shape_.h || x0 + nw > shape_.w)
            throw std::out_of_range("Tensor4::crop out of bounds");
        Tensor4 out(nt, nh, nw, channels());
        for (int t = 0; t < nt; ++t)
            for (int y = 0; y < nh; ++y)
                out.data_.middleRows(out.row(t, y, 0), nw) = data_.middleRows(row(t0 + t, y0 + y, x0), nw);
        return out;
    }

    Tensor4 frames_range(int t0, int nt) const { return crop(t0, nt, 0, shape_.h, 0, shape_.w); }

    /// Writes `src` into this tensor at offset (t0, y0, x0).
    void paste(const Tensor4& src, int t0, int y0, int x0)
    {
        for (int t = 0; t < src.frames(); ++t)
            for (int y = 0; y < src.height(); ++y)
                data_.middleRows(row(t0 + t, y0 + y, x0), src.width()) = src.data_.middleRows(src.row(t, y, 0), src.width());
    }

    template <typename Other>
    Tensor4<Other> cast() const
    {
        return Tensor4<Other>(shape_, data_.template cast<Other>().eval());
    }

    std::size_t bytes() const { return static_cast<std::size_t>(data_.size()) * sizeof(Scalar); }

private:
    Shape3 shape_{};
    MatX<Scalar> data_;
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

/// Concatenates tensors along time; all inputs share H, W, C.
template <typename Scalar>
Tensor4<Scalar> concat_frames(const std::vector<Tensor4<Scalar>>& parts)
{
    if (parts.empty()) return {};
    int total = 0;
    for (const auto& p : parts) {
        if (p.height() != parts[0].height() || p.width() != parts[0].width() || p.channels() != parts[0].channels())
            throw std::invalid_argument("concat_frames: mismatched spatial dims or channels");
        total += p.frames();
    }
    Tensor4<Scalar> out(total, parts[0].height(), parts[0].width(), parts[0].channels());
    int t = 0;
    for (const auto& p : parts) {
        out.frame_rows(t, p.frames()) = p.matrix();
        t += p.frames();
    }
    return out;
}

}  // namespace cvfi

#endif  // CVFI_TENSOR_HPP
