#ifndef CVFI_AUTOGRAD_HPP
#define CVFI_AUTOGRAD_HPP

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every value produced during a forward pass together with a
// closure that pushes the output gradient back to its inputs. Nodes that do
// not require gradients never allocate a gradient buffer, so an unrecorded
// tape doubles as the inference path.

#include "cvfi/tensor.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvfi {

/// Named, ordered parameter tensors.
template <typename Scalar>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<MatX<Scalar>> values;

    int add(std::string name, MatX<Scalar> init)
    {
        names.push_back(std::move(name));
        values.push_back(std::move(init));
        return static_cast<int>(values.size()) - 1;
    }

    int size() const { return static_cast<int>(values.size()); }

    int index(const std::string& name) const
    {
        for (int i = 0; i < size(); ++i)
            if (names[i] == name) return i;
        throw std::out_of_range("no parameter named '" + name + "'");
    }

    std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& v : values) n += static_cast<std::size_t>(v.size());
        return n;
    }

    std::vector<MatX<Scalar>> zeros_like() const
    {
        std::vector<MatX<Scalar>> out;
        out.reserve(values.size());
        for (const auto& v : values) out.push_back(MatX<Scalar>::Zero(v.rows(), v.cols()));
        return out;
    }

    template <typename Other>
    ParamSet<Other> cast() const
    {
        ParamSet<Other> out;
        out.names = names;
        for (const auto& v : values) out.values.push_back(v.template cast<Other>());
        return out;
    }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    int id = -1;

    const MatX<Scalar>& value() const { return tape->value(*this); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
public:
    using Mat = MatX<Scalar>;
    using Backward = std::function<void(Tape&, int)>;

    /// With `record == false` no backward closures are kept.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var<Scalar> constant(Mat v) { return push(std::move(v), false, nullptr); }
    Var<Scalar> input(Mat v) { return push(std::move(v), record_, nullptr); }

    /// Makes `params` available through param(slot). Slots with a false
    /// entry in `trainable` are bound as constants.
    void bind(const ParamSet<Scalar>& params, const std::vector<bool>* trainable = nullptr)
    {
        params_ = &params;
        trainable_ = trainable;
        slot_ids_.assign(params.size(), -1);
    }

    Var<Scalar> param(int slot)
    {
        if (!params_) throw std::logic_error("Tape::param called before bind");
        int& id = slot_ids_.at(slot);
        if (id < 0) {
            const bool rg = record_ && (!trainable_ || (*trainable_)[slot]);
            id = push(params_->values[slot], rg, nullptr).id;
        }
        return {this, id};
    }

    Var<Scalar> push(Mat value, bool requires_grad, Backward back)
    {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad && record_;
        if (n.requires_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(Var<Scalar> v) const { return nodes_[v.id].value; }
    const Mat& value(int id) const { return nodes_[id].value; }
    bool requires_grad(Var<Scalar> v) const { return nodes_[v.id].requires_grad; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer of node `id`, zero-initialized on first touch.
    Mat& grad(int id)
    {
        Node& n = nodes_[id];
        if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }
    const Mat& grad(Var<Scalar> v) { return grad(v.id); }

    void backward(Var<Scalar> loss, Scalar seed = Scalar(1))
    {
        if (!record_) throw std::logic_error("backward on a non-recording tape");
        if (value(loss).size() != 1) throw std::invalid_argument("backward expects a scalar loss");
        grad(loss.id)(0, 0) += seed;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.back && n.grad.size() != 0) n.back(*this, i);
        }
    }

    /// Adds the gradients of bound parameters into `grads` (indexed by slot).
    void accumulate_param_grads(std::vector<Mat>& grads)
    {
        for (int slot = 0; slot < static_cast<int>(slot_ids_.size()); ++slot) {
            const int id = slot_ids_[slot];
            if (id < 0 || !nodes_[id].requires_grad || nodes_[id].grad.size() == 0) continue;
            grads[slot] += nodes_[id].grad;
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Backward back;
    };

    bool record_;
    std::vector<Node> nodes_;
    const ParamSet<Scalar>* params_ = nullptr;
    const std::vector<bool>* trainable_ = nullptr;
    std::vector<int> slot_ids_;
};

namespace ad {

template <typename Scalar>
bool any_grad(std::initializer_list<Var<Scalar>> vs)
{
    for (auto v : vs)
        if (v.tape->requires_grad(v)) return true;
    return false;
}

template <typename Scalar>
void check_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace ad

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b)
{
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = a.value() * b.value();
    return t.push(std::move(out), ad::any_grad({a, b}), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
        if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
    });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b)
{
    ad::check_same_shape(a, b, "add");
    Tape<Scalar>& t = *a.tape;
    return t.push(a.value() + b.value(), ad::any_grad({a, b}), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
        if (t.requires_grad(a)) t.grad(a) += t.grad(self);
        if (t.requires_grad(b)) t.grad(b) += t.grad(self);
    });
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b)
{
    ad::check_same_shape(a, b, "sub");
    Tape<Scalar>& t = *a.tape;
    return t.push(a.value() - b.value(), ad::any_grad({a, b}), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
        if (t.requires_grad(a)) t.grad(a) += t.grad(self);
        if (t.requires_grad(b)) t.grad(b) -= t.grad(self);
    });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b)
{
    ad::check_same_shape(a, b, "mul");
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = a.value().cwiseProduct(b.value());
    return t.push(std::move(out), ad::any_grad({a, b}), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(a)) t.grad(a) += g.cwiseProduct(t.value(b));
        if (t.requires_grad(b)) t.grad(b) += g.cwiseProduct(t.value(a));
    });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s)
{
    Tape<Scalar>& t = *a.tape;
    return t.push(a.value() * s, t.requires_grad(a), [a = a.id, s](Tape<Scalar>& t, int self) { t.grad(a) += t.grad(self) * s; });
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> a, Scalar s)
{
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = a.value().array() + s;
    return t.push(std::move(out), t.requires_grad(a), [a = a.id](Tape<Scalar>& t, int self) { t.grad(a) += t.grad(self); });
}

/// Adds a 1×n row to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row)
{
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = a.value().rowwise() + row.value().row(0);
    return t.push(std::move(out), ad::any_grad({a, row}), [a = a.id, r = row.id](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(a)) t.grad(a) += g;
        if (t.requires_grad(r)) t.grad(r) += g.colwise().sum();
    });
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b)
{
    return add_row(matmul(x, w), b);
}

template <typename Scalar>
Var<Scalar> silu(Var<Scalar> a)
{
    Tape<Scalar>& t = *a.tape;
    const auto& x = a.value();
    MatX<Scalar> out = x.array() / (Scalar(1) + (-x.array()).exp());
    return t.push(std::move(out), t.requires_grad(a), [a = a.id](Tape<Scalar>& t, int self) {
        const auto x = t.value(a).array();
        const auto s = (Scalar(1) / (Scalar(1) + (-x).exp())).eval();
        t.grad(a).array() += t.grad(self).array() * (s * (Scalar(1) + x * (Scalar(1) - s)));
    });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a)
{
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = Scalar(1) / (Scalar(1) + (-a.value().array()).exp());
    return t.push(std::move(out), t.requires_grad(a), [a = a.id](Tape<Scalar>& t, int self) {
        const auto s = t.value(self).array();
        t.grad(a).array() += t.grad(self).array() * s * (Scalar(1) - s);
    });
}

/// tanh-approximated GELU.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a)
{
    Tape<Scalar>& t = *a.tape;
    constexpr Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
    constexpr Scalar k = Scalar(0.044715);
    const auto x = a.value().array();
    MatX<Scalar> out = Scalar(0.5) * x * (Scalar(1) + (c * (x + k * x.cube())).tanh());
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, c, k](Tape<Scalar>& t, int self) {
        const auto x = t.value(a).array();
        const auto th = (c * (x + k * x.cube())).tanh().eval();
        const auto d = (Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * x * (Scalar(1) - th.square()) * c * (Scalar(1) + Scalar(3) * k * x.square())).eval();
        t.grad(a).array() += t.grad(self).array() * d;
    });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a)
{
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out = a.value().array().exp();
    return t.push(std::move(out), t.requires_grad(a), [a = a.id](Tape<Scalar>& t, int self) {
        t.grad(a).array() += t.grad(self).array() * t.value(self).array();
    });
}

/// Per-row normalization to zero mean and unit variance (no affine).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> a, Scalar eps = Scalar(1e-6))
{
    Tape<Scalar>& t = *a.tape;
    const auto& x = a.value();
    const Eigen::Index n = x.cols();
    MatX<Scalar> centered = x.colwise() - x.rowwise().mean();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std = ((centered.array().square().rowwise().sum() / Scalar(n)) + eps).rsqrt();
    MatX<Scalar> out = centered.array().colwise() * inv_std.array();
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, inv_std, n](Tape<Scalar>& t, int self) {
        const auto& y = t.value(self);
        const auto& g = t.grad(self);
        // dx = inv_std * (g - mean(g) - y * mean(g*y))
        const auto mean_g = (g.rowwise().sum() / Scalar(n)).eval();
        const auto mean_gy = (g.cwiseProduct(y).rowwise().sum() / Scalar(n)).eval();
        MatX<Scalar> dx = (g.colwise() - mean_g) - (y.array().colwise() * mean_gy.array()).matrix();
        t.grad(a) += (dx.array().colwise() * inv_std.array()).matrix();
    });
}

/// out.row(i) = a.row(index[i]).
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::shared_ptr<const std::vector<int>> index)
{
    Tape<Scalar>& t = *a.tape;
    const auto& x = a.value();
    MatX<Scalar> out(static_cast<Eigen::Index>(index->size()), x.cols());
    for (std::size_t i = 0; i < index->size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row((*index)[i]);
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, index](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < index->size(); ++i) ga.row((*index)[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count)
{
    Tape<Scalar>& t = *a.tape;
    if (start < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols out of range");
    MatX<Scalar> out = a.value().middleCols(start, count);
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, start, count](Tape<Scalar>& t, int self) {
        t.grad(a).middleCols(start, count) += t.grad(self);
    });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts)
{
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape<Scalar>& t = *parts[0].tape;
    Eigen::Index cols = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows()) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
        rg = rg || t.requires_grad(p);
    }
    MatX<Scalar> out(parts[0].rows(), cols);
    std::vector<int> ids;
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
        ids.push_back(p.id);
    }
    return t.push(std::move(out), rg, [ids](Tape<Scalar>& t, int self) {
        Eigen::Index c = 0;
        for (int id : ids) {
            const Eigen::Index n = t.value(id).cols();
            if (t.requires_grad(id)) t.grad(id) += t.grad(self).middleCols(c, n);
            c += n;
        }
    });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a)
{
    Tape<Scalar>& t = *a.tape;
    MatX<Scalar> out(1, 1);
    out(0, 0) = a.value().sum();
    return t.push(std::move(out), t.requires_grad(a), [a = a.id](Tape<Scalar>& t, int self) { t.grad(a).array() += t.grad(self)(0, 0); });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a)
{
    return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// mean((a - target)^2) against a constant target.
template <typename Scalar>
Var<Scalar> mse_loss(Var<Scalar> a, std::shared_ptr<const MatX<Scalar>> target)
{
    Tape<Scalar>& t = *a.tape;
    if (target->rows() != a.rows() || target->cols() != a.cols()) throw std::invalid_argument("mse_loss: shape mismatch");
    const Scalar n = static_cast<Scalar>(a.value().size());
    MatX<Scalar> out(1, 1);
    out(0, 0) = (a.value() - *target).squaredNorm() / n;
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, target, n](Tape<Scalar>& t, int self) {
        t.grad(a) += (t.value(a) - *target) * (Scalar(2) * t.grad(self)(0, 0) / n);
    });
}

/// mean(|a - target|) against a constant target; subgradient 0 at ties.
template <typename Scalar>
Var<Scalar> l1_loss(Var<Scalar> a, std::shared_ptr<const MatX<Scalar>> target)
{
    Tape<Scalar>& t = *a.tape;
    if (target->rows() != a.rows() || target->cols() != a.cols()) throw std::invalid_argument("l1_loss: shape mismatch");
    const Scalar n = static_cast<Scalar>(a.value().size());
    MatX<Scalar> out(1, 1);
    out(0, 0) = (a.value() - *target).cwiseAbs().sum() / n;
    return t.push(std::move(out), t.requires_grad(a), [a = a.id, target, n](Tape<Scalar>& t, int self) {
        t.grad(a).array() += (t.value(a) - *target).array().sign() * (t.grad(self)(0, 0) / n);
    });
}

/// Mean over elements of KL(N(mean, exp(logvar)) || N(0, 1)).
template <typename Scalar>
Var<Scalar> kl_normal(Var<Scalar> mu, Var<Scalar> logvar)
{
    ad::check_same_shape(mu, logvar, "kl_normal");
    Tape<Scalar>& t = *mu.tape;
    const Scalar n = static_cast<Scalar>(mu.value().size());
    MatX<Scalar> out(1, 1);
    out(0, 0) = Scalar(0.5) * (mu.value().array().square() + logvar.value().array().exp() - Scalar(1) - logvar.value().array()).sum() / n;
    return t.push(std::move(out), ad::any_grad({mu, logvar}), [m = mu.id, lv = logvar.id, n](Tape<Scalar>& t, int self) {
        const Scalar g = t.grad(self)(0, 0) / n;
        if (t.requires_grad(m)) t.grad(m) += t.value(m) * g;
        if (t.requires_grad(lv)) t.grad(lv).array() += Scalar(0.5) * (t.value(lv).array().exp() - Scalar(1)) * g;
    });
}

/// A volume on the tape: rows are (t, y, x) positions, columns channels.
template <typename Scalar>
struct Vol {
    Var<Scalar> v;
    Shape3 s;
};

struct Conv3dGeometry {
    int kt = 3, kh = 3, kw = 3;
    int st = 1, sh = 1, sw = 1;
    int pt = 1, ph = 1, pw = 1;

    Shape3 output(Shape3 in) const
    {
        return {(in.t + 2 * pt - kt) / st + 1, (in.h + 2 * ph - kh) / sh + 1, (in.w + 2 * pw - kw) / sw + 1};
    }
    int taps() const { return kt * kh * kw; }
};

namespace ad {

// Visits every (output row, tap, input row or -1 when padded).
template <typename Fn>
void for_each_tap(Shape3 in, Shape3 out, const Conv3dGeometry& g, Fn&& fn)
{
    Eigen::Index orow = 0;
    for (int ot = 0; ot < out.t; ++ot)
        for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox, ++orow) {
                int tap = 0;
                for (int dt = 0; dt < g.kt; ++dt) {
                    const int it = ot * g.st - g.pt + dt;
                    for (int dy = 0; dy < g.kh; ++dy) {
                        const int iy = oy * g.sh - g.ph + dy;
                        for (int dx = 0; dx < g.kw; ++dx, ++tap) {
                            const int ix = ox * g.sw - g.pw + dx;
                            const bool inside = it >= 0 && it < in.t && iy >= 0 && iy < in.h && ix >= 0 && ix < in.w;
                            fn(orow, tap, inside ? (static_cast<Eigen::Index>(it) * in.h + iy) * in.w + ix : Eigen::Index(-1));
                        }
                    }
                }
            }
}

template <typename Scalar>
MatX<Scalar> im2col(const MatX<Scalar>& x, Shape3 in, Shape3 out, const Conv3dGeometry& g)
{
    const Eigen::Index c = x.cols();
    MatX<Scalar> cols = MatX<Scalar>::Zero(out.positions(), g.taps() * c);
    for_each_tap(in, out, g, [&](Eigen::Index orow, int tap, Eigen::Index irow) {
        if (irow >= 0) cols.row(orow).segment(tap * c, c) = x.row(irow);
    });
    return cols;
}

}  // namespace ad

/// 3-D convolution via im2col. Weight is (taps·C_in)×C_out, bias 1×C_out.
template <typename Scalar>
Vol<Scalar> conv3d(Vol<Scalar> x, Var<Scalar> w, Var<Scalar> b, const Conv3dGeometry& g)
{
    Tape<Scalar>& t = *x.v.tape;
    const Eigen::Index cin = x.v.cols();
    if (w.rows() != g.taps() * cin) throw std::invalid_argument("conv3d: weight rows do not match taps x input channels");
    const Shape3 out_shape = g.output(x.s);
    if (out_shape.t < 1 || out_shape.h < 1 || out_shape.w < 1) throw std::invalid_argument("conv3d: empty output for input " + to_string(x.s));
    auto cols = std::make_shared<MatX<Scalar>>(ad::im2col(x.v.value(), x.s, out_shape, g));
    MatX<Scalar> out = (*cols) * w.value();
    out.rowwise() += b.value().row(0);
    const bool rg = ad::any_grad({x.v, w, b});
    if (!rg) cols.reset();
    Var<Scalar> y = t.push(std::move(out), rg, [xi = x.v.id, wi = w.id, bi = b.id, cols, in = x.s, out_shape, g, cin](Tape<Scalar>& t, int self) {
        const auto& gy = t.grad(self);
        if (t.requires_grad(wi)) t.grad(wi).noalias() += cols->transpose() * gy;
        if (t.requires_grad(bi)) t.grad(bi) += gy.colwise().sum();
        if (t.requires_grad(xi)) {
            const MatX<Scalar> gcols = gy * t.value(wi).transpose();
            auto& gx = t.grad(xi);
            ad::for_each_tap(in, out_shape, g, [&](Eigen::Index orow, int tap, Eigen::Index irow) {
                if (irow >= 0) gx.row(irow) += gcols.row(orow).segment(tap * cin, cin);
            });
        }
    });
    return {y, out_shape};
}

/// Nearest-neighbor upsampling by (ft, fs, fs).
template <typename Scalar>
Vol<Scalar> upsample_nearest(Vol<Scalar> x, int ft, int fs)
{
    const Shape3 in = x.s;
    const Shape3 os{in.t * ft, in.h * fs, in.w * fs};
    auto src = std::make_shared<std::vector<int>>();
    src->reserve(os.positions());
    for (int tt = 0; tt < os.t; ++tt)
        for (int y = 0; y < os.h; ++y)
            for (int xx = 0; xx < os.w; ++xx) src->push_back(((tt / ft) * in.h + y / fs) * in.w + xx / fs);
    return {gather_rows(x.v, std::shared_ptr<const std::vector<int>>(src)), os};
}

/// Box average pooling by (ft, fs, fs); dims must divide.
template <typename Scalar>
Vol<Scalar> avg_pool(Vol<Scalar> x, int ft, int fs)
{
    Tape<Scalar>& t = *x.v.tape;
    const Shape3 in = x.s;
    if (in.t % ft || in.h % fs || in.w % fs) throw std::invalid_argument("avg_pool: dims not divisible by pooling factors");
    const Shape3 os{in.t / ft, in.h / fs, in.w / fs};
    const Scalar inv = Scalar(1) / static_cast<Scalar>(ft * fs * fs);
    auto dst = std::make_shared<std::vector<int>>();
    dst->reserve(in.positions());
    for (int tt = 0; tt < in.t; ++tt)
        for (int y = 0; y < in.h; ++y)
            for (int xx = 0; xx < in.w; ++xx) dst->push_back(((tt / ft) * os.h + y / fs) * os.w + xx / fs);
    const auto& xv = x.v.value();
    MatX<Scalar> out = MatX<Scalar>::Zero(os.positions(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) out.row((*dst)[r]) += xv.row(r);
    out *= inv;
    Var<Scalar> y = t.push(std::move(out), t.requires_grad(x.v), [xi = x.v.id, dst, inv](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(xi);
        for (Eigen::Index r = 0; r < gx.rows(); ++r) gx.row(r) += g.row((*dst)[r]) * inv;
    });
    return {y, os};
}

}  // namespace cvfi

#endif  // CVFI_AUTOGRAD_HPP
