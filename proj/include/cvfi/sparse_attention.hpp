#ifndef CVFI_SPARSE_ATTENTION_HPP
#define CVFI_SPARSE_ATTENTION_HPP

#include "cvfi/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvfi {

struct ChunkIndex {
    int t = 0, i = 0, j = 0;
};

/// Spatio-temporal chunk layout of a token sequence. Tokens are stored chunk
/// major: token = chunk_id · tokens_per_chunk + slot, with chunk ids ordered
/// (t, i, j).
struct ChunkGrid {
    int nT = 1, nH = 1, nW = 1;
    int tokens_per_chunk = 1;

    int chunk_count() const { return nT * nH * nW; }
    int token_count() const { return chunk_count() * tokens_per_chunk; }
    int chunk_id(int t, int i, int j) const { return (t * nH + i) * nW + j; }
    ChunkIndex chunk_index(int id) const { return {id / (nH * nW), (id / nW) % nH, id % nW}; }
    ChunkIndex chunk_of_token(int token) const { return chunk_index(token / tokens_per_chunk); }
    int slot_of_token(int token) const { return token % tokens_per_chunk; }
};

void validate(const ChunkGrid& grid);

struct WindowSpec {
    int radius = 1;
    /// Diagnostic switch: when false, attention is confined to the query's
    /// own temporal chunk.
    bool temporal_dense = true;
};

bool chunks_allowed(const WindowSpec& spec, ChunkIndex q, ChunkIndex k);
bool allowed(const ChunkGrid& grid, const WindowSpec& spec, int q_token, int k_token);

/// For each query chunk, the key chunk ids it may attend to (ascending).
std::vector<std::vector<int>> allowed_chunks(const ChunkGrid& grid, const WindowSpec& spec);

/// Allowed query–key chunk pairs × tokens_per_chunk².
std::int64_t flop_estimate(const ChunkGrid& grid, const WindowSpec& spec);

namespace attn {

inline void check_inputs(Eigen::Index qr, Eigen::Index qc, Eigen::Index kr, Eigen::Index kc, Eigen::Index vr, Eigen::Index vc,
                         const ChunkGrid& grid, int heads)
{
    if (qr != kr || qr != vr || qc != kc || qc != vc) throw std::invalid_argument("sparse_attention: Q, K, V shapes differ");
    if (qr != grid.token_count())
        throw std::invalid_argument("sparse_attention: " + std::to_string(qr) + " tokens but grid holds " + std::to_string(grid.token_count()));
    if (heads < 1 || qc % heads != 0) throw std::invalid_argument("sparse_attention: width not divisible by head count");
}

template <typename Scalar>
MatX<Scalar> gather_chunks(const MatX<Scalar>& x, const std::vector<int>& chunks, int tpc, Eigen::Index col, Eigen::Index width)
{
    MatX<Scalar> out(static_cast<Eigen::Index>(chunks.size()) * tpc, width);
    for (std::size_t c = 0; c < chunks.size(); ++c)
        out.middleRows(static_cast<Eigen::Index>(c) * tpc, tpc) = x.block(static_cast<Eigen::Index>(chunks[c]) * tpc, col, tpc, width);
    return out;
}

template <typename Scalar>
void scatter_chunks(MatX<Scalar>& x, const MatX<Scalar>& src, const std::vector<int>& chunks, int tpc, Eigen::Index col)
{
    for (std::size_t c = 0; c < chunks.size(); ++c)
        x.block(static_cast<Eigen::Index>(chunks[c]) * tpc, col, tpc, src.cols()) += src.middleRows(static_cast<Eigen::Index>(c) * tpc, tpc);
}

template <typename Scalar>
void softmax_rows(MatX<Scalar>& s)
{
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        auto row = s.row(r);
        row = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
    }
}

}  // namespace attn

/// Multi-head attention restricted to allowed chunk pairs. Q, K, V are
/// tokens × (heads·d); head h uses columns [h·d, (h+1)·d). Only allowed
/// key chunks are gathered per query chunk, so no token×token table exists.
template <typename Scalar>
MatX<Scalar> sparse_attention(const MatX<Scalar>& q, const MatX<Scalar>& k, const MatX<Scalar>& v, const ChunkGrid& grid,
                              const WindowSpec& spec, int heads = 1)
{
    attn::check_inputs(q.rows(), q.cols(), k.rows(), k.cols(), v.rows(), v.cols(), grid, heads);
    const int tpc = grid.tokens_per_chunk;
    const Eigen::Index d = q.cols() / heads;
    const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
    const auto lists = allowed_chunks(grid, spec);
    MatX<Scalar> out(q.rows(), q.cols());
    for (int c = 0; c < grid.chunk_count(); ++c) {
        if (lists[c].empty()) throw std::logic_error("sparse_attention: query chunk with no allowed keys");
        for (int h = 0; h < heads; ++h) {
            const MatX<Scalar> kc = attn::gather_chunks(k, lists[c], tpc, h * d, d);
            const MatX<Scalar> vc = attn::gather_chunks(v, lists[c], tpc, h * d, d);
            MatX<Scalar> s = (q.block(static_cast<Eigen::Index>(c) * tpc, h * d, tpc, d) * kc.transpose()) * inv_sqrt_d;
            attn::softmax_rows(s);
            out.block(static_cast<Eigen::Index>(c) * tpc, h * d, tpc, d).noalias() = s * vc;
        }
    }
    return out;
}

/// Tape version of sparse_attention.
template <typename Scalar>
Var<Scalar> sparse_attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, const ChunkGrid& grid, const WindowSpec& spec, int heads)
{
    attn::check_inputs(q.rows(), q.cols(), k.rows(), k.cols(), v.rows(), v.cols(), grid, heads);
    Tape<Scalar>& t = *q.tape;
    const int tpc = grid.tokens_per_chunk;
    const Eigen::Index d = q.cols() / heads;
    const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
    auto lists = std::make_shared<const std::vector<std::vector<int>>>(allowed_chunks(grid, spec));
    const bool rg = ad::any_grad({q, k, v});
    auto probs = std::make_shared<std::vector<MatX<Scalar>>>();
    if (rg) probs->resize(static_cast<std::size_t>(grid.chunk_count()) * heads);

    const MatX<Scalar>& qv = q.value();
    const MatX<Scalar>& kv = k.value();
    const MatX<Scalar>& vv = v.value();
    MatX<Scalar> out(qv.rows(), qv.cols());
    for (int c = 0; c < grid.chunk_count(); ++c) {
        const auto& keys = (*lists)[c];
        if (keys.empty()) throw std::logic_error("sparse_attention: query chunk with no allowed keys");
        for (int h = 0; h < heads; ++h) {
            const MatX<Scalar> kc = attn::gather_chunks(kv, keys, tpc, h * d, d);
            const MatX<Scalar> vc = attn::gather_chunks(vv, keys, tpc, h * d, d);
            MatX<Scalar> s = (qv.block(static_cast<Eigen::Index>(c) * tpc, h * d, tpc, d) * kc.transpose()) * inv_sqrt_d;
            attn::softmax_rows(s);
            out.block(static_cast<Eigen::Index>(c) * tpc, h * d, tpc, d).noalias() = s * vc;
            if (rg) (*probs)[static_cast<std::size_t>(c) * heads + h] = std::move(s);
        }
    }
    const int chunks = grid.chunk_count();
    return t.push(std::move(out), rg,
                  [q = q.id, k = k.id, v = v.id, lists, probs, chunks, heads, tpc, d, inv_sqrt_d](Tape<Scalar>& t, int self) {
                      const MatX<Scalar>& g = t.grad(self);
                      const MatX<Scalar>& qv = t.value(q);
                      const MatX<Scalar>& kv = t.value(k);
                      const MatX<Scalar>& vv = t.value(v);
                      const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
                      for (int c = 0; c < chunks; ++c) {
                          const auto& keys = (*lists)[c];
                          const Eigen::Index r0 = static_cast<Eigen::Index>(c) * tpc;
                          for (int h = 0; h < heads; ++h) {
                              const MatX<Scalar>& p = (*probs)[static_cast<std::size_t>(c) * heads + h];
                              const auto go = g.block(r0, h * d, tpc, d);
                              if (gv) attn::scatter_chunks<Scalar>(t.grad(v), p.transpose() * go, keys, tpc, h * d);
                              if (!gq && !gk) continue;
                              const MatX<Scalar> vc = attn::gather_chunks(vv, keys, tpc, h * d, d);
                              const MatX<Scalar> dp = go * vc.transpose();
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = dp.cwiseProduct(p).rowwise().sum();
                              const MatX<Scalar> ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * inv_sqrt_d;
                              if (gq) {
                                  const MatX<Scalar> kc = attn::gather_chunks(kv, keys, tpc, h * d, d);
                                  t.grad(q).block(r0, h * d, tpc, d).noalias() += ds * kc;
                              }
                              if (gk) attn::scatter_chunks<Scalar>(t.grad(k), ds.transpose() * qv.block(r0, h * d, tpc, d), keys, tpc, h * d);
                          }
                      }
                  });
}

}  // namespace cvfi

#endif  // CVFI_SPARSE_ATTENTION_HPP
