#include "cvfi/sparse_attention.hpp"

#include <cstdlib>

namespace cvfi {

void validate(const ChunkGrid& grid)
{
    if (grid.nT < 1 || grid.nH < 1 || grid.nW < 1 || grid.tokens_per_chunk < 1)
        throw std::invalid_argument("chunk grid dimensions must be positive");
}

bool chunks_allowed(const WindowSpec& spec, ChunkIndex q, ChunkIndex k)
{
    if (!spec.temporal_dense && q.t != k.t) return false;
    return std::abs(q.i - k.i) <= spec.radius && std::abs(q.j - k.j) <= spec.radius;
}

bool allowed(const ChunkGrid& grid, const WindowSpec& spec, int q_token, int k_token)
{
    return chunks_allowed(spec, grid.chunk_of_token(q_token), grid.chunk_of_token(k_token));
}

std::vector<std::vector<int>> allowed_chunks(const ChunkGrid& grid, const WindowSpec& spec)
{
    validate(grid);
    if (spec.radius < 0) throw std::invalid_argument("window radius must be >= 0");
    std::vector<std::vector<int>> out(grid.chunk_count());
    for (int qc = 0; qc < grid.chunk_count(); ++qc) {
        const ChunkIndex q = grid.chunk_index(qc);
        for (int kc = 0; kc < grid.chunk_count(); ++kc)
            if (chunks_allowed(spec, q, grid.chunk_index(kc))) out[qc].push_back(kc);
    }
    return out;
}

std::int64_t flop_estimate(const ChunkGrid& grid, const WindowSpec& spec)
{
    validate(grid);
    auto axis_pairs = [&](int n) {
        std::int64_t pairs = 0;
        for (int a = 0; a < n; ++a) pairs += std::min(n - 1, a + spec.radius) - std::max(0, a - spec.radius) + 1;
        return pairs;
    };
    const std::int64_t t_pairs = spec.temporal_dense ? std::int64_t{grid.nT} * grid.nT : grid.nT;
    const std::int64_t tpc = grid.tokens_per_chunk;
    return t_pairs * axis_pairs(grid.nH) * axis_pairs(grid.nW) * tpc * tpc;
}

}  // namespace cvfi
