#include "cvfi/denoiser.hpp"

namespace cvfi {

void validate(const DenoiserConfig& cfg)
{
    if (cfg.model_dim < 1 || cfg.head_count < 1 || cfg.model_dim % cfg.head_count != 0)
        throw std::invalid_argument("denoiser model_dim " + std::to_string(cfg.model_dim) + " not divisible by head_count " +
                                    std::to_string(cfg.head_count));
    if (cfg.layer_count < 1) throw std::invalid_argument("denoiser layer_count must be >= 1");
    if (cfg.token_patch < 1) throw std::invalid_argument("denoiser token_patch must be >= 1");
    if (cfg.mlp_ratio < 1 || cfg.time_features < 2) throw std::invalid_argument("denoiser mlp_ratio / time_features too small");
    if (cfg.window.radius < 0) throw std::invalid_argument("window radius must be >= 0");
}

TokenLayout make_token_layout(Shape3 latent, int chunk_frames, int spatial_chunk, int patch)
{
    if (patch < 1 || chunk_frames < 1 || spatial_chunk < 1) throw std::invalid_argument("token layout sizes must be positive");
    if (spatial_chunk % patch) throw std::invalid_argument("attention chunk side not divisible by token patch");
    if (latent.t % chunk_frames)
        throw std::invalid_argument("latent frames " + std::to_string(latent.t) + " not a multiple of chunk length " + std::to_string(chunk_frames));
    if (latent.h % spatial_chunk || latent.w % spatial_chunk)
        throw std::invalid_argument("latent " + std::to_string(latent.h) + "x" + std::to_string(latent.w) + " not divisible by attention chunk side " +
                                    std::to_string(spatial_chunk));
    TokenLayout tl;
    tl.latent = latent;
    tl.chunk_frames = chunk_frames;
    tl.chunk_side = spatial_chunk / patch;
    tl.patch = patch;
    const int a = tl.chunk_side;
    tl.grid = ChunkGrid{latent.t / chunk_frames, latent.h / spatial_chunk, latent.w / spatial_chunk, chunk_frames * a * a};
    const int n = tl.grid.token_count();
    tl.token_t.resize(n);
    tl.token_y.resize(n);
    tl.token_x.resize(n);
    for (int token = 0; token < n; ++token) {
        const ChunkIndex c = tl.grid.chunk_of_token(token);
        const int slot = tl.grid.slot_of_token(token);
        const int f = slot / (a * a), ly = (slot / a) % a, lx = slot % a;
        tl.token_t[token] = c.t * chunk_frames + f;
        tl.token_y[token] = c.i * a + ly;
        tl.token_x[token] = c.j * a + lx;
    }
    return tl;
}

}  // namespace cvfi
