#ifndef CVFI_CONFIG_HPP
#define CVFI_CONFIG_HPP

#include "cvfi/denoiser.hpp"
#include "cvfi/toy_vae.hpp"
#include "cvfi/video_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cvfi {

enum class InferenceMode { causal, skip_concat };

std::string to_string(InferenceMode m);
InferenceMode inference_mode_from_string(const std::string& s);

struct DataConfig {
    SyntheticSpec spec;
    int train_count = 16;
    int eval_count = 4;
    int frames = 33;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 7;
};

struct VaeTrainingConfig {
    int steps = 5000;
    int cond_steps = 1500;
    int batch = 4;
    int crop = 16;
    double lr = 2e-3;
    std::uint64_t seed = 11;
};

struct DitTrainingConfig {
    int steps = 3000;
    int batch = 4;
    double lr = 1e-3;
    double shift_train = 4.0;
    int s_min = 2;
    int s_max = 4;
    int max_window_chunks = 3;
    int crop = 32;  // spatial crop in pixels, a multiple of the tile stride
    int checkpoint_every = 500;
    std::uint64_t seed = 13;
};

struct InferenceConfig {
    int steps = 16;
    double shift_infer = 8.0;
    InferenceMode mode = InferenceMode::skip_concat;
    int s = 2;
    int skip_period = 2;
    int max_chunks_per_invocation = 3;
    std::uint64_t seed = 17;
};

struct PipelineConfig {
    DataConfig data;
    VaeConfig codec;
    int tile = 32;
    int tile_stride = 16;
    int chunk_len = 8;
    DenoiserConfig denoiser;
    VaeTrainingConfig vae_training;
    DitTrainingConfig training;
    InferenceConfig inference;
    int threads = 1;

    LatentLayout latent_layout() const;
};

/// Rejects every geometry or range violation with a message naming the
/// offending keys. Called by config_from_json.
void validate(const PipelineConfig& cfg);

nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Missing keys keep their defaults; unknown keys are errors.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides; value is parsed as JSON, else taken as a string.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

}  // namespace cvfi

#endif  // CVFI_CONFIG_HPP
