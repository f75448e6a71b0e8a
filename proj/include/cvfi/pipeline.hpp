#ifndef CVFI_PIPELINE_HPP
#define CVFI_PIPELINE_HPP

#include "cvfi/config.hpp"
#include "cvfi/denoiser.hpp"
#include "cvfi/flow_matching.hpp"
#include "cvfi/scheduler.hpp"
#include "cvfi/tiling.hpp"
#include "cvfi/toy_vae.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cvfi {

/// Deterministic synthetic clips; eval clips use a disjoint seed range.
std::vector<FrameSequence> synthetic_corpus(const DataConfig& data, bool eval);

/// Per-channel affine map taking codec latents to roughly unit scale.
struct LatentNorm {
    RowVecX<float> mean;
    RowVecX<float> std;

    Tensor4f apply(const Tensor4f& z) const;
    Tensor4f invert(const Tensor4f& z) const;
    nlohmann::json to_json() const;
    static LatentNorm from_json(const nlohmann::json& j);
    static LatentNorm identity(int channels);
};

LatentNorm fit_latent_norm(const std::vector<Tensor4f>& latents);

/// Latents for one (clip, s) pair, trimmed so (T−1) % s == 0 and padded to
/// whole chunks.
struct LatentExample {
    Tensor4f gt;    // normalized GT latent
    Tensor4f lq;    // normalized latent of the nn-upsampled condition
    Tensor4f mask;  // mask latent, r_t channels
    int s = 1;
};

/// Padded conditioning inputs for a high-rate clip of `frames_hq` frames.
struct ConditionVideo {
    Tensor4f lq_up;  // nn-upsampled LQ, padded by repeating the last frame
    Tensor4f mask;   // keyframe mask, zero in the padding
    int frames_hq = 0;
    int padded = 0;
};

ConditionVideo make_condition(const FrameSequence& lq, int s, int chunk_len);

/// Encodes every (clip, s) pair for s in [s_min, s_max]. With `fit_norm`
/// the normalization is estimated from the GT latents and written to `norm`.
std::vector<LatentExample> build_latent_cache(const PipelineConfig& cfg, const FrameCodec& codec, const std::vector<FrameSequence>& corpus,
                                              LatentNorm& norm, bool fit_norm);

struct DitTrainRecord {
    int step = 0;
    double loss = 0;
};

/// Steps [start_step, end_step) of diffusion-forcing flow-matching training.
/// Each sample is a random window of 1..max_window_chunks consecutive chunks
/// and a spatial crop aligned to attention chunks, with an independent
/// shifted τ per chunk. Batch contents depend only on
/// (seed, step), so resumed runs replay the uninterrupted one.
std::vector<DitTrainRecord> train_dit(Denoiser<float>& model, Adam<float>& optimizer, const std::vector<LatentExample>& cache,
                                      const PipelineConfig& cfg, int start_step, int end_step,
                                      const std::function<void(int)>& on_step_done = nullptr);

struct Models {
    std::shared_ptr<const ToyVae<float>> vae;
    std::shared_ptr<const Denoiser<float>> dit;
    LatentNorm norm;
};

struct InferenceOptions {
    InferenceMode mode = InferenceMode::skip_concat;
    int steps = 16;
    double shift = 8.0;
    int skip_period = 2;
    int max_chunks_per_invocation = 3;
    std::uint64_t seed = 0;
    bool cond_decoder = true;
};

InferenceOptions inference_options(const PipelineConfig& cfg);

struct InferenceResult {
    FrameSequence video;
    int frames_hq = 0;
    int padded_frames = 0;  // frames added to reach whole chunks
    int chunk_count = 0;
    int peak_resident_chunks = 0;
    double generated_keyframe_psnr = 0;  // before keyframe passthrough
    GenerationPlan plan;
};

/// Keyframes at stride s in, s·(T−1)+1 frames out. Keyframes of the result
/// are the input frames bit for bit.
InferenceResult run_inference(const FrameSequence& lq, int s, const Models& models, const PipelineConfig& cfg, const InferenceOptions& opt);

/// out[t] = lq[⌊t/s⌋].
FrameSequence repeat_previous(const FrameSequence& lq, int s);

/// PSNR over frames t with t mod s ≠ 0.
double interpolated_psnr(const FrameSequence& gt, const FrameSequence& out, int s);

/// Keyframe PSNR after a plain codec round trip of a conditioning video.
double keyframe_reconstruction_psnr(const FrameSequence& conditioner, const FrameSequence& gt, int s, const FrameCodec& codec,
                                    const PipelineConfig& cfg);

/// First s·⌊(T−1)/s⌋+1 frames of a clip.
FrameSequence trim_for_factor(const FrameSequence& clip, int s);

struct VaeRun {
    ToyVae<float> vae;
    std::vector<VaeTrainRecord> base_trace;
    std::vector<VaeTrainRecord> cond_trace;
};

/// Base stage (encoder + decoder), then the conditional branch with the base frozen.
VaeRun train_vae_recipe(const PipelineConfig& cfg, const std::vector<FrameSequence>& corpus);

void save_models(const Models& models, const PipelineConfig& cfg, const std::filesystem::path& dir);
Models load_models(const PipelineConfig& cfg, const std::filesystem::path& dir);

}  // namespace cvfi

#endif  // CVFI_PIPELINE_HPP
