#ifndef CVFI_VIDEO_IO_HPP
#define CVFI_VIDEO_IO_HPP

#include "cvfi/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cvfi {

struct Rational {
    int num = 0;
    int den = 1;
};

/// Video as T×H×W×C values in [0,1], C ∈ {1,3}.
struct FrameSequence {
    Tensor4f frames;
    std::optional<Rational> frame_rate_hint;

    FrameSequence() = default;
    explicit FrameSequence(Tensor4f f, std::optional<Rational> rate = std::nullopt) : frames(std::move(f)), frame_rate_hint(rate) {}

    int length() const { return frames.frames(); }
    int height() const { return frames.height(); }
    int width() const { return frames.width(); }
    int channels() const { return frames.channels(); }
};

/// Throws std::invalid_argument when the sequence breaks the value/shape invariants.
void validate(const FrameSequence& seq);

struct VideoManifest {
    int width = 0;
    int height = 0;
    int channels = 3;
    int frame_count = 0;
    std::vector<std::string> frame_files;
    std::optional<std::int64_t> generator_seed;
};

std::string manifest_to_json(const VideoManifest& m);
VideoManifest manifest_from_json(const std::string& text);

enum class MotionKind { linear, sinusoidal, bounce };
enum class Background { solid, gradient, noise_texture };

MotionKind motion_kind_from_string(const std::string& s);
Background background_from_string(const std::string& s);
std::string to_string(MotionKind k);
std::string to_string(Background b);

struct SyntheticSpec {
    int shape_count = 3;
    MotionKind motion_kind = MotionKind::bounce;
    std::pair<double, double> speed_range{1.5, 4.0};  // pixels per frame
    std::pair<int, int> size_range{6, 14};            // diameter in pixels
    Background background = Background::gradient;
};

void validate(const SyntheticSpec& spec);

/// Reads a manifest and its frame files (paths relative to the manifest's directory).
FrameSequence load_video(const std::filesystem::path& manifest_path);

/// Writes one PPM per frame plus `manifest.json` into `dir`. Values are
/// quantized with round-half-up to 8 bits.
VideoManifest save_video(const FrameSequence& seq, const std::filesystem::path& dir,
                         std::optional<std::int64_t> generator_seed = std::nullopt);

std::uint8_t quantize(float v);

/// Deterministic moving-shapes clip; a pure function of its arguments.
FrameSequence gen_synthetic(const SyntheticSpec& spec, int frames, int height, int width, std::uint64_t seed);

/// Center trajectory of each shape, exposed so motion rules are testable.
std::vector<std::vector<std::pair<double, double>>> synthetic_trajectories(const SyntheticSpec& spec, int frames, int height,
                                                                           int width, std::uint64_t seed);

/// Keeps frames 0, s, 2s, ..., T-1. Requires (T-1) % s == 0.
FrameSequence downsample_temporal(const FrameSequence& seq, int s);

inline constexpr double kPsnrCap = 99.0;

double mse(const FrameSequence& a, const FrameSequence& b);
/// Peak-1 PSNR in dB, capped at kPsnrCap for identical inputs.
double psnr(const FrameSequence& a, const FrameSequence& b);
double psnr_from_mse(double mse);
/// Mean squared second temporal difference.
double flicker(const FrameSequence& seq);

}  // namespace cvfi

#endif  // CVFI_VIDEO_IO_HPP
