#ifndef CVFI_TILING_HPP
#define CVFI_TILING_HPP

#include "cvfi/tensor.hpp"
#include "cvfi/video_io.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cvfi {

/// Spatial tiling geometry. Origins step by `stride` from 0 while inside the
/// frame; tiles past the boundary are clipped rather than shifted inward.
struct TilePlan {
    int frame_h = 0, frame_w = 0;
    int tile_h = 0, tile_w = 0;
    int stride_h = 0, stride_w = 0;
    std::vector<int> row_origins;
    std::vector<int> col_origins;

    int overlap_h() const { return tile_h - stride_h; }
    int overlap_w() const { return tile_w - stride_w; }
    int tile_rows() const { return static_cast<int>(row_origins.size()); }
    int tile_cols() const { return static_cast<int>(col_origins.size()); }
    /// Clipped extent of tile (a, b).
    int row_end(int a) const;
    int col_end(int b) const;
    std::vector<std::pair<int, int>> origins() const;
};

TilePlan plan_tiles(int frame_h, int frame_w, int tile_h, int tile_w, int stride_h, int stride_w);
inline TilePlan plan_tiles(int frame_h, int frame_w, int tile, int stride) { return plan_tiles(frame_h, frame_w, tile, tile, stride, stride); }

/// The same plan in units of `factor` pixels (the latent plan for a codec of
/// spatial stride `factor`). All sizes must be divisible by `factor`.
TilePlan scale_plan(const TilePlan& plan, int factor);

struct ChunkPlan {
    int chunk_len = 0;
    int chunk_count = 0;
    int total_frames = 0;
};

ChunkPlan plan_chunks(int total_frames, int chunk_len);
/// Smallest multiple of chunk_len that is >= frames.
int padded_length(int frames, int chunk_len);

/// Linear ramp along the leading axis: row k < overlap becomes
/// prev[k]·(1−k/overlap) + cur[k]·(k/overlap); rows past the overlap are cur.
template <typename Scalar>
MatX<Scalar> blend_ramp(const MatX<Scalar>& prev, const MatX<Scalar>& cur, int overlap)
{
    if (overlap < 0 || overlap > prev.rows() || overlap > cur.rows())
        throw std::invalid_argument("blend_ramp: overlap " + std::to_string(overlap) + " exceeds an input extent");
    if (prev.cols() != cur.cols()) throw std::invalid_argument("blend_ramp: column mismatch");
    MatX<Scalar> out = cur;
    for (int k = 0; k < overlap; ++k) {
        const Scalar w = static_cast<Scalar>(k) / static_cast<Scalar>(overlap);
        out.row(k) = prev.row(k) * (Scalar(1) - w) + cur.row(k) * w;
    }
    return out;
}

/// Per-position blend ownership along one axis. Each position lies in the
/// stride region of exactly one tile (its owner); inside the owner's leading
/// overlap the previous tile shares the value through the linear ramp.
struct AxisBlend {
    std::vector<int> owner;
    std::vector<double> owner_weight;  // weight of the owner; the previous tile gets 1 - w

    /// Weight tile `index` contributes at position `pos`.
    double weight(int index, int pos) const
    {
        const int o = owner[pos];
        if (index == o) return owner_weight[pos];
        if (index == o - 1) return 1.0 - owner_weight[pos];
        return 0.0;
    }
};

AxisBlend axis_blend(const std::vector<int>& origins, int tile, int stride, int extent);

/// Sum over tiles of the effective blend weight at every pixel; identically
/// one for a seam-free plan.
MatXd coverage_weights(const TilePlan& plan);

/// Counts bytes of live working buffers and remembers the peak.
class WorkspaceMeter {
public:
    void acquire(std::size_t bytes)
    {
        current_ += bytes;
        if (current_ > peak_) peak_ = current_;
    }
    void release(std::size_t bytes) { current_ -= bytes; }
    std::size_t current() const { return current_; }
    std::size_t peak() const { return peak_; }

    class Hold {
    public:
        Hold(WorkspaceMeter* m, std::size_t bytes) : meter_(m), bytes_(bytes)
        {
            if (meter_) meter_->acquire(bytes_);
        }
        ~Hold()
        {
            if (meter_) meter_->release(bytes_);
        }
        Hold(const Hold&) = delete;
        Hold& operator=(const Hold&) = delete;

    private:
        WorkspaceMeter* meter_;
        std::size_t bytes_;
    };

private:
    std::size_t current_ = 0;
    std::size_t peak_ = 0;
};

/// Block codec over (chunk_len × tile_h × tile_w) pixel blocks.
class FrameCodec {
public:
    virtual ~FrameCodec() = default;
    virtual int spatial_stride() const = 0;
    virtual int temporal_stride() const = 0;
    virtual int latent_channels() const = 0;
    virtual std::string codec_id() const = 0;
    virtual Tensor4f encode(const Tensor4f& block) const = 0;
    /// `cond` is the aligned low-frame-rate pixel block, or null for the plain decoder.
    virtual Tensor4f decode(const Tensor4f& latent, const Tensor4f* cond) const = 0;
};

/// Exact pass-through codec with unit strides.
class IdentityCodec final : public FrameCodec {
public:
    explicit IdentityCodec(int channels = 3) : channels_(channels) {}
    int spatial_stride() const override { return 1; }
    int temporal_stride() const override { return 1; }
    int latent_channels() const override { return channels_; }
    std::string codec_id() const override { return "identity"; }
    Tensor4f encode(const Tensor4f& block) const override { return block; }
    Tensor4f decode(const Tensor4f& latent, const Tensor4f*) const override { return latent; }

private:
    int channels_;
};

struct LatentGrid {
    Tensor4f values;
    int chunk_len_latent = 0;
    int spatial_stride = 1;
    int temporal_stride = 1;
    int latent_channels = 0;
    std::string codec_id;

    int chunk_count() const { return chunk_len_latent > 0 ? values.frames() / chunk_len_latent : 0; }
    Tensor4f chunk(int i) const { return values.frames_range(i * chunk_len_latent, chunk_len_latent); }
};

/// Encodes one temporal chunk tile by tile, ramp-blending overlaps in latent space.
Tensor4f tiled_encode_chunk(const Tensor4f& chunk, const FrameCodec& codec, const TilePlan& tiles, WorkspaceMeter* meter = nullptr);
/// Decodes one latent chunk tile by tile, ramp-blending overlaps in pixel space.
Tensor4f tiled_decode_chunk(const Tensor4f& latent, const FrameCodec& codec, const TilePlan& tiles, const Tensor4f* cond = nullptr,
                            WorkspaceMeter* meter = nullptr);

LatentGrid tiled_encode(const FrameSequence& frames, const FrameCodec& codec, const TilePlan& tiles, const ChunkPlan& chunks,
                        WorkspaceMeter* meter = nullptr);
FrameSequence tiled_decode(const LatentGrid& latent, const FrameCodec& codec, const TilePlan& tiles, const ChunkPlan& chunks,
                           const FrameSequence* cond = nullptr, WorkspaceMeter* meter = nullptr);

/// Writes `<base>.json` (header) and `<base>.bin` (little-endian float32 payload).
void save_latent_grid(const LatentGrid& grid, const std::filesystem::path& base);
LatentGrid load_latent_grid(const std::filesystem::path& base);

}  // namespace cvfi

#endif  // CVFI_TILING_HPP
