#include "cvfi/tiling.hpp"

#include "cvfi/binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <stdexcept>

namespace cvfi {

using nlohmann::json;

int TilePlan::row_end(int a) const { return std::min(row_origins[a] + tile_h, frame_h); }
int TilePlan::col_end(int b) const { return std::min(col_origins[b] + tile_w, frame_w); }

std::vector<std::pair<int, int>> TilePlan::origins() const
{
    std::vector<std::pair<int, int>> out;
    for (int r : row_origins)
        for (int c : col_origins) out.emplace_back(r, c);
    return out;
}

namespace {

std::vector<int> axis_origins(int extent, int stride)
{
    std::vector<int> out;
    for (int o = 0; o < extent; o += stride) out.push_back(o);
    return out;
}

void check_axis(const char* axis, int frame, int tile, int stride)
{
    if (frame <= 0 || tile <= 0 || stride <= 0)
        throw std::invalid_argument(std::string("plan_tiles: nonpositive size on ") + axis + " axis");
    if (stride > tile)
        throw std::invalid_argument(std::string("plan_tiles: stride ") + std::to_string(stride) + " > tile " + std::to_string(tile) +
                                    " on " + axis + " axis");
    if (tile > frame)
        throw std::invalid_argument(std::string("plan_tiles: tile ") + std::to_string(tile) + " larger than frame " +
                                    std::to_string(frame) + " on " + axis + " axis");
}

}  // namespace

TilePlan plan_tiles(int frame_h, int frame_w, int tile_h, int tile_w, int stride_h, int stride_w)
{
    check_axis("row", frame_h, tile_h, stride_h);
    check_axis("column", frame_w, tile_w, stride_w);
    TilePlan p;
    p.frame_h = frame_h;
    p.frame_w = frame_w;
    p.tile_h = tile_h;
    p.tile_w = tile_w;
    p.stride_h = stride_h;
    p.stride_w = stride_w;
    p.row_origins = axis_origins(frame_h, stride_h);
    p.col_origins = axis_origins(frame_w, stride_w);
    return p;
}

TilePlan scale_plan(const TilePlan& plan, int factor)
{
    if (factor < 1) throw std::invalid_argument("scale_plan: factor must be >= 1");
    for (int v : {plan.frame_h, plan.frame_w, plan.tile_h, plan.tile_w, plan.stride_h, plan.stride_w})
        if (v % factor != 0)
            throw std::invalid_argument("tile geometry (frame " + std::to_string(plan.frame_h) + "x" + std::to_string(plan.frame_w) +
                                        ", tile " + std::to_string(plan.tile_h) + "x" + std::to_string(plan.tile_w) + ", stride " +
                                        std::to_string(plan.stride_h) + "x" + std::to_string(plan.stride_w) +
                                        ") must be divisible by the codec spatial stride " + std::to_string(factor));
    return plan_tiles(plan.frame_h / factor, plan.frame_w / factor, plan.tile_h / factor, plan.tile_w / factor,
                      plan.stride_h / factor, plan.stride_w / factor);
}

ChunkPlan plan_chunks(int total_frames, int chunk_len)
{
    if (chunk_len < 1) throw std::invalid_argument("plan_chunks: chunk length must be >= 1");
    if (total_frames < 1) throw std::invalid_argument("plan_chunks: empty video");
    if (total_frames % chunk_len != 0)
        throw std::invalid_argument("plan_chunks: " + std::to_string(total_frames) + " frames not divisible by chunk length " +
                                    std::to_string(chunk_len));
    return {chunk_len, total_frames / chunk_len, total_frames};
}

int padded_length(int frames, int chunk_len) { return (frames + chunk_len - 1) / chunk_len * chunk_len; }

AxisBlend axis_blend(const std::vector<int>& origins, int tile, int stride, int extent)
{
    AxisBlend ab;
    ab.owner.assign(extent, -1);
    ab.owner_weight.assign(extent, 1.0);
    const int overlap = tile - stride;
    for (int a = 0; a < static_cast<int>(origins.size()); ++a) {
        const int o = origins[a];
        const int kept_end = std::min(o + stride, extent);
        const int blend = a > 0 ? std::min(overlap, extent - o) : 0;
        for (int x = o; x < kept_end; ++x) {
            ab.owner[x] = a;
            const int k = x - o;
            ab.owner_weight[x] = (k < blend) ? static_cast<double>(k) / blend : 1.0;
        }
    }
    return ab;
}

MatXd coverage_weights(const TilePlan& plan)
{
    const AxisBlend rows = axis_blend(plan.row_origins, plan.tile_h, plan.stride_h, plan.frame_h);
    const AxisBlend cols = axis_blend(plan.col_origins, plan.tile_w, plan.stride_w, plan.frame_w);
    MatXd sum = MatXd::Zero(plan.frame_h, plan.frame_w);
    for (int a = 0; a < plan.tile_rows(); ++a)
        for (int b = 0; b < plan.tile_cols(); ++b)
            for (int y = plan.row_origins[a]; y < plan.row_end(a); ++y)
                for (int x = plan.col_origins[b]; x < plan.col_end(b); ++x) sum(y, x) += rows.weight(a, y) * cols.weight(b, x);
    return sum;
}

namespace {

// Adds every tile block, weighted by the separable ramp weights, into `out`.
// Equivalent to blending with the tile above first and the tile to the left
// second, since both ramps are applied multiplicatively.
template <typename TileFn>
void blend_tiles(const TilePlan& plan, Tensor4f& out, TileFn&& produce_tile)
{
    const AxisBlend rows = axis_blend(plan.row_origins, plan.tile_h, plan.stride_h, plan.frame_h);
    const AxisBlend cols = axis_blend(plan.col_origins, plan.tile_w, plan.stride_w, plan.frame_w);
    for (int a = 0; a < plan.tile_rows(); ++a) {
        for (int b = 0; b < plan.tile_cols(); ++b) {
            const int y0 = plan.row_origins[a], x0 = plan.col_origins[b];
            const int nh = plan.row_end(a) - y0, nw = plan.col_end(b) - x0;
            produce_tile(y0, nh, x0, nw, [&](const Tensor4f& block) {
                if (block.height() != nh || block.width() != nw || block.frames() != out.frames() || block.channels() != out.channels())
                    throw std::runtime_error("codec produced a block of unexpected shape " + to_string(block.shape()));
                for (int y = 0; y < nh; ++y) {
                    const double wy = rows.weight(a, y0 + y);
                    if (wy == 0.0) continue;
                    for (int x = 0; x < nw; ++x) {
                        const float w = static_cast<float>(wy * cols.weight(b, x0 + x));
                        if (w == 0.0f) continue;
                        for (int t = 0; t < block.frames(); ++t) out.matrix().row(out.row(t, y0 + y, x0 + x)) += w * block.matrix().row(block.row(t, y, x));
                    }
                }
            });
        }
    }
}

void check_codec_geometry(const FrameCodec& codec, const TilePlan& tiles, int chunk_len)
{
    if (chunk_len % codec.temporal_stride() != 0)
        throw std::invalid_argument("chunk length " + std::to_string(chunk_len) + " not divisible by codec temporal stride " +
                                    std::to_string(codec.temporal_stride()));
    (void)scale_plan(tiles, codec.spatial_stride());
}

}  // namespace

namespace {

// Encodes frames [t0, t0+count) of `video` without copying more than one tile block.
Tensor4f encode_frames(const Tensor4f& video, int t0, int count, const FrameCodec& codec, const TilePlan& tiles, WorkspaceMeter* meter)
{
    if (video.height() != tiles.frame_h || video.width() != tiles.frame_w)
        throw std::invalid_argument("tiled_encode: frame " + std::to_string(video.height()) + "x" + std::to_string(video.width()) +
                                    " does not match tile plan " + std::to_string(tiles.frame_h) + "x" + std::to_string(tiles.frame_w));
    check_codec_geometry(codec, tiles, count);
    const int rs = codec.spatial_stride(), rt = codec.temporal_stride();
    const TilePlan latent_plan = scale_plan(tiles, rs);
    Tensor4f out(count / rt, latent_plan.frame_h, latent_plan.frame_w, codec.latent_channels());
    blend_tiles(latent_plan, out, [&](int y0, int nh, int x0, int nw, auto&& accumulate) {
        const Tensor4f block = video.crop(t0, count, y0 * rs, nh * rs, x0 * rs, nw * rs);
        WorkspaceMeter::Hold in_hold(meter, block.bytes());
        const Tensor4f encoded = codec.encode(block);
        WorkspaceMeter::Hold out_hold(meter, encoded.bytes());
        accumulate(encoded);
    });
    return out;
}

}  // namespace

Tensor4f tiled_encode_chunk(const Tensor4f& chunk, const FrameCodec& codec, const TilePlan& tiles, WorkspaceMeter* meter)
{
    return encode_frames(chunk, 0, chunk.frames(), codec, tiles, meter);
}

Tensor4f tiled_decode_chunk(const Tensor4f& latent, const FrameCodec& codec, const TilePlan& tiles, const Tensor4f* cond,
                            WorkspaceMeter* meter)
{
    const int rs = codec.spatial_stride(), rt = codec.temporal_stride();
    check_codec_geometry(codec, tiles, latent.frames() * rt);
    const TilePlan latent_plan = scale_plan(tiles, rs);
    if (latent.height() != latent_plan.frame_h || latent.width() != latent_plan.frame_w || latent.channels() != codec.latent_channels())
        throw std::invalid_argument("tiled_decode: latent geometry " + to_string(latent.shape()) + "x" + std::to_string(latent.channels()) +
                                    " inconsistent with tile plan and codec");
    if (cond && (cond->height() != tiles.frame_h || cond->width() != tiles.frame_w || cond->frames() != latent.frames() * rt))
        throw std::invalid_argument("tiled_decode: condition frames misaligned with latent chunk");
    const int channels = cond ? cond->channels() : 3;
    Tensor4f out(latent.frames() * rt, tiles.frame_h, tiles.frame_w, channels);
    blend_tiles(tiles, out, [&](int y0, int nh, int x0, int nw, auto&& accumulate) {
        const Tensor4f block = latent.crop(0, latent.frames(), y0 / rs, nh / rs, x0 / rs, nw / rs);
        WorkspaceMeter::Hold in_hold(meter, block.bytes());
        Tensor4f cond_block;
        if (cond) cond_block = cond->crop(0, cond->frames(), y0, nh, x0, nw);
        WorkspaceMeter::Hold cond_hold(meter, cond_block.bytes());
        const Tensor4f decoded = codec.decode(block, cond ? &cond_block : nullptr);
        WorkspaceMeter::Hold out_hold(meter, decoded.bytes());
        accumulate(decoded);
    });
    return out;
}

LatentGrid tiled_encode(const FrameSequence& frames, const FrameCodec& codec, const TilePlan& tiles, const ChunkPlan& chunks,
                        WorkspaceMeter* meter)
{
    if (frames.length() != chunks.total_frames)
        throw std::invalid_argument("tiled_encode: video has " + std::to_string(frames.length()) + " frames, chunk plan expects " +
                                    std::to_string(chunks.total_frames));
    check_codec_geometry(codec, tiles, chunks.chunk_len);
    LatentGrid grid;
    grid.chunk_len_latent = chunks.chunk_len / codec.temporal_stride();
    grid.spatial_stride = codec.spatial_stride();
    grid.temporal_stride = codec.temporal_stride();
    grid.latent_channels = codec.latent_channels();
    grid.codec_id = codec.codec_id();
    grid.values = Tensor4f(chunks.chunk_count * grid.chunk_len_latent, tiles.frame_h / grid.spatial_stride,
                           tiles.frame_w / grid.spatial_stride, grid.latent_channels);
    for (int c = 0; c < chunks.chunk_count; ++c) {
        // Latent chunk lands directly in the output grid; only tile blocks count as workspace.
        grid.values.paste(encode_frames(frames.frames, c * chunks.chunk_len, chunks.chunk_len, codec, tiles, meter),
                          c * grid.chunk_len_latent, 0, 0);
    }
    return grid;
}

FrameSequence tiled_decode(const LatentGrid& latent, const FrameCodec& codec, const TilePlan& tiles, const ChunkPlan& chunks,
                           const FrameSequence* cond, WorkspaceMeter* meter)
{
    if (latent.chunk_len_latent * codec.temporal_stride() != chunks.chunk_len || latent.chunk_count() != chunks.chunk_count ||
        latent.spatial_stride != codec.spatial_stride() || latent.temporal_stride != codec.temporal_stride())
        throw std::invalid_argument("tiled_decode: latent geometry does not match the chunk plan or codec");
    if (cond && cond->length() != chunks.total_frames)
        throw std::invalid_argument("tiled_decode: condition video length does not match chunk plan");
    std::vector<Tensor4f> parts;
    for (int c = 0; c < chunks.chunk_count; ++c) {
        const Tensor4f z = latent.chunk(c);
        Tensor4f cond_chunk;
        if (cond) cond_chunk = cond->frames.frames_range(c * chunks.chunk_len, chunks.chunk_len);
        parts.push_back(tiled_decode_chunk(z, codec, tiles, cond ? &cond_chunk : nullptr, meter));
    }
    return FrameSequence(concat_frames(parts));
}

void save_latent_grid(const LatentGrid& grid, const std::filesystem::path& base)
{
    json j;
    j["dims"] = {grid.values.frames(), grid.values.height(), grid.values.width(), grid.values.channels()};
    j["strides"] = {{"spatial", grid.spatial_stride}, {"temporal", grid.temporal_stride}};
    j["chunk_len_latent"] = grid.chunk_len_latent;
    j["codec_id"] = grid.codec_id;
    j["dtype"] = "float32-le";
    write_text(std::filesystem::path(base.string() + ".json"), j.dump(2) + "\n");
    const auto& m = grid.values.matrix();
    write_f32_le(std::filesystem::path(base.string() + ".bin"), std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

LatentGrid load_latent_grid(const std::filesystem::path& base)
{
    const json j = json::parse(read_text(std::filesystem::path(base.string() + ".json")));
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 4) throw std::runtime_error("latent header: dims must have 4 entries");
    LatentGrid g;
    g.spatial_stride = j.at("strides").at("spatial").get<int>();
    g.temporal_stride = j.at("strides").at("temporal").get<int>();
    g.chunk_len_latent = j.at("chunk_len_latent").get<int>();
    g.codec_id = j.at("codec_id").get<std::string>();
    g.latent_channels = dims[3];
    const std::vector<float> payload = read_f32_le(std::filesystem::path(base.string() + ".bin"));
    const std::size_t expected = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
    if (payload.size() != expected)
        throw std::runtime_error("latent payload has " + std::to_string(payload.size()) + " values, header implies " + std::to_string(expected));
    g.values = Tensor4f(dims[0], dims[1], dims[2], dims[3]);
    std::copy(payload.begin(), payload.end(), g.values.matrix().data());
    return g;
}

}  // namespace cvfi
