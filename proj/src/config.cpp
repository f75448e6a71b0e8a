#include "cvfi/config.hpp"

#include "cvfi/binary_io.hpp"

#include <stdexcept>

namespace cvfi {

using nlohmann::json;

std::string to_string(InferenceMode m)
{
    return m == InferenceMode::causal ? "causal" : "skip_concat";
}

InferenceMode inference_mode_from_string(const std::string& s)
{
    if (s == "causal") return InferenceMode::causal;
    if (s == "skip_concat") return InferenceMode::skip_concat;
    throw std::invalid_argument("unknown inference mode '" + s + "' (expected causal or skip_concat)");
}

LatentLayout PipelineConfig::latent_layout() const
{
    LatentLayout l;
    l.latent_channels = codec.latent_channels;
    l.cond_channels = codec.latent_channels + codec.temporal_stride;
    l.chunk_frames = chunk_len / codec.temporal_stride;
    l.spatial_chunk = tile_stride / codec.spatial_stride;
    return l;
}

namespace {

void require(bool ok, const std::string& msg)
{
    if (!ok) throw std::invalid_argument("config: " + msg);
}

std::string str(int v) { return std::to_string(v); }

}  // namespace

void validate(const PipelineConfig& c)
{
    validate(c.data.spec);
    validate(c.codec);
    validate(c.denoiser);
    const int rs = c.codec.spatial_stride, rt = c.codec.temporal_stride;
    require(c.data.train_count >= 0 && c.data.eval_count >= 0, "data.train_count and data.eval_count must be >= 0");
    require(c.data.height >= 1 && c.data.width >= 1 && c.data.frames >= 1, "data dims must be positive");
    require(c.tile_stride >= 1 && c.tile_stride <= c.tile, "tiles.stride must be in [1, tiles.tile]");
    require(c.tile <= c.data.height && c.tile <= c.data.width, "tiles.tile=" + str(c.tile) + " exceeds the frame size");
    require(c.tile % rs == 0 && c.tile_stride % rs == 0,
            "tiles.tile and tiles.stride must be divisible by codec.spatial_stride=" + str(rs));
    require(c.data.height % c.tile_stride == 0 && c.data.width % c.tile_stride == 0,
            "data.height/width must be multiples of tiles.stride=" + str(c.tile_stride) + " so attention chunks are uniform");
    require((c.tile_stride / rs) % c.denoiser.token_patch == 0,
            "tiles.stride/codec.spatial_stride=" + str(c.tile_stride / rs) + " must be divisible by denoiser.token_patch=" + str(c.denoiser.token_patch));
    require(c.chunk_len >= 1 && c.chunk_len % rt == 0, "chunks.len=" + str(c.chunk_len) + " must be divisible by codec.temporal_stride=" + str(rt));
    require(c.data.frames >= c.chunk_len, "data.frames must be at least chunks.len");
    require(c.vae_training.steps >= 0 && c.vae_training.cond_steps >= 0 && c.vae_training.batch >= 1, "vae_training steps/batch out of range");
    require(c.vae_training.crop % rs == 0 && c.vae_training.crop <= c.data.height && c.vae_training.crop <= c.data.width,
            "vae_training.crop must be divisible by codec.spatial_stride and fit the frame");
    require(c.vae_training.lr > 0 && c.training.lr > 0, "learning rates must be positive");
    require(c.training.steps >= 0 && c.training.batch >= 1, "training steps/batch out of range");
    require(c.training.shift_train >= 1 && c.inference.shift_infer >= 1, "timestep shifts must be >= 1");
    require(c.training.s_min >= 1 && c.training.s_min <= c.training.s_max, "training.s_min..s_max must be a nonempty range with s_min >= 1");
    require(c.training.s_max <= c.data.frames - 1, "training.s_max exceeds the clip length");
    require(c.training.max_window_chunks >= 1, "training.max_window_chunks must be >= 1");
    require(c.training.crop >= c.tile_stride && c.training.crop % c.tile_stride == 0 && c.training.crop <= c.data.height &&
                c.training.crop <= c.data.width,
            "training.crop must be a multiple of tiles.stride that fits the frame");
    require(c.training.checkpoint_every >= 1, "training.checkpoint_every must be >= 1");
    require(c.inference.steps >= 1, "inference.steps must be >= 1");
    require(c.inference.s >= 1, "inference.s must be >= 1");
    require(c.inference.skip_period >= 2, "inference.skip_period must be >= 2");
    require(c.inference.max_chunks_per_invocation >= (c.inference.mode == InferenceMode::causal ? 2 : 3),
            "inference.max_chunks_per_invocation too small for mode " + to_string(c.inference.mode));
    require(c.threads >= 1, "threads must be >= 1");
}

json config_to_json(const PipelineConfig& c)
{
    const auto& sp = c.data.spec;
    return json{
        {"data",
         {{"shape_count", sp.shape_count},
          {"motion_kind", to_string(sp.motion_kind)},
          {"speed_range", {sp.speed_range.first, sp.speed_range.second}},
          {"size_range", {sp.size_range.first, sp.size_range.second}},
          {"background", to_string(sp.background)},
          {"train_count", c.data.train_count},
          {"eval_count", c.data.eval_count},
          {"frames", c.data.frames},
          {"height", c.data.height},
          {"width", c.data.width},
          {"seed", c.data.seed}}},
        {"codec",
         {{"spatial_stride", c.codec.spatial_stride},
          {"temporal_stride", c.codec.temporal_stride},
          {"latent_channels", c.codec.latent_channels},
          {"base_width", c.codec.base_width},
          {"level_count", c.codec.level_count}}},
        {"tiles", {{"tile", c.tile}, {"stride", c.tile_stride}}},
        {"chunks", {{"len", c.chunk_len}}},
        {"denoiser",
         {{"model_dim", c.denoiser.model_dim},
          {"head_count", c.denoiser.head_count},
          {"layer_count", c.denoiser.layer_count},
          {"token_patch", c.denoiser.token_patch},
          {"window_radius", c.denoiser.window.radius}}},
        {"vae_training",
         {{"steps", c.vae_training.steps},
          {"cond_steps", c.vae_training.cond_steps},
          {"batch", c.vae_training.batch},
          {"crop", c.vae_training.crop},
          {"lr", c.vae_training.lr},
          {"seed", c.vae_training.seed}}},
        {"training",
         {{"steps", c.training.steps},
          {"batch", c.training.batch},
          {"lr", c.training.lr},
          {"shift_train", c.training.shift_train},
          {"s_min", c.training.s_min},
          {"s_max", c.training.s_max},
          {"max_window_chunks", c.training.max_window_chunks},
          {"crop", c.training.crop},
          {"checkpoint_every", c.training.checkpoint_every},
          {"seed", c.training.seed}}},
        {"inference",
         {{"steps", c.inference.steps},
          {"shift_infer", c.inference.shift_infer},
          {"mode", to_string(c.inference.mode)},
          {"s", c.inference.s},
          {"skip_period", c.inference.skip_period},
          {"max_chunks_per_invocation", c.inference.max_chunks_per_invocation},
          {"seed", c.inference.seed}}},
        {"threads", c.threads},
    };
}

namespace {

// Walks `given` against the defaults tree so unknown keys are reported by path.
void check_keys(const json& given, const json& reference, const std::string& path)
{
    if (!given.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!reference.contains(it.key())) throw std::invalid_argument("config: unknown key '" + key + "'");
        if (reference[it.key()].is_object()) check_keys(it.value(), reference[it.key()], key);
    }
}

template <typename T>
void get(const json& j, const char* section, const char* key, T& out)
{
    if (!j.contains(section) || !j[section].contains(key)) return;
    try {
        out = j[section][key].get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad value for '") + section + "." + key + "': " + e.what());
    }
}

}  // namespace

PipelineConfig config_from_json(const json& j)
{
    PipelineConfig c;
    check_keys(j, config_to_json(c), "");
    auto& sp = c.data.spec;
    get(j, "data", "shape_count", sp.shape_count);
    if (j.contains("data") && j["data"].contains("motion_kind")) sp.motion_kind = motion_kind_from_string(j["data"]["motion_kind"].get<std::string>());
    if (j.contains("data") && j["data"].contains("background")) sp.background = background_from_string(j["data"]["background"].get<std::string>());
    std::vector<double> speed{sp.speed_range.first, sp.speed_range.second};
    std::vector<int> size{sp.size_range.first, sp.size_range.second};
    get(j, "data", "speed_range", speed);
    get(j, "data", "size_range", size);
    if (speed.size() != 2 || size.size() != 2) throw std::invalid_argument("config: data.speed_range and data.size_range must be pairs");
    sp.speed_range = {speed[0], speed[1]};
    sp.size_range = {size[0], size[1]};
    get(j, "data", "train_count", c.data.train_count);
    get(j, "data", "eval_count", c.data.eval_count);
    get(j, "data", "frames", c.data.frames);
    get(j, "data", "height", c.data.height);
    get(j, "data", "width", c.data.width);
    get(j, "data", "seed", c.data.seed);
    get(j, "codec", "spatial_stride", c.codec.spatial_stride);
    get(j, "codec", "temporal_stride", c.codec.temporal_stride);
    get(j, "codec", "latent_channels", c.codec.latent_channels);
    get(j, "codec", "base_width", c.codec.base_width);
    get(j, "codec", "level_count", c.codec.level_count);
    get(j, "tiles", "tile", c.tile);
    get(j, "tiles", "stride", c.tile_stride);
    get(j, "chunks", "len", c.chunk_len);
    get(j, "denoiser", "model_dim", c.denoiser.model_dim);
    get(j, "denoiser", "head_count", c.denoiser.head_count);
    get(j, "denoiser", "layer_count", c.denoiser.layer_count);
    get(j, "denoiser", "token_patch", c.denoiser.token_patch);
    get(j, "denoiser", "window_radius", c.denoiser.window.radius);
    get(j, "vae_training", "steps", c.vae_training.steps);
    get(j, "vae_training", "cond_steps", c.vae_training.cond_steps);
    get(j, "vae_training", "batch", c.vae_training.batch);
    get(j, "vae_training", "crop", c.vae_training.crop);
    get(j, "vae_training", "lr", c.vae_training.lr);
    get(j, "vae_training", "seed", c.vae_training.seed);
    get(j, "training", "steps", c.training.steps);
    get(j, "training", "batch", c.training.batch);
    get(j, "training", "lr", c.training.lr);
    get(j, "training", "shift_train", c.training.shift_train);
    get(j, "training", "s_min", c.training.s_min);
    get(j, "training", "s_max", c.training.s_max);
    get(j, "training", "max_window_chunks", c.training.max_window_chunks);
    get(j, "training", "crop", c.training.crop);
    get(j, "training", "checkpoint_every", c.training.checkpoint_every);
    get(j, "training", "seed", c.training.seed);
    get(j, "inference", "steps", c.inference.steps);
    get(j, "inference", "shift_infer", c.inference.shift_infer);
    if (j.contains("inference") && j["inference"].contains("mode")) c.inference.mode = inference_mode_from_string(j["inference"]["mode"].get<std::string>());
    get(j, "inference", "s", c.inference.s);
    get(j, "inference", "skip_period", c.inference.skip_period);
    get(j, "inference", "max_chunks_per_invocation", c.inference.max_chunks_per_invocation);
    get(j, "inference", "seed", c.inference.seed);
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    validate(c);
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: cannot parse " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json apply_overrides(json j, const std::vector<std::string>& overrides)
{
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + o + "' is not key=value");
        const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error&) {
            value = text;
        }
        json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
    return j;
}

}  // namespace cvfi
