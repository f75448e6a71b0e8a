#include "cvfi/video_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cvfi {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const FrameSequence& seq)
{
    if (seq.length() < 1) throw std::invalid_argument("empty video");
    if (seq.channels() != 1 && seq.channels() != 3)
        throw std::invalid_argument("frame channels must be 1 or 3, got " + std::to_string(seq.channels()));
    const auto& m = seq.frames.matrix();
    if (m.size() > 0 && (m.minCoeff() < 0.0f || m.maxCoeff() > 1.0f || !m.allFinite()))
        throw std::invalid_argument("frame values must lie in [0,1]");
}

std::string manifest_to_json(const VideoManifest& m)
{
    json j;
    j["width"] = m.width;
    j["height"] = m.height;
    j["channels"] = m.channels;
    j["frame_count"] = m.frame_count;
    j["frame_files"] = m.frame_files;
    j["generator_seed"] = m.generator_seed ? json(*m.generator_seed) : json(nullptr);
    return j.dump(2) + "\n";
}

VideoManifest manifest_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed manifest: ") + e.what());
    }
    VideoManifest m;
    try {
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.channels = j.value("channels", 3);
        m.frame_files = j.at("frame_files").get<std::vector<std::string>>();
        m.frame_count = j.value("frame_count", static_cast<int>(m.frame_files.size()));
        if (j.contains("generator_seed") && !j["generator_seed"].is_null()) m.generator_seed = j["generator_seed"].get<std::int64_t>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed manifest: ") + e.what());
    }
    if (m.frame_count != static_cast<int>(m.frame_files.size()))
        throw std::runtime_error("malformed manifest: frame_count " + std::to_string(m.frame_count) + " != " +
                                 std::to_string(m.frame_files.size()) + " frame files");
    return m;
}

MotionKind motion_kind_from_string(const std::string& s)
{
    if (s == "linear") return MotionKind::linear;
    if (s == "sinusoidal") return MotionKind::sinusoidal;
    if (s == "bounce") return MotionKind::bounce;
    throw std::invalid_argument("unknown motion kind '" + s + "'");
}

Background background_from_string(const std::string& s)
{
    if (s == "solid") return Background::solid;
    if (s == "gradient") return Background::gradient;
    if (s == "noise-texture" || s == "noise_texture") return Background::noise_texture;
    throw std::invalid_argument("unknown background '" + s + "'");
}

std::string to_string(MotionKind k)
{
    switch (k) {
    case MotionKind::linear: return "linear";
    case MotionKind::sinusoidal: return "sinusoidal";
    case MotionKind::bounce: return "bounce";
    }
    return "?";
}

std::string to_string(Background b)
{
    switch (b) {
    case Background::solid: return "solid";
    case Background::gradient: return "gradient";
    case Background::noise_texture: return "noise-texture";
    }
    return "?";
}

void validate(const SyntheticSpec& spec)
{
    if (spec.shape_count < 0) throw std::invalid_argument("shape_count must be non-negative");
    if (spec.speed_range.first < 0 || spec.speed_range.first > spec.speed_range.second)
        throw std::invalid_argument("speed_range must be non-negative and ordered");
    if (spec.size_range.first < 1 || spec.size_range.first > spec.size_range.second)
        throw std::invalid_argument("size_range must be positive and ordered");
}

std::uint8_t quantize(float v)
{
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

namespace {

struct PnmImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes;
};

int read_header_int(std::istream& in)
{
    int c = in.peek();
    while (c != EOF) {
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string comment;
            std::getline(in, comment);
        } else {
            break;
        }
        c = in.peek();
    }
    int v = -1;
    in >> v;
    if (!in) throw std::runtime_error("bad header");
    return v;
}

PnmImage read_pnm(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing frame file: " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    PnmImage img;
    if (magic == "P6")
        img.channels = 3;
    else if (magic == "P5")
        img.channels = 1;
    else
        throw std::runtime_error("not a binary PPM/PGM: " + path.string());
    try {
        img.width = read_header_int(in);
        img.height = read_header_int(in);
        const int maxval = read_header_int(in);
        if (maxval != 255) throw std::runtime_error("maxval must be 255");
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("malformed frame header in " + path.string() + ": " + e.what());
    }
    in.get();  // single whitespace after maxval
    img.bytes.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.bytes.size()))
        throw std::runtime_error("truncated frame file: " + path.string());
    return img;
}

void write_pnm(const fs::path& path, const Tensor4f& frames, int t)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write frame file: " + path.string());
    const int c = frames.channels();
    out << (c == 3 ? "P6" : "P5") << "\n" << frames.width() << " " << frames.height() << "\n255\n";
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(frames.width()) * frames.height() * c);
    std::size_t k = 0;
    for (int y = 0; y < frames.height(); ++y)
        for (int x = 0; x < frames.width(); ++x)
            for (int ch = 0; ch < c; ++ch) bytes[k++] = quantize(frames(t, y, x, ch));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

std::string frame_name(int t)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.ppm", t);
    return buf;
}

}  // namespace

FrameSequence load_video(const fs::path& manifest_path)
{
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const VideoManifest m = manifest_from_json(ss.str());
    if (m.frame_files.empty()) throw std::runtime_error("empty video");
    if (m.channels != 1 && m.channels != 3) throw std::runtime_error("malformed manifest: channels must be 1 or 3");

    const fs::path base = manifest_path.parent_path();
    Tensor4f frames(m.frame_count, m.height, m.width, m.channels);
    for (int t = 0; t < m.frame_count; ++t) {
        const fs::path file = base / m.frame_files[t];
        const PnmImage img = read_pnm(file);
        if (img.width != m.width || img.height != m.height || img.channels != m.channels)
            throw std::runtime_error("dimension mismatch in frame '" + m.frame_files[t] + "': got " + std::to_string(img.width) +
                                     "x" + std::to_string(img.height) + "x" + std::to_string(img.channels) + ", manifest says " +
                                     std::to_string(m.width) + "x" + std::to_string(m.height) + "x" + std::to_string(m.channels));
        std::size_t k = 0;
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                for (int c = 0; c < m.channels; ++c) frames(t, y, x, c) = static_cast<float>(img.bytes[k++]) / 255.0f;
    }
    return FrameSequence(std::move(frames));
}

VideoManifest save_video(const FrameSequence& seq, const fs::path& dir, std::optional<std::int64_t> generator_seed)
{
    validate(seq);
    fs::create_directories(dir);
    VideoManifest m;
    m.width = seq.width();
    m.height = seq.height();
    m.channels = seq.channels();
    m.frame_count = seq.length();
    m.generator_seed = generator_seed;
    for (int t = 0; t < seq.length(); ++t) {
        m.frame_files.push_back(frame_name(t));
        write_pnm(dir / m.frame_files.back(), seq.frames, t);
    }
    std::ofstream out(dir / "manifest.json");
    out << manifest_to_json(m);
    if (!out) throw std::runtime_error("I/O failure writing manifest in " + dir.string());
    return m;
}

namespace {

struct Shape {
    double x0, y0;    // start center
    double vx, vy;    // pixels / frame
    double radius;
    bool square;
    std::array<double, 3> color;
};

constexpr double kSinPeriod = 16.0;

// Triangle wave keeping `p` in [lo, hi].
double reflect(double p, double lo, double hi)
{
    const double span = hi - lo;
    if (span <= 0) return lo;
    double u = std::fmod(p - lo, 2.0 * span);
    if (u < 0) u += 2.0 * span;
    return lo + (u <= span ? u : 2.0 * span - u);
}

std::pair<double, double> center_at(const Shape& s, MotionKind kind, int t, int height, int width)
{
    switch (kind) {
    case MotionKind::linear: return {s.x0 + s.vx * t, s.y0 + s.vy * t};
    case MotionKind::sinusoidal: {
        const double omega = 2.0 * std::numbers::pi / kSinPeriod;
        const double k = std::sin(omega * t) / omega;
        return {s.x0 + s.vx * k, s.y0 + s.vy * k};
    }
    case MotionKind::bounce:
        return {reflect(s.x0 + s.vx * t, s.radius, width - s.radius), reflect(s.y0 + s.vy * t, s.radius, height - s.radius)};
    }
    return {s.x0, s.y0};
}

struct Scene {
    std::array<double, 3> bg0, bg1;
    double gx = 0, gy = 0;
    std::vector<double> noise;  // coarse lattice, (gh × gw × 3)
    int gh = 0, gw = 0;
    std::vector<Shape> shapes;
};

constexpr int kNoiseCell = 8;

Scene make_scene(const SyntheticSpec& spec, int height, int width, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Scene sc;
    for (auto& c : sc.bg0) c = 0.15 + 0.5 * unit(rng);
    for (auto& c : sc.bg1) c = 0.15 + 0.5 * unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    sc.gx = std::cos(angle);
    sc.gy = std::sin(angle);
    sc.gh = height / kNoiseCell + 2;
    sc.gw = width / kNoiseCell + 2;
    sc.noise.resize(static_cast<std::size_t>(sc.gh) * sc.gw * 3);
    for (auto& v : sc.noise) v = unit(rng);

    for (int i = 0; i < spec.shape_count; ++i) {
        Shape s{};
        const int size = spec.size_range.first +
                         static_cast<int>(unit(rng) * (spec.size_range.second - spec.size_range.first + 1) * 0.999999);
        s.radius = 0.5 * size;
        const double lo_x = std::min(s.radius, 0.5 * width), hi_x = std::max(width - s.radius, lo_x);
        const double lo_y = std::min(s.radius, 0.5 * height), hi_y = std::max(height - s.radius, lo_y);
        s.x0 = lo_x + unit(rng) * (hi_x - lo_x);
        s.y0 = lo_y + unit(rng) * (hi_y - lo_y);
        const double speed = spec.speed_range.first + unit(rng) * (spec.speed_range.second - spec.speed_range.first);
        const double dir = 2.0 * std::numbers::pi * unit(rng);
        s.vx = speed * std::cos(dir);
        s.vy = speed * std::sin(dir);
        s.square = unit(rng) < 0.5;
        for (auto& c : s.color) c = unit(rng) < 0.5 ? 0.05 + 0.25 * unit(rng) : 0.7 + 0.25 * unit(rng);
        sc.shapes.push_back(s);
    }
    return sc;
}

double background_at(const Scene& sc, Background kind, int y, int x, int c, int height, int width)
{
    switch (kind) {
    case Background::solid: return sc.bg0[c];
    case Background::gradient: {
        const double u = ((x - 0.5 * width) * sc.gx + (y - 0.5 * height) * sc.gy) / std::max(width, height) + 0.5;
        const double a = std::clamp(u, 0.0, 1.0);
        return (1 - a) * sc.bg0[c] + a * sc.bg1[c];
    }
    case Background::noise_texture: {
        const double fy = static_cast<double>(y) / kNoiseCell, fx = static_cast<double>(x) / kNoiseCell;
        const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
        const double ty = fy - iy, tx = fx - ix;
        auto at = [&](int yy, int xx) { return sc.noise[(static_cast<std::size_t>(yy) * sc.gw + xx) * 3 + c]; };
        const double top = (1 - tx) * at(iy, ix) + tx * at(iy, ix + 1);
        const double bot = (1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1);
        return 0.2 + 0.5 * ((1 - ty) * top + ty * bot);
    }
    }
    return 0.0;
}

}  // namespace

std::vector<std::vector<std::pair<double, double>>> synthetic_trajectories(const SyntheticSpec& spec, int frames, int height,
                                                                           int width, std::uint64_t seed)
{
    validate(spec);
    const Scene sc = make_scene(spec, height, width, seed);
    std::vector<std::vector<std::pair<double, double>>> out;
    for (const auto& s : sc.shapes) {
        auto& traj = out.emplace_back();
        for (int t = 0; t < frames; ++t) traj.push_back(center_at(s, spec.motion_kind, t, height, width));
    }
    return out;
}

FrameSequence gen_synthetic(const SyntheticSpec& spec, int frames, int height, int width, std::uint64_t seed)
{
    if (frames < 1 || height < 1 || width < 1) throw std::invalid_argument("gen_synthetic: T, H, W must be >= 1");
    validate(spec);
    const Scene sc = make_scene(spec, height, width, seed);

    Tensor4f bg(1, height, width, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) bg(0, y, x, c) = static_cast<float>(background_at(sc, spec.background, y, x, c, height, width));

    Tensor4f out(frames, height, width, 3);
    for (int t = 0; t < frames; ++t) {
        out.frame_rows(t, 1) = bg.matrix();
        for (const auto& s : sc.shapes) {
            const auto [cx, cy] = center_at(s, spec.motion_kind, t, height, width);
            const int y0 = std::max(0, static_cast<int>(std::floor(cy - s.radius - 1)));
            const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + s.radius + 1)));
            const int x0 = std::max(0, static_cast<int>(std::floor(cx - s.radius - 1)));
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + s.radius + 1)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    // Pixel centers at integer + 0.5; coverage from a one-pixel linear edge.
                    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                    double cov;
                    if (s.square)
                        cov = std::clamp(s.radius + 0.5 - std::abs(dx), 0.0, 1.0) * std::clamp(s.radius + 0.5 - std::abs(dy), 0.0, 1.0);
                    else
                        cov = std::clamp(s.radius + 0.5 - std::hypot(dx, dy), 0.0, 1.0);
                    if (cov <= 0) continue;
                    for (int c = 0; c < 3; ++c) {
                        float& p = out(t, y, x, c);
                        p = static_cast<float>((1 - cov) * p + cov * s.color[c]);
                    }
                }
            }
        }
    }
    return FrameSequence(std::move(out));
}

FrameSequence downsample_temporal(const FrameSequence& seq, int s)
{
    if (s < 1) throw std::invalid_argument("downsample_temporal: factor must be >= 1");
    const int T = seq.length();
    if (T < 1) throw std::invalid_argument("empty video");
    if ((T - 1) % s != 0)
        throw std::invalid_argument("downsample_temporal: (T-1)=" + std::to_string(T - 1) + " not divisible by s=" + std::to_string(s));
    const int n = (T - 1) / s + 1;
    Tensor4f out(n, seq.height(), seq.width(), seq.channels());
    for (int k = 0; k < n; ++k) out.frame_rows(k, 1) = seq.frames.frame_rows(k * s, 1);
    return FrameSequence(std::move(out), seq.frame_rate_hint);
}

double mse(const FrameSequence& a, const FrameSequence& b)
{
    if (!(a.frames.shape() == b.frames.shape()) || a.channels() != b.channels())
        throw std::invalid_argument("shape mismatch: " + to_string(a.frames.shape()) + " vs " + to_string(b.frames.shape()));
    if (a.frames.matrix().size() == 0) return 0.0;
    const auto diff = (a.frames.matrix().cast<double>() - b.frames.matrix().cast<double>()).array();
    return diff.square().mean();
}

double psnr_from_mse(double m)
{
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double psnr(const FrameSequence& a, const FrameSequence& b) { return psnr_from_mse(mse(a, b)); }

double flicker(const FrameSequence& seq)
{
    const int T = seq.length();
    if (T < 3) throw std::invalid_argument("flicker needs at least 3 frames, got " + std::to_string(T));
    double sum = 0.0;
    for (int t = 1; t + 1 < T; ++t) {
        const auto d2 = seq.frames.frame_rows(t + 1, 1).cast<double>() - 2.0 * seq.frames.frame_rows(t, 1).cast<double>() +
                        seq.frames.frame_rows(t - 1, 1).cast<double>();
        sum += d2.array().square().sum();
    }
    const double count = static_cast<double>(T - 2) * seq.frames.frame_rows(0, 1).size();
    return sum / count;
}

}  // namespace cvfi
