#include "cvfi/checkpoint.hpp"

#include "cvfi/binary_io.hpp"

#include <stdexcept>

namespace cvfi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& base, const char* suffix) { return fs::path(base.string() + suffix); }

void append(std::vector<float>& payload, json& tensors, const std::string& name, const MatXf& m)
{
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", payload.size()}});
    payload.insert(payload.end(), m.data(), m.data() + m.size());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& base)
{
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    std::vector<float> payload;
    json tensors = json::array();
    for (int i = 0; i < ckpt.params.size(); ++i) append(payload, tensors, ckpt.params.names[i], ckpt.params.values[i]);
    json j;
    j["format"] = "cvfi-checkpoint-v1";
    j["dtype"] = "float32-le";
    j["tensors"] = tensors;
    if (ckpt.optimizer) {
        const auto& opt = *ckpt.optimizer;
        json state = json::array();
        for (int i = 0; i < ckpt.params.size(); ++i) {
            append(payload, state, "adam.m/" + ckpt.params.names[i], opt.m.at(i));
            append(payload, state, "adam.v/" + ckpt.params.names[i], opt.v.at(i));
        }
        j["optimizer"] = {{"kind", "adam"}, {"step", opt.step}, {"lr", opt.lr}, {"beta1", opt.beta1}, {"beta2", opt.beta2},
                          {"eps", opt.eps}, {"weight_decay", opt.weight_decay}, {"clip_norm", opt.clip_norm}, {"tensors", state}};
    }
    j["meta"] = ckpt.meta;
    write_text(with_suffix(base, ".json"), j.dump(2) + "\n");
    write_f32_le(with_suffix(base, ".bin"), payload);
}

bool checkpoint_exists(const fs::path& base) { return fs::exists(with_suffix(base, ".json")) && fs::exists(with_suffix(base, ".bin")); }

Checkpoint load_checkpoint(const fs::path& base)
{
    if (!checkpoint_exists(base)) throw std::runtime_error("missing checkpoint: " + base.string() + ".{json,bin}");
    const json j = json::parse(read_text(with_suffix(base, ".json")));
    const std::vector<float> payload = read_f32_le(with_suffix(base, ".bin"));
    auto read_tensor = [&](const json& t) {
        const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
        const auto offset = t.at("offset").get<std::size_t>();
        const std::size_t n = static_cast<std::size_t>(shape.at(0) * shape.at(1));
        if (offset + n > payload.size()) throw std::runtime_error("checkpoint payload truncated at " + t.at("name").get<std::string>());
        MatXf m(shape[0], shape[1]);
        std::copy(payload.begin() + static_cast<std::ptrdiff_t>(offset), payload.begin() + static_cast<std::ptrdiff_t>(offset + n), m.data());
        return m;
    };
    Checkpoint ckpt;
    for (const auto& t : j.at("tensors")) ckpt.params.add(t.at("name").get<std::string>(), read_tensor(t));
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        Adam<float> opt;
        opt.step = o.at("step").get<long>();
        opt.lr = o.at("lr").get<double>();
        opt.beta1 = o.at("beta1").get<double>();
        opt.beta2 = o.at("beta2").get<double>();
        opt.eps = o.at("eps").get<double>();
        opt.weight_decay = o.at("weight_decay").get<double>();
        opt.clip_norm = o.at("clip_norm").get<double>();
        const json& state = o.at("tensors");
        for (std::size_t i = 0; i + 1 < state.size(); i += 2) {
            opt.m.push_back(read_tensor(state[i]));
            opt.v.push_back(read_tensor(state[i + 1]));
        }
        ckpt.optimizer = std::move(opt);
    }
    ckpt.meta = j.value("meta", json::object());
    return ckpt;
}

void assign_params(ParamSet<float>& target, const ParamSet<float>& source)
{
    for (int i = 0; i < target.size(); ++i) {
        const int s = source.index(target.names[i]);
        const auto& v = source.values[s];
        if (v.rows() != target.values[i].rows() || v.cols() != target.values[i].cols())
            throw std::runtime_error("checkpoint tensor '" + target.names[i] + "' has shape " + std::to_string(v.rows()) + "x" +
                                     std::to_string(v.cols()) + ", model expects " + std::to_string(target.values[i].rows()) + "x" +
                                     std::to_string(target.values[i].cols()));
        target.values[i] = v;
    }
}

}  // namespace cvfi
