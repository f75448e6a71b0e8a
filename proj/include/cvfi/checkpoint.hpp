#ifndef CVFI_CHECKPOINT_HPP
#define CVFI_CHECKPOINT_HPP

#include "cvfi/autograd.hpp"
#include "cvfi/optim.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace cvfi {

/// Weights + optimizer state on disk: `<base>.json` describes every tensor
/// (name, shape, offset into the payload) and carries free-form metadata;
/// `<base>.bin` is the little-endian float32 payload.
struct Checkpoint {
    ParamSet<float> params;
    std::optional<Adam<float>> optimizer;
    nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& base);
Checkpoint load_checkpoint(const std::filesystem::path& base);
bool checkpoint_exists(const std::filesystem::path& base);

/// Copies values into `target` by name; shapes must match exactly.
void assign_params(ParamSet<float>& target, const ParamSet<float>& source);

}  // namespace cvfi

#endif  // CVFI_CHECKPOINT_HPP
