#ifndef CVFI_COMMANDS_HPP
#define CVFI_COMMANDS_HPP

#include "cvfi/config.hpp"
#include "cvfi/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvfi {

/// Corpus layout: `<root>/train/clip_NNN/manifest.json` and `<root>/eval/clip_NNN/manifest.json`.
std::vector<std::filesystem::path> cmd_gen_data(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Clips under `dir`, one per `clip_*` subdirectory, in name order.
std::vector<FrameSequence> load_corpus(const std::filesystem::path& dir);

/// Writes `<out>/vae.{json,bin}` and `<out>/vae_trace.csv`.
VaeRun cmd_train_vae(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& out);

struct DitRunOptions {
    bool resume = false;
    std::optional<int> stop_after;  // end the run early after this many total steps
};

struct DitRun {
    std::vector<DitTrainRecord> trace;  // full trace from step 0, including resumed steps
    int next_step = 0;
    bool finished = false;
};

/// Reads `<ckpt>/vae`, writes resumable state `<ckpt>/dit_state`, the final
/// `<ckpt>/dit` and `<ckpt>/dit_trace.csv`.
DitRun cmd_train_dit(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& ckpt, const DitRunOptions& opt = {});

struct InterpolateRequest {
    std::filesystem::path lq_manifest;
    std::filesystem::path ckpt;
    std::filesystem::path out;
    std::optional<std::filesystem::path> gt_manifest;
    int s = 2;
};

/// Writes the video and `report.json` into `out`; returns the report.
nlohmann::json cmd_interpolate(const PipelineConfig& cfg, const InterpolateRequest& req);

struct AblationRow {
    std::string name;
    double psnr = 0;
    double flicker = 0;
    double keyframe_psnr = 0;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // three AR/decoder rows, then zero-pad and nearest
    double baseline_psnr = 0;       // repeat-previous-keyframe on the same clips
    double baseline_flicker = 0;
};

/// s = cfg.inference.s on every eval clip of the corpus.
AblationTable cmd_ablate(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& ckpt,
                         const std::filesystem::path& out_csv);

std::string ablation_csv(const AblationTable& table);

}  // namespace cvfi

#endif  // CVFI_COMMANDS_HPP
