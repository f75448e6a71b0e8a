#ifndef CVFI_SCHEDULER_HPP
#define CVFI_SCHEDULER_HPP

#include <string>
#include <vector>

namespace cvfi {

enum class StepKind { initial, causal, skip, concatenate };

std::string to_string(StepKind k);

struct PlanStep {
    std::vector<int> targets;
    std::vector<int> contexts;
    StepKind kind = StepKind::initial;
};

struct GenerationPlan {
    int chunk_count = 0;
    std::vector<PlanStep> steps;
};

struct WindowConfig {
    int max_chunks_per_invocation = 3;
};

struct ErrorModel {
    double epsilon = 1.0;
    double alpha = 1.0;
};

/// (c0 | ∅), (c1 | c0), (c2 | c1), ...
GenerationPlan plan_causal(int chunk_count);

/// Chunks at multiples of `period` are skip chunks generated from the
/// condition alone. Each chunk c between skip chunks a and b is generated
/// after b with context {c − 1, b}, or {c − 1} when no later skip chunk
/// exists. Emission order for period 2: c0, c2, c1, c4, c3, ...
GenerationPlan plan_skip_concat(int chunk_count, int period = 2);

/// Throws std::invalid_argument if any plan invariant fails: every chunk is
/// generated exactly once, contexts precede their use, and (when `window` is
/// given) every step fits the invocation budget.
void validate(const GenerationPlan& plan, const WindowConfig* window = nullptr);

int max_invocation_chunks(const GenerationPlan& plan);

/// e(c) = ε + α·mean{e(k) : k ∈ contexts}, evaluated in step order; indexed by chunk.
std::vector<double> simulate_error(const GenerationPlan& plan, const ErrorModel& model);

/// Kind of the step that generates each chunk.
std::vector<StepKind> chunk_kinds(const GenerationPlan& plan);

/// For each chunk, the index of the last step that reads it (its own step if never read).
std::vector<int> last_use(const GenerationPlan& plan);

std::string plan_to_json(const GenerationPlan& plan);
std::string error_csv(const GenerationPlan& plan, const std::vector<double>& errors);

}  // namespace cvfi

#endif  // CVFI_SCHEDULER_HPP
