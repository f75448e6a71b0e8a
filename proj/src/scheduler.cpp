#include "cvfi/scheduler.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace cvfi {

std::string to_string(StepKind k)
{
    switch (k) {
    case StepKind::initial: return "initial";
    case StepKind::causal: return "causal";
    case StepKind::skip: return "skip";
    case StepKind::concatenate: return "concatenate";
    }
    return "unknown";
}

GenerationPlan plan_causal(int chunk_count)
{
    if (chunk_count < 1) throw std::invalid_argument("plan needs at least one chunk");
    GenerationPlan plan;
    plan.chunk_count = chunk_count;
    plan.steps.push_back({{0}, {}, StepKind::initial});
    for (int c = 1; c < chunk_count; ++c) plan.steps.push_back({{c}, {c - 1}, StepKind::causal});
    return plan;
}

GenerationPlan plan_skip_concat(int chunk_count, int period)
{
    if (chunk_count < 1) throw std::invalid_argument("plan needs at least one chunk");
    if (period < 2) throw std::invalid_argument("skip period must be >= 2");
    GenerationPlan plan;
    plan.chunk_count = chunk_count;
    plan.steps.push_back({{0}, {}, StepKind::skip});
    for (int a = 0; a < chunk_count; a += period) {
        const int b = a + period;
        if (b < chunk_count) plan.steps.push_back({{b}, {}, StepKind::skip});
        for (int c = a + 1; c < std::min(b, chunk_count); ++c) {
            PlanStep step{{c}, {c - 1}, StepKind::concatenate};
            if (b < chunk_count) step.contexts.push_back(b);
            plan.steps.push_back(std::move(step));
        }
    }
    return plan;
}

void validate(const GenerationPlan& plan, const WindowConfig* window)
{
    std::vector<int> made_at(plan.chunk_count, -1);
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        const PlanStep& step = plan.steps[s];
        if (step.targets.empty()) throw std::invalid_argument("plan step " + std::to_string(s) + " has no targets");
        for (int c : step.contexts) {
            if (c < 0 || c >= plan.chunk_count || made_at[c] < 0)
                throw std::invalid_argument("plan step " + std::to_string(s) + " reads chunk " + std::to_string(c) + " before it exists");
        }
        for (int c : step.targets) {
            if (c < 0 || c >= plan.chunk_count) throw std::invalid_argument("plan step " + std::to_string(s) + " targets invalid chunk");
            if (made_at[c] >= 0) throw std::invalid_argument("chunk " + std::to_string(c) + " generated twice");
            made_at[c] = static_cast<int>(s);
        }
        if (window && static_cast<int>(step.targets.size() + step.contexts.size()) > window->max_chunks_per_invocation)
            throw std::invalid_argument("plan step " + std::to_string(s) + " exceeds max_chunks_per_invocation=" +
                                        std::to_string(window->max_chunks_per_invocation));
    }
    for (int c = 0; c < plan.chunk_count; ++c)
        if (made_at[c] < 0) throw std::invalid_argument("chunk " + std::to_string(c) + " never generated");
}

int max_invocation_chunks(const GenerationPlan& plan)
{
    int m = 0;
    for (const auto& s : plan.steps) m = std::max(m, static_cast<int>(s.targets.size() + s.contexts.size()));
    return m;
}

std::vector<double> simulate_error(const GenerationPlan& plan, const ErrorModel& model)
{
    validate(plan);
    std::vector<double> e(plan.chunk_count, 0.0);
    for (const auto& step : plan.steps) {
        double ctx = 0.0;
        for (int c : step.contexts) ctx += e[c];
        if (!step.contexts.empty()) ctx /= static_cast<double>(step.contexts.size());
        for (int c : step.targets) e[c] = model.epsilon + model.alpha * ctx;
    }
    return e;
}

std::vector<StepKind> chunk_kinds(const GenerationPlan& plan)
{
    std::vector<StepKind> out(plan.chunk_count, StepKind::initial);
    for (const auto& step : plan.steps)
        for (int c : step.targets) out.at(c) = step.kind;
    return out;
}

std::vector<int> last_use(const GenerationPlan& plan)
{
    std::vector<int> out(plan.chunk_count, -1);
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        for (int c : plan.steps[s].targets) out.at(c) = std::max(out.at(c), static_cast<int>(s));
        for (int c : plan.steps[s].contexts) out.at(c) = static_cast<int>(s);
    }
    return out;
}

std::string plan_to_json(const GenerationPlan& plan)
{
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : plan.steps) steps.push_back({{"targets", s.targets}, {"contexts", s.contexts}, {"kind", to_string(s.kind)}});
    return nlohmann::json{{"chunk_count", plan.chunk_count}, {"steps", steps}}.dump(2);
}

std::string error_csv(const GenerationPlan& plan, const std::vector<double>& errors)
{
    const auto kinds = chunk_kinds(plan);
    std::ostringstream os;
    os.precision(17);
    os << "chunk_id,kind,error\n";
    for (int c = 0; c < plan.chunk_count; ++c) os << c << ',' << to_string(kinds[c]) << ',' << errors.at(c) << '\n';
    return os.str();
}

}  // namespace cvfi
