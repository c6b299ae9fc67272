#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "qarl/grpo.hpp"
#include "qarl/toy_policy.hpp"

namespace qarl {

/// Scalar training reward for one decoded completion, with the per-component
/// values kept for logging.
struct RewardOutcome {
    double total = 0.0;
    double format = 0.0;
    double reasoning = 0.0;
    double answer = 0.0;
};

using SampleRewardFn = std::function<RewardOutcome(const std::string& completion_text)>;
using DecodeFn = std::function<std::string(std::span<const int>)>;

struct StepMetrics {
    std::size_t step = 0;
    double loss = 0.0;
    double mean_total_reward = 0.0;
    double mean_format_reward = 0.0;
    double mean_reasoning_reward = 0.0;
    double mean_answer_reward = 0.0;
    double clip_fraction = 0.0;
    double kl = 0.0;
};

std::string step_metrics_to_json_line(const StepMetrics& metrics);
StepMetrics step_metrics_from_json_line(std::string_view line);

/// One GRPO update: snapshot the current policy as the sampling policy, draw
/// group_size responses per prompt, score them, normalize rewards per group,
/// and apply one gradient-descent step. A reward failure aborts the step
/// before any parameter change.
StepMetrics grpo_step(TinyPolicy& policy, const TinyPolicy& reference_policy,
                      std::span<const ToyPrompt> prompts, std::size_t max_response_len,
                      const SampleRewardFn& reward, const DecodeFn& decode,
                      const GrpoConfig& config, std::uint64_t step_seed);

/// Owns the trained policy and the reference snapshot frozen at construction,
/// and derives per-step sampling seeds from the run seed.
class GrpoTrainer {
public:
    GrpoTrainer(TinyPolicy initial, GrpoConfig config, std::uint64_t run_seed);

    StepMetrics step(std::span<const ToyPrompt> prompts, std::size_t max_response_len,
                     const SampleRewardFn& reward, const DecodeFn& decode);

    const TinyPolicy& policy() const { return policy_; }
    const TinyPolicy& reference() const { return reference_; }
    std::size_t steps_taken() const { return steps_taken_; }

private:
    TinyPolicy policy_;
    TinyPolicy reference_;
    GrpoConfig config_;
    std::uint64_t run_seed_;
    std::size_t steps_taken_ = 0;
};

}  // namespace qarl
