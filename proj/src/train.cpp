#include "qarl/train.hpp"

#include <json.hpp>

namespace qarl {

std::string step_metrics_to_json_line(const StepMetrics& metrics) {
    nlohmann::ordered_json j;
    j["step"] = metrics.step;
    j["loss"] = metrics.loss;
    j["mean_total_reward"] = metrics.mean_total_reward;
    j["mean_format_reward"] = metrics.mean_format_reward;
    j["mean_reasoning_reward"] = metrics.mean_reasoning_reward;
    j["mean_answer_reward"] = metrics.mean_answer_reward;
    j["clip_fraction"] = metrics.clip_fraction;
    j["kl"] = metrics.kl;
    return j.dump();
}

StepMetrics step_metrics_from_json_line(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        StepMetrics metrics;
        metrics.step = j.at("step").get<std::size_t>();
        metrics.loss = j.at("loss").get<double>();
        metrics.mean_total_reward = j.at("mean_total_reward").get<double>();
        metrics.mean_format_reward = j.at("mean_format_reward").get<double>();
        metrics.mean_reasoning_reward = j.at("mean_reasoning_reward").get<double>();
        metrics.mean_answer_reward = j.at("mean_answer_reward").get<double>();
        metrics.clip_fraction = j.at("clip_fraction").get<double>();
        metrics.kl = j.at("kl").get<double>();
        return metrics;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid metrics line: ") + e.what());
    }
}

StepMetrics grpo_step(TinyPolicy& policy, const TinyPolicy& reference_policy,
                      std::span<const ToyPrompt> prompts, std::size_t max_response_len,
                      const SampleRewardFn& reward, const DecodeFn& decode,
                      const GrpoConfig& config, std::uint64_t step_seed) {
    config.validate();
    if (prompts.empty()) throw ConfigError("grpo_step requires at least one prompt");

    const TinyPolicy sampling_policy = policy;  // pi_old snapshot for this step

    StepMetrics metrics;
    LogitGrad grad = policy.zero_gradient();
    double loss_sum = 0.0;
    double kl_weighted_sum = 0.0;
    std::size_t clipped_tokens = 0;
    std::size_t total_tokens = 0;
    std::size_t total_samples = 0;

    for (std::size_t p = 0; p < prompts.size(); ++p) {
        const ToyPrompt& prompt = prompts[p];
        GroupBatch batch;
        batch.prompt_id = prompt.id;
        batch.prompt_tokens = prompt.tokens;

        ExactDists exact_dists;
        for (std::size_t g = 0; g < config.group_size; ++g) {
            const std::uint64_t sample_seed =
                mix_seed(step_seed, p * config.group_size + g + 1);
            const SampledSequence sampled =
                sampling_policy.sample_sequence(prompt.tokens, max_response_len, sample_seed);

            ResponseSample response;
            response.token_ids = sampled.tokens;
            response.logp_old = sampled.logp;
            response.logp_new = policy.sequence_logprob(prompt.tokens, sampled.tokens);
            response.logp_ref = reference_policy.sequence_logprob(prompt.tokens, sampled.tokens);

            const RewardOutcome outcome = reward(decode(sampled.tokens));
            batch.rewards.push_back(outcome.total);
            metrics.mean_total_reward += outcome.total;
            metrics.mean_format_reward += outcome.format;
            metrics.mean_reasoning_reward += outcome.reasoning;
            metrics.mean_answer_reward += outcome.answer;
            ++total_samples;

            if (config.kl_mode == KlMode::Exact) {
                std::vector<DistPair> pairs;
                for (std::size_t t = 0; t < sampled.tokens.size(); ++t) {
                    const int context_token =
                        policy.context_token_at(prompt.tokens, sampled.tokens, t);
                    pairs.push_back(DistPair{
                        policy.probs(policy.context_index(context_token)),
                        reference_policy.probs(reference_policy.context_index(context_token))});
                }
                exact_dists.push_back(std::move(pairs));
            }
            batch.responses.push_back(std::move(response));
        }

        batch.advantages = normalize_group_rewards(batch.rewards, config.std_epsilon);

        const GrpoMetrics batch_metrics = grpo_loss(
            batch, config, config.kl_mode == KlMode::Exact ? &exact_dists : nullptr);
        loss_sum += batch_metrics.loss;
        kl_weighted_sum += batch_metrics.kl * static_cast<double>(batch_metrics.token_count);
        clipped_tokens += static_cast<std::size_t>(
            batch_metrics.clip_fraction * static_cast<double>(batch_metrics.token_count) + 0.5);
        total_tokens += batch_metrics.token_count;

        grad.add_scaled(loss_gradient(policy, batch, config, &reference_policy),
                        1.0 / static_cast<double>(prompts.size()));
    }

    // All groups sampled and scored without error; commit the update.
    policy.apply_gradient(grad, config.learning_rate);

    const double n_samples = static_cast<double>(total_samples);
    metrics.loss = loss_sum / static_cast<double>(prompts.size());
    metrics.mean_total_reward /= n_samples;
    metrics.mean_format_reward /= n_samples;
    metrics.mean_reasoning_reward /= n_samples;
    metrics.mean_answer_reward /= n_samples;
    metrics.clip_fraction = static_cast<double>(clipped_tokens) / static_cast<double>(total_tokens);
    metrics.kl = kl_weighted_sum / static_cast<double>(total_tokens);
    return metrics;
}

GrpoTrainer::GrpoTrainer(TinyPolicy initial, GrpoConfig config, std::uint64_t run_seed)
    : policy_(initial), reference_(std::move(initial)), config_(config), run_seed_(run_seed) {
    config_.validate();
}

StepMetrics GrpoTrainer::step(std::span<const ToyPrompt> prompts, std::size_t max_response_len,
                              const SampleRewardFn& reward, const DecodeFn& decode) {
    StepMetrics metrics = grpo_step(policy_, reference_, prompts, max_response_len, reward,
                                    decode, config_, mix_seed(run_seed_, steps_taken_));
    metrics.step = steps_taken_;
    ++steps_taken_;
    return metrics;
}

}  // namespace qarl
