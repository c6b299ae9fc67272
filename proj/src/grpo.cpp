#include "qarl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qarl {

namespace {

constexpr double kDistributionTolerance = 1e-9;

bool unclipped_excluded(double ratio, double advantage, double clip_epsilon) {
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return clipped_ratio * advantage < ratio * advantage;
}

}  // namespace

void ResponseSample::validate() const {
    const std::size_t len = token_ids.size();
    if (len == 0) throw DataError("response sample must contain at least one token");
    if (logp_new.size() != len || logp_old.size() != len || logp_ref.size() != len) {
        throw DataError("response sample lists must have equal lengths");
    }
    for (const auto* lists : {&logp_new, &logp_old, &logp_ref}) {
        for (double lp : *lists) {
            if (!(lp <= 0.0)) throw DataError("log-probabilities must be <= 0");
        }
    }
}

void GrpoConfig::validate() const {
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw ConfigError("clip_epsilon must lie in (0, 1)");
    }
    if (kl_beta < 0.0) throw ConfigError("kl_beta must be >= 0");
    if (std_epsilon < 0.0) throw ConfigError("std_epsilon must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

std::vector<double> normalize_group_rewards(std::span<const double> rewards,
                                            double std_epsilon) {
    if (rewards.size() < 2) {
        throw DataError("reward group must contain at least 2 entries");
    }
    const bool all_equal =
        std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
    if (all_equal) {
        return std::vector<double>(rewards.size(), 0.0);
    }

    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double variance = 0.0;
    for (double r : rewards) {
        variance += (r - mean) * (r - mean);
    }
    variance /= n;  // population variance, no Bessel correction
    const double std_dev = std::sqrt(variance);

    std::vector<double> advantages(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        advantages[i] = (rewards[i] - mean) / (std_dev + std_epsilon);
    }
    return advantages;
}

std::vector<double> broadcast_advantage(double advantage, std::size_t token_count) {
    if (token_count == 0) throw DataError("cannot broadcast advantage to zero tokens");
    return std::vector<double>(token_count, advantage);
}

SurrogateResult clipped_surrogate_loss(std::span<const ResponseSample> samples,
                                       std::span<const double> advantages,
                                       double clip_epsilon) {
    if (samples.size() != advantages.size()) {
        throw DataError("samples and advantages must have equal lengths");
    }
    SurrogateResult result;
    double objective_sum = 0.0;
    std::size_t clipped_tokens = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& sample = samples[i];
        sample.validate();
        const double advantage = advantages[i];
        for (std::size_t t = 0; t < sample.token_ids.size(); ++t) {
            const double ratio = std::exp(sample.logp_new[t] - sample.logp_old[t]);
            const double clipped_ratio =
                std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
            objective_sum += std::min(ratio * advantage, clipped_ratio * advantage);
            if (unclipped_excluded(ratio, advantage, clip_epsilon)) ++clipped_tokens;
            ++result.token_count;
        }
    }
    if (result.token_count == 0) throw DataError("surrogate loss over an empty group");
    const double n = static_cast<double>(result.token_count);
    result.loss = -objective_sum / n;
    result.clip_fraction = static_cast<double>(clipped_tokens) / n;
    return result;
}

double kl_exact(std::span<const double> dist_new, std::span<const double> dist_ref) {
    if (dist_new.size() != dist_ref.size() || dist_new.empty()) {
        throw DataError("KL requires two equal-length distributions");
    }
    double sum_new = 0.0;
    double sum_ref = 0.0;
    for (std::size_t i = 0; i < dist_new.size(); ++i) {
        if (dist_new[i] < 0.0 || dist_ref[i] < 0.0) {
            throw DataError("distributions must be non-negative");
        }
        sum_new += dist_new[i];
        sum_ref += dist_ref[i];
    }
    if (std::abs(sum_new - 1.0) > kDistributionTolerance ||
        std::abs(sum_ref - 1.0) > kDistributionTolerance) {
        throw DataError("distributions must sum to 1");
    }

    double kl = 0.0;
    for (std::size_t i = 0; i < dist_new.size(); ++i) {
        if (dist_new[i] == 0.0) continue;
        if (dist_ref[i] == 0.0) {
            throw DataError("KL support violation: new policy has mass where reference has none");
        }
        kl += dist_new[i] * std::log(dist_new[i] / dist_ref[i]);
    }
    return kl;
}

double kl_k3(double logp_new, double logp_ref) {
    const double t = logp_ref - logp_new;
    return std::exp(t) - t - 1.0;
}

GrpoMetrics grpo_loss(const GroupBatch& batch, const GrpoConfig& config,
                      const ExactDists* exact_dists) {
    config.validate();
    if (batch.responses.size() != batch.advantages.size() ||
        batch.responses.size() != batch.rewards.size() || batch.responses.empty()) {
        throw DataError("group batch responses, rewards and advantages must align");
    }
    if (config.kl_mode == KlMode::Exact) {
        if (exact_dists == nullptr || exact_dists->size() != batch.responses.size()) {
            throw DataError("exact KL mode requires per-token distribution pairs");
        }
    }

    GrpoMetrics metrics;
    const SurrogateResult surrogate =
        clipped_surrogate_loss(batch.responses, batch.advantages, config.clip_epsilon);
    metrics.surrogate_loss = surrogate.loss;
    metrics.clip_fraction = surrogate.clip_fraction;
    metrics.token_count = surrogate.token_count;

    double kl_sum = 0.0;
    for (std::size_t i = 0; i < batch.responses.size(); ++i) {
        const auto& sample = batch.responses[i];
        if (config.kl_mode == KlMode::Exact &&
            (*exact_dists)[i].size() != sample.token_ids.size()) {
            throw DataError("exact KL distributions must cover every token");
        }
        for (std::size_t t = 0; t < sample.token_ids.size(); ++t) {
            if (config.kl_mode == KlMode::K3Estimator) {
                kl_sum += kl_k3(sample.logp_new[t], sample.logp_ref[t]);
            } else {
                const DistPair& pair = (*exact_dists)[i][t];
                kl_sum += kl_exact(pair.current, pair.reference);
            }
        }
    }
    metrics.kl = kl_sum / static_cast<double>(metrics.token_count);
    metrics.loss = metrics.surrogate_loss + config.kl_beta * metrics.kl;

    metrics.mean_reward =
        std::accumulate(batch.rewards.begin(), batch.rewards.end(), 0.0) /
        static_cast<double>(batch.rewards.size());
    metrics.mean_advantage =
        std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) /
        static_cast<double>(batch.advantages.size());
    return metrics;
}

}  // namespace qarl
