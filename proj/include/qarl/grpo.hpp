#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qarl/errors.hpp"

namespace qarl {

/// One sampled response with per-token log-probabilities under the current,
/// old (sampling-time) and frozen reference policies.
struct ResponseSample {
    std::vector<int> token_ids;
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;

    void validate() const;  // equal non-zero lengths, log-probs <= 0
};

/// G responses sampled for one prompt, with scalar rewards and the
/// group-normalized advantages derived from them.
struct GroupBatch {
    std::string prompt_id;
    std::vector<int> prompt_tokens;  // prompt encoding, needed for gradients
    std::vector<ResponseSample> responses;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

enum class KlMode { Exact, K3Estimator };

struct GrpoConfig {
    std::size_t group_size = 8;   // G
    double clip_epsilon = 0.2;    // ratio clip half-width
    double kl_beta = 0.04;        // reference-policy regularization strength
    double std_epsilon = 1e-8;    // additive guard for near-degenerate groups
    KlMode kl_mode = KlMode::K3Estimator;
    double learning_rate = 0.5;
    std::size_t steps = 200;

    void validate() const;
};

/// (r_i - mean(r)) / (population_std(r) + std_epsilon). A group of identical
/// rewards maps to exactly zero advantages. Throws on groups smaller than 2.
std::vector<double> normalize_group_rewards(std::span<const double> rewards, double std_epsilon);

/// The whole-response advantage, repeated for every token.
std::vector<double> broadcast_advantage(double advantage, std::size_t token_count);

struct SurrogateResult {
    double loss = 0.0;
    double clip_fraction = 0.0;  // share of tokens where the clipped branch won the min
    std::size_t token_count = 0;
};

/// -mean over the group's flattened tokens of
/// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv), ratio = exp(new - old).
SurrogateResult clipped_surrogate_loss(std::span<const ResponseSample> samples,
                                       std::span<const double> advantages,
                                       double clip_epsilon);

/// KL(p || q) = sum p * ln(p/q) with 0 * ln(0/q) = 0. Throws when p has mass
/// where q has none, or when either vector is not a distribution.
double kl_exact(std::span<const double> dist_new, std::span<const double> dist_ref);

/// Per-token estimator: with t = logp_ref - logp_new, returns e^t - t - 1.
/// Non-negative, zero only at coincidence.
double kl_k3(double logp_new, double logp_ref);

/// Current/reference next-token distributions at one position, required for
/// the exact KL mode.
struct DistPair {
    std::vector<double> current;
    std::vector<double> reference;
};
using ExactDists = std::vector<std::vector<DistPair>>;  // [response][token]

struct GrpoMetrics {
    double loss = 0.0;
    double surrogate_loss = 0.0;
    double kl = 0.0;  // mean per-token KL term
    double clip_fraction = 0.0;
    double mean_reward = 0.0;
    double mean_advantage = 0.0;
    std::size_t token_count = 0;
};

/// Clipped surrogate plus beta * mean per-token KL toward the reference
/// policy. exact_dists must be supplied iff kl_mode is Exact.
GrpoMetrics grpo_loss(const GroupBatch& batch, const GrpoConfig& config,
                      const ExactDists* exact_dists = nullptr);

}  // namespace qarl
