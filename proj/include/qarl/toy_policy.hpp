#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qarl/core.hpp"
#include "qarl/grpo.hpp"

namespace qarl {

struct SpecialTokens {
    int bos = 0;
    int eos = 1;
};

/// Gradient with the same shape as the policy's logit table.
struct LogitGrad {
    std::size_t contexts = 0;
    std::size_t vocab = 0;
    std::vector<double> values;  // row-major

    double& at(std::size_t context, std::size_t token) { return values[context * vocab + token]; }
    double at(std::size_t context, std::size_t token) const { return values[context * vocab + token]; }
    void add_scaled(const LogitGrad& other, double scale);
};

struct SampledSequence {
    std::vector<int> tokens;                  // ends with EOS unless truncated at max_len
    std::vector<double> logp;                 // log-probability of each emitted token
    std::vector<std::vector<double>> dists;   // full next-token distribution per step
};

/// Deterministic counter-based generator (splitmix64). Identical seeds give
/// identical streams on every platform.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64();
    double next_uniform();  // [0, 1)

private:
    std::uint64_t state_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// A context-conditioned categorical policy over a small vocabulary: one
/// logit row per context (order 0: a single shared row; order 1: one row per
/// previous token). Small enough that gradients stay hand-derivable while
/// still exercising sampling, log-probabilities and the full GRPO update.
class TinyPolicy {
public:
    TinyPolicy(std::size_t vocab_size, int context_order, SpecialTokens specials);

    std::size_t vocab_size() const { return vocab_size_; }
    int context_order() const { return context_order_; }
    std::size_t context_count() const { return context_order_ == 0 ? 1 : vocab_size_; }
    SpecialTokens specials() const { return specials_; }

    double logit(std::size_t context, std::size_t token) const;
    void set_logit(std::size_t context, std::size_t token, double value);

    std::size_t context_index(int context_token) const;
    int context_token_at(std::span<const int> prompt, std::span<const int> response,
                         std::size_t position) const;

    /// Canonical log-softmax of one context row; sampling and scoring both
    /// derive from this single computation.
    std::vector<double> log_probs(std::size_t context) const;
    std::vector<double> probs(std::size_t context) const;

    /// Autoregressive inverse-CDF sampling until EOS or max_len.
    SampledSequence sample_sequence(std::span<const int> prompt, std::size_t max_len,
                                    std::uint64_t seed) const;

    std::vector<double> sequence_logprob(std::span<const int> prompt,
                                         std::span<const int> response) const;

    LogitGrad zero_gradient() const;
    void apply_gradient(const LogitGrad& grad, double learning_rate);

    void save(const std::filesystem::path& path) const;
    static TinyPolicy load(const std::filesystem::path& path);

private:
    std::size_t vocab_size_;
    int context_order_;
    SpecialTokens specials_;
    std::vector<double> logits_;  // row-major context_count x vocab_size
};

/// Analytic gradient of grpo_loss with respect to the policy logits, with
/// advantages held fixed. reference_policy is required for the exact KL mode.
/// At the clip kink the unclipped branch is used, so the gradient is a fixed
/// deterministic subgradient.
LogitGrad loss_gradient(const TinyPolicy& policy, const GroupBatch& batch,
                        const GrpoConfig& config,
                        const TinyPolicy* reference_policy = nullptr);

struct ToyPrompt {
    std::string id;
    std::vector<int> tokens;
};

/// The synthetic tag-emission task: a small vocabulary whose tokens decode to
/// tag strings and filler words, with an initial policy biased part-way
/// toward the compliant sequence so early samples are only sometimes
/// well-formed.
struct FormatTask {
    TinyPolicy policy;
    std::vector<ToyPrompt> prompts;
    std::size_t max_response_len = 12;
    TagConfig tags;
    QaRecord reference;  // synthetic record the similarity rewards compare against
    std::vector<std::string> token_text;

    std::string decode(std::span<const int> tokens) const;
};

FormatTask make_format_task(const TagConfig& tags = {}, double initial_bias = 2.5);

}  // namespace qarl
