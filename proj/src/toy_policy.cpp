#include "qarl/toy_policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace qarl {

void LogitGrad::add_scaled(const LogitGrad& other, double scale) {
    if (other.values.size() != values.size()) {
        throw DataError("gradient shapes do not match");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] += scale * other.values[i];
    }
}

std::uint64_t CounterRng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double CounterRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t mixed = seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
    CounterRng rng(mixed);
    return rng.next_u64();
}

TinyPolicy::TinyPolicy(std::size_t vocab_size, int context_order, SpecialTokens specials)
    : vocab_size_(vocab_size), context_order_(context_order), specials_(specials) {
    if (vocab_size < 2 || vocab_size > 64) {
        throw ConfigError("toy policy vocab_size must lie in [2, 64]");
    }
    if (context_order != 0 && context_order != 1) {
        throw ConfigError("toy policy context_order must be 0 or 1");
    }
    const auto in_vocab = [&](int token) {
        return token >= 0 && static_cast<std::size_t>(token) < vocab_size;
    };
    if (!in_vocab(specials.bos) || !in_vocab(specials.eos) || specials.bos == specials.eos) {
        throw ConfigError("toy policy BOS/EOS tokens must be distinct and within the vocabulary");
    }
    logits_.assign(context_count() * vocab_size_, 0.0);
}

double TinyPolicy::logit(std::size_t context, std::size_t token) const {
    return logits_[context * vocab_size_ + token];
}

void TinyPolicy::set_logit(std::size_t context, std::size_t token, double value) {
    if (!std::isfinite(value)) throw ConfigError("logits must be finite");
    logits_[context * vocab_size_ + token] = value;
}

std::size_t TinyPolicy::context_index(int context_token) const {
    if (context_token < 0 || static_cast<std::size_t>(context_token) >= vocab_size_) {
        throw DataError("context token outside vocabulary: " + std::to_string(context_token));
    }
    return context_order_ == 0 ? 0 : static_cast<std::size_t>(context_token);
}

int TinyPolicy::context_token_at(std::span<const int> prompt, std::span<const int> response,
                                 std::size_t position) const {
    if (position > 0) return response[position - 1];
    return prompt.empty() ? specials_.bos : prompt.back();
}

std::vector<double> TinyPolicy::log_probs(std::size_t context) const {
    const double* row = logits_.data() + context * vocab_size_;
    const double max_logit = *std::max_element(row, row + vocab_size_);
    double sum = 0.0;
    for (std::size_t v = 0; v < vocab_size_; ++v) {
        sum += std::exp(row[v] - max_logit);
    }
    const double log_norm = max_logit + std::log(sum);
    std::vector<double> out(vocab_size_);
    for (std::size_t v = 0; v < vocab_size_; ++v) {
        out[v] = row[v] - log_norm;
    }
    return out;
}

std::vector<double> TinyPolicy::probs(std::size_t context) const {
    std::vector<double> out = log_probs(context);
    for (double& lp : out) lp = std::exp(lp);
    return out;
}

SampledSequence TinyPolicy::sample_sequence(std::span<const int> prompt, std::size_t max_len,
                                            std::uint64_t seed) const {
    if (max_len == 0) throw ConfigError("max_len must be >= 1");
    for (int token : prompt) context_index(token);  // vocabulary check

    SampledSequence out;
    CounterRng rng(seed);
    int context_token = prompt.empty() ? specials_.bos : prompt.back();
    for (std::size_t step = 0; step < max_len; ++step) {
        const std::size_t context = context_index(context_token);
        const std::vector<double> lp = log_probs(context);
        std::vector<double> dist(vocab_size_);
        for (std::size_t v = 0; v < vocab_size_; ++v) dist[v] = std::exp(lp[v]);

        const double u = rng.next_uniform();
        double cumulative = 0.0;
        std::size_t sampled = vocab_size_ - 1;
        for (std::size_t v = 0; v < vocab_size_; ++v) {
            cumulative += dist[v];
            if (u < cumulative) {
                sampled = v;
                break;
            }
        }

        out.tokens.push_back(static_cast<int>(sampled));
        out.logp.push_back(lp[sampled]);
        out.dists.push_back(std::move(dist));
        if (static_cast<int>(sampled) == specials_.eos) break;
        context_token = static_cast<int>(sampled);
    }
    return out;
}

std::vector<double> TinyPolicy::sequence_logprob(std::span<const int> prompt,
                                                 std::span<const int> response) const {
    if (response.empty()) throw DataError("response must be non-empty");
    std::vector<double> out(response.size());
    for (std::size_t t = 0; t < response.size(); ++t) {
        const int context_token = context_token_at(prompt, response, t);
        const int token = response[t];
        if (token < 0 || static_cast<std::size_t>(token) >= vocab_size_) {
            throw DataError("response token outside vocabulary: " + std::to_string(token));
        }
        out[t] = log_probs(context_index(context_token))[static_cast<std::size_t>(token)];
    }
    return out;
}

LogitGrad TinyPolicy::zero_gradient() const {
    LogitGrad grad;
    grad.contexts = context_count();
    grad.vocab = vocab_size_;
    grad.values.assign(grad.contexts * grad.vocab, 0.0);
    return grad;
}

void TinyPolicy::apply_gradient(const LogitGrad& grad, double learning_rate) {
    if (grad.contexts != context_count() || grad.vocab != vocab_size_) {
        throw DataError("gradient shape does not match policy logits");
    }
    for (std::size_t i = 0; i < logits_.size(); ++i) {
        logits_[i] -= learning_rate * grad.values[i];
    }
}

void TinyPolicy::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["vocab_size"] = vocab_size_;
    j["context_order"] = context_order_;
    j["bos"] = specials_.bos;
    j["eos"] = specials_.eos;
    j["logits"] = logits_;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out << j.dump() << '\n';
}

TinyPolicy TinyPolicy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        TinyPolicy policy(j.at("vocab_size").get<std::size_t>(),
                          j.at("context_order").get<int>(),
                          SpecialTokens{j.at("bos").get<int>(), j.at("eos").get<int>()});
        const auto logits = j.at("logits").get<std::vector<double>>();
        if (logits.size() != policy.logits_.size()) {
            throw DataError("checkpoint logit table has the wrong size");
        }
        policy.logits_ = logits;
        return policy;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid checkpoint " + path.string() + ": " + e.what());
    }
}

LogitGrad loss_gradient(const TinyPolicy& policy, const GroupBatch& batch,
                        const GrpoConfig& config, const TinyPolicy* reference_policy) {
    config.validate();
    if (batch.responses.size() != batch.advantages.size() || batch.responses.empty()) {
        throw DataError("group batch responses and advantages must align");
    }
    if (config.kl_mode == KlMode::Exact && reference_policy == nullptr) {
        throw DataError("exact KL mode requires the reference policy");
    }

    std::size_t total_tokens = 0;
    for (const auto& sample : batch.responses) total_tokens += sample.token_ids.size();
    if (total_tokens == 0) throw DataError("gradient over an empty group");
    const double inv_n = 1.0 / static_cast<double>(total_tokens);

    LogitGrad grad = policy.zero_gradient();
    const std::size_t vocab = policy.vocab_size();

    for (std::size_t i = 0; i < batch.responses.size(); ++i) {
        const auto& sample = batch.responses[i];
        const double advantage = batch.advantages[i];
        for (std::size_t t = 0; t < sample.token_ids.size(); ++t) {
            const int context_token =
                policy.context_token_at(batch.prompt_tokens, sample.token_ids, t);
            const std::size_t context = policy.context_index(context_token);
            const std::vector<double> lp_row = policy.log_probs(context);
            const int token = sample.token_ids[t];
            const double lp_new = lp_row[static_cast<std::size_t>(token)];

            const double ratio = std::exp(lp_new - sample.logp_old[t]);
            const double clipped_ratio =
                std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
            // When the min strictly selects the clipped term the ratio sits in
            // the saturated region of the clamp and the token contributes no
            // gradient; ties take the unclipped branch.
            const bool excluded = clipped_ratio * advantage < ratio * advantage;
            double dloss_dlp = excluded ? 0.0 : -ratio * advantage;

            if (config.kl_mode == KlMode::K3Estimator) {
                const double t_kl = sample.logp_ref[t] - lp_new;
                dloss_dlp += config.kl_beta * (1.0 - std::exp(t_kl));
            }

            // Chain through log-softmax: d lp(token) / d logit(w) = [w == token] - p(w).
            for (std::size_t w = 0; w < vocab; ++w) {
                const double p_w = std::exp(lp_row[w]);
                const double indicator = (w == static_cast<std::size_t>(token)) ? 1.0 : 0.0;
                grad.at(context, w) += inv_n * dloss_dlp * (indicator - p_w);
            }

            if (config.kl_mode == KlMode::Exact) {
                const std::vector<double> lq_row =
                    reference_policy->log_probs(reference_policy->context_index(context_token));
                double kl_here = 0.0;
                for (std::size_t w = 0; w < vocab; ++w) {
                    kl_here += std::exp(lp_row[w]) * (lp_row[w] - lq_row[w]);
                }
                for (std::size_t w = 0; w < vocab; ++w) {
                    const double p_w = std::exp(lp_row[w]);
                    grad.at(context, w) +=
                        inv_n * config.kl_beta * p_w * ((lp_row[w] - lq_row[w]) - kl_here);
                }
            }
        }
    }
    return grad;
}

std::string FormatTask::decode(std::span<const int> tokens) const {
    std::string text;
    for (int token : tokens) {
        if (token < 0 || static_cast<std::size_t>(token) >= token_text.size()) {
            throw DataError("cannot decode token " + std::to_string(token));
        }
        text += token_text[static_cast<std::size_t>(token)];
    }
    return text;
}

FormatTask make_format_task(const TagConfig& tags, double initial_bias) {
    tags.validate();

    constexpr int kBos = 0, kEos = 1;
    constexpr int kReasoningOpen = 2, kReasoningClose = 3;
    constexpr int kAnswerOpen = 4, kAnswerClose = 5;
    constexpr int kWordAlpha = 6, kWordBeta = 7;
    constexpr std::size_t kVocab = 8;

    FormatTask task{
        TinyPolicy(kVocab, 1, SpecialTokens{kBos, kEos}),
        {},
        12,
        tags,
        QaRecord{
            "format-task",
            "",
            "Respond with your reasoning and answer inside the configured tags.",
            QuestionType::ObjectIdentification,
            "alpha",
            "beta",
        },
        {"", "", tags.reasoning_open, tags.reasoning_close, tags.answer_open,
         tags.answer_close, "alpha ", "beta "},
    };

    // Bias each context toward the compliant chain
    // BOS -> <think> -> word -> </think> -> <answer> -> word -> </answer> -> EOS
    // so the initial policy is partially compliant rather than uniform.
    const std::array<std::pair<int, int>, 8> chain = {{
        {kBos, kReasoningOpen},
        {kReasoningOpen, kWordAlpha},
        {kWordAlpha, kReasoningClose},
        {kReasoningClose, kAnswerOpen},
        {kAnswerOpen, kWordBeta},
        {kWordBeta, kAnswerClose},
        {kAnswerClose, kEos},
        {kEos, kEos},
    }};
    for (const auto& [context_token, target] : chain) {
        task.policy.set_logit(task.policy.context_index(context_token),
                              static_cast<std::size_t>(target), initial_bias);
    }

    for (int i = 0; i < 4; ++i) {
        task.prompts.push_back(ToyPrompt{"prompt-" + std::to_string(i), {kBos}});
    }
    return task;
}

}  // namespace qarl
