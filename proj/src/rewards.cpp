#include "qarl/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace qarl {

namespace {

double parse_weight_field(std::string_view text) {
    std::string value(text);
    char* end = nullptr;
    const double parsed = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty()) {
        throw ConfigError("invalid reward weight: \"" + value + "\"");
    }
    return parsed;
}

}  // namespace

void RewardWeights::validate() const {
    if (format < 0.0 || reasoning < 0.0 || answer < 0.0) {
        throw ConfigError("reward weights must be non-negative");
    }
    const double sum = format + reasoning + answer;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("reward weights must sum to 1, got " + std::to_string(sum));
    }
}

RewardWeights RewardWeights::parse(std::string_view text) {
    const std::size_t first = text.find(':');
    const std::size_t second = first == std::string_view::npos
                                   ? std::string_view::npos
                                   : text.find(':', first + 1);
    if (first == std::string_view::npos || second == std::string_view::npos ||
        text.find(':', second + 1) != std::string_view::npos) {
        throw ConfigError("reward weights must use the form \"F:R:A\", got \"" +
                          std::string(text) + "\"");
    }
    RewardWeights weights;
    weights.format = parse_weight_field(text.substr(0, first));
    weights.reasoning = parse_weight_field(text.substr(first + 1, second - first - 1));
    weights.answer = parse_weight_field(text.substr(second + 1));
    weights.validate();
    return weights;
}

double format_reward(const StructuredCompletion& completion) {
    return completion.well_formed ? 1.0 : 0.0;
}

double reasoning_similarity_reward(const std::string& generated, const std::string& reference,
                                   SimilarityJudge& judge) {
    return std::clamp(judge.similarity(generated, reference, PromptKind::Reasoning), 0.0, 1.0);
}

double answer_similarity_reward(const std::string& generated, const std::string& reference,
                                SimilarityJudge& judge) {
    return std::clamp(judge.similarity(generated, reference, PromptKind::Answer), 0.0, 1.0);
}

RewardBreakdown total_reward(const StructuredCompletion& completion, const QaRecord& record,
                             const RewardWeights& weights, SimilarityJudge& judge) {
    weights.validate();
    RewardBreakdown breakdown;
    if (!completion.well_formed) {
        // Format gate: no judge traffic for malformed output.
        return breakdown;
    }
    breakdown.format = 1.0;
    breakdown.reasoning =
        reasoning_similarity_reward(*completion.reasoning, record.reference_reasoning, judge);
    breakdown.answer =
        answer_similarity_reward(*completion.answer, record.reference_answer, judge);
    breakdown.total = weights.format * breakdown.format +
                      weights.reasoning * breakdown.reasoning +
                      weights.answer * breakdown.answer;
    return breakdown;
}

}  // namespace qarl
