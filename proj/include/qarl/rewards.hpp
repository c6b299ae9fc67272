#pragma once

#include <string>
#include <string_view>

#include "qarl/core.hpp"
#include "qarl/judge.hpp"

namespace qarl {

/// Relative weights of the format, reasoning and answer reward components.
/// Non-negative, summing to 1 so the total reward stays in [0, 1].
struct RewardWeights {
    double format = 0.1;
    double reasoning = 0.45;
    double answer = 0.45;

    void validate() const;

    /// Parses the colon notation "F:R:A", e.g. "0.1:0.45:0.45".
    static RewardWeights parse(std::string_view text);
};

struct RewardBreakdown {
    double format = 0.0;     // binary: 1.0 or 0.0
    double reasoning = 0.0;  // judge similarity in [0, 1]
    double answer = 0.0;     // judge similarity in [0, 1]
    double total = 0.0;      // weighted sum
};

/// 1.0 iff the completion passed the structural checks (presence, order,
/// nesting of the reasoning and answer sections), 0.0 otherwise.
double format_reward(const StructuredCompletion& completion);

double reasoning_similarity_reward(const std::string& generated, const std::string& reference,
                                   SimilarityJudge& judge);

double answer_similarity_reward(const std::string& generated, const std::string& reference,
                                SimilarityJudge& judge);

/// Weighted combination of the three components. Malformed completions
/// short-circuit to an all-zero breakdown without any judge calls.
RewardBreakdown total_reward(const StructuredCompletion& completion, const QaRecord& record,
                             const RewardWeights& weights, SimilarityJudge& judge);

}  // namespace qarl
