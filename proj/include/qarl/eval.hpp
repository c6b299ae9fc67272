#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qarl/core.hpp"
#include "qarl/judge.hpp"

namespace qarl {

struct ScorePair {
    double reasoning = 0.0;
    double answer = 0.0;
};

struct ScoreTriple {
    double reasoning = 0.0;
    double answer = 0.0;
    double f1 = 0.0;
};

/// Harmonic mean 2RA/(R+A), 0 when both scores are 0. Inputs must lie in [0, 1].
double f1_fuse(double reasoning_score, double answer_score);

/// Pluggable deterministic text embedder.
struct EmbedderHandle {
    std::string name;
    std::size_t dimension = 0;
    std::function<std::vector<double>(std::string_view)> embed;
};

/// Dependency-free default: token counts hashed (FNV-1a) into a fixed number
/// of buckets. Deterministic across platforms.
EmbedderHandle hashed_bow_embedder(std::size_t dimension = 256);

/// Cosine similarity of the two embeddings, in [-1, 1]. Throws on
/// zero-vector embeddings.
double embedding_similarity(std::string_view a, std::string_view b,
                            const EmbedderHandle& embedder);

enum class JudgeProtocol { FiveLevel, Fractional };

struct QualityPromptTemplate {
    std::string system;
    std::string user_template;
};

// Judge prompt templates for the two quality-scoring protocols: a discrete
// 1-5 rubric over both components in one call, and a fractional 0-1 score
// per component in separate calls.
QualityPromptTemplate five_level_quality_prompt();
QualityPromptTemplate fractional_consistency_prompt();

/// Parses "REASONING_SCORE: s" / "ANSWER_SCORE: s" with s in 1..5 and maps
/// each onto [0, 1] via (s - 1) / 4. Throws NoScoreFound when absent.
ScorePair parse_five_level_reply(std::string_view reply);

/// Parses the first decimal number in the reply, clamped to [0, 1].
double parse_fractional_reply(std::string_view reply);

/// Judge-scored quality triple for one candidate. Malformed candidates score
/// (0, 0, 0) without any judge traffic.
ScoreTriple judge_quality_scores(const QaRecord& record, const StructuredCompletion& candidate,
                                 ChatTransport& transport, JudgeProtocol protocol,
                                 const RetryPolicy& retry = {});

/// Scores one (record, candidate) cell. Callers guarantee the candidate is
/// well-formed; failures throw and are isolated per cell by run_benchmark.
class RecordScorer {
public:
    virtual ~RecordScorer() = default;
    virtual ScorePair score(const QaRecord& record, const StructuredCompletion& candidate) = 0;
};

class JaccardRecordScorer final : public RecordScorer {
public:
    ScorePair score(const QaRecord& record, const StructuredCompletion& candidate) override;
    std::size_t call_count() const { return calls_.load(); }

private:
    std::atomic<std::size_t> calls_{0};
};

class EmbeddingRecordScorer final : public RecordScorer {
public:
    explicit EmbeddingRecordScorer(EmbedderHandle embedder) : embedder_(std::move(embedder)) {}
    ScorePair score(const QaRecord& record, const StructuredCompletion& candidate) override;

private:
    EmbedderHandle embedder_;
};

class JudgeRecordScorer final : public RecordScorer {
public:
    JudgeRecordScorer(ChatTransport& transport, JudgeProtocol protocol, RetryPolicy retry = {})
        : transport_(transport), protocol_(protocol), retry_(retry) {}
    ScorePair score(const QaRecord& record, const StructuredCompletion& candidate) override;

private:
    ChatTransport& transport_;
    JudgeProtocol protocol_;
    RetryPolicy retry_;
};

struct MetricConfig {
    std::string name;
    std::shared_ptr<RecordScorer> scorer;
};

struct MetricCell {
    std::string record_id;
    std::optional<ScorePair> scores;  // absent when the metric failed on this record
    std::string error;
};

struct MetricSummary {
    std::string metric;
    ScoreTriple aggregate;  // mean R, mean A, F1 recomputed from the means
    std::size_t scored = 0;
    std::size_t total = 0;
    std::vector<MetricCell> cells;
};

struct MetricReport {
    std::string model_name;
    std::size_t record_count = 0;
    std::vector<MetricSummary> metrics;
};

/// Scores every record under every metric. Malformed candidates score (0, 0)
/// without touching the scorer; a scorer failure marks only that cell absent
/// and aggregation runs over the present cells.
MetricReport run_benchmark(std::span<const QaRecord> records,
                           const std::map<std::string, StructuredCompletion>& candidates,
                           std::span<const MetricConfig> metrics,
                           const std::string& model_name);

std::string report_to_json(const MetricReport& report);
std::string report_to_markdown(const MetricReport& report);

}  // namespace qarl
