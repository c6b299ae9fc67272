#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qarl/core.hpp"
#include "qarl/eval.hpp"

namespace qarl {

struct GeneratedPair {
    std::string reasoning;
    std::string answer;
};

/// A model (or scripted stand-in) that produces a reasoning/answer pair for a
/// record. The loop re-invokes the handle each iteration, so an external
/// process may swap the model behind it between iterations.
struct GeneratorHandle {
    std::string name;
    std::function<GeneratedPair(const QaRecord&)> generate;
};

/// Embedding similarity of the two reasonings and of the two answers, each
/// clamped to [0, 1], fused by harmonic mean.
double pair_score(const GeneratedPair& tuned, const GeneratedPair& base,
                  const EmbedderHandle& embedder);

struct IdPartition {
    std::vector<std::string> accepted;  // score strictly above the threshold
    std::vector<std::string> pending;
};

IdPartition partition(const std::map<std::string, double>& scores, double threshold);

struct IterationStats {
    std::size_t accepted_count = 0;  // cumulative
    std::size_t pending_count = 0;
};

struct PendingInfo {
    std::optional<double> last_score;
    std::size_t iterations_pending = 0;
    GeneratedPair tuned;
    GeneratedPair base;
    std::string error;  // non-empty when the last generator invocation failed
};

struct RefinementState {
    std::size_t iterations = 0;
    double threshold = 0.8;
    std::map<std::string, GeneratedPair> accepted;  // id -> winning tuned output
    std::map<std::string, PendingInfo> pending;
    std::vector<IterationStats> history;
};

struct RefineOptions {
    double threshold = 0.8;
    std::size_t max_iterations = 10;
    double stop_fraction = 0.05;  // stop once pending/total falls to this share

    void validate() const;
};

/// Scores every pending record each iteration, accepts ids whose score
/// exceeds the threshold, and stops at the pending-share target, the
/// iteration cap, or an iteration that accepts nothing. Generator failures
/// leave a record pending with its error recorded; accepted records are never
/// rescored.
RefinementState refine_loop(std::span<const QaRecord> records, const GeneratorHandle& tuned,
                            const GeneratorHandle& base, const EmbedderHandle& embedder,
                            const RefineOptions& options);

/// Manual-review export: one JSON line per pending record with the dataset
/// fields plus last_score, iterations_pending and both generators' outputs.
void write_review_export(const RefinementState& state, std::span<const QaRecord> records,
                         const std::filesystem::path& path);

struct ReviewEntry {
    QaRecord record;
    std::optional<double> last_score;
    std::size_t iterations_pending = 0;
    GeneratedPair tuned;
    GeneratedPair base;
};

std::vector<ReviewEntry> load_review_export(const std::filesystem::path& path);

std::string refinement_state_to_json(const RefinementState& state);

}  // namespace qarl
