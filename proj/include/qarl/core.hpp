#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qarl/errors.hpp"

namespace qarl {

enum class QuestionType { ObjectIdentification, AttributeAnalysis, SpatialReasoning };

constexpr std::size_t kQuestionTypeCount = 3;

std::string_view to_string(QuestionType type);
QuestionType question_type_from_string(std::string_view text);  // throws DataError

/// One dataset row: a question over an opaque image reference plus the
/// reference reasoning chain and answer it should be compared against.
struct QaRecord {
    std::string id;
    std::string image_ref;  // provenance only, never dereferenced
    std::string question;
    QuestionType question_type = QuestionType::ObjectIdentification;
    std::string reference_reasoning;
    std::string reference_answer;

    bool operator==(const QaRecord&) const = default;
};

/// Delimiters for the reasoning and answer sections of a model completion.
struct TagConfig {
    std::string reasoning_open = "<think>";
    std::string reasoning_close = "</think>";
    std::string answer_open = "<answer>";
    std::string answer_close = "</answer>";

    void validate() const;  // all non-empty and pairwise distinct
};

/// A raw completion split into its reasoning and answer sections.
/// well_formed is true only when exactly one reasoning block precedes
/// exactly one answer block, both closed, with no nesting between them.
struct StructuredCompletion {
    std::string raw;
    std::optional<std::string> reasoning;
    std::optional<std::string> answer;
    bool well_formed = false;
};

struct TypeStats {
    std::size_t count = 0;
    double percentage = 0.0;  // 100*count/total rounded to 2 decimals
};

struct DatasetStats {
    std::size_t total = 0;
    std::array<TypeStats, kQuestionTypeCount> per_type{};  // indexed by QuestionType
};

// Dataset files are UTF-8, one JSON object per line with exactly the fields
// {id, image_ref, question, question_type, reference_reasoning,
// reference_answer}. serialize_record emits the canonical single-line form;
// save_dataset followed by load_dataset round-trips byte-identically.
std::string serialize_record(const QaRecord& record);
QaRecord parse_record_line(std::string_view line);  // throws DataError

std::vector<QaRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(std::span<const QaRecord> records, const std::filesystem::path& path);

DatasetStats validate_dataset(std::span<const QaRecord> records);

StructuredCompletion parse_completion(std::string_view raw, const TagConfig& tags = {});

}  // namespace qarl
