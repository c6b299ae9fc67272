#include "qarl/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace qarl {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<std::string_view, kQuestionTypeCount> kTypeNames = {
    "object_identification",
    "attribute_analysis",
    "spatial_reasoning",
};

std::vector<std::size_t> find_all(std::string_view haystack, std::string_view needle) {
    std::vector<std::size_t> positions;
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        positions.push_back(pos);
        pos += needle.size();
    }
    return positions;
}

// First occurrence of open followed by the first close at or past its end.
std::optional<std::string> extract_first_block(std::string_view raw,
                                               std::string_view open,
                                               std::string_view close) {
    const std::size_t open_pos = raw.find(open);
    if (open_pos == std::string_view::npos) return std::nullopt;
    const std::size_t content_start = open_pos + open.size();
    const std::size_t close_pos = raw.find(close, content_start);
    if (close_pos == std::string_view::npos) return std::nullopt;
    return std::string(raw.substr(content_start, close_pos - content_start));
}

}  // namespace

std::string_view to_string(QuestionType type) {
    return kTypeNames[static_cast<std::size_t>(type)];
}

QuestionType question_type_from_string(std::string_view text) {
    for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
        if (text == kTypeNames[i]) return static_cast<QuestionType>(i);
    }
    throw DataError("unknown question_type: \"" + std::string(text) + "\"");
}

void TagConfig::validate() const {
    const std::array<const std::string*, 4> tags = {&reasoning_open, &reasoning_close,
                                                    &answer_open, &answer_close};
    for (const auto* tag : tags) {
        if (tag->empty()) throw ConfigError("completion tags must be non-empty");
    }
    for (std::size_t i = 0; i < tags.size(); ++i) {
        for (std::size_t j = i + 1; j < tags.size(); ++j) {
            if (*tags[i] == *tags[j]) {
                throw ConfigError("completion tags must be pairwise distinct: \"" +
                                  *tags[i] + "\" appears twice");
            }
        }
    }
}

std::string serialize_record(const QaRecord& record) {
    ordered_json j;
    j["id"] = record.id;
    j["image_ref"] = record.image_ref;
    j["question"] = record.question;
    j["question_type"] = std::string(to_string(record.question_type));
    j["reference_reasoning"] = record.reference_reasoning;
    j["reference_answer"] = record.reference_answer;
    return j.dump();
}

QaRecord parse_record_line(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("record line is not a JSON object");

    static constexpr std::array<std::string_view, 6> required = {
        "id", "image_ref", "question", "question_type",
        "reference_reasoning", "reference_answer"};
    for (auto field : required) {
        auto it = j.find(field);
        if (it == j.end()) throw DataError("missing field \"" + std::string(field) + "\"");
        if (!it->is_string()) throw DataError("field \"" + std::string(field) + "\" must be a string");
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(required.begin(), required.end(), key) == required.end()) {
            throw DataError("unexpected field \"" + key + "\"");
        }
    }

    QaRecord record;
    record.id = j["id"].get<std::string>();
    record.image_ref = j["image_ref"].get<std::string>();
    record.question = j["question"].get<std::string>();
    record.question_type = question_type_from_string(j["question_type"].get<std::string>());
    record.reference_reasoning = j["reference_reasoning"].get<std::string>();
    record.reference_answer = j["reference_answer"].get<std::string>();
    if (record.id.empty()) throw DataError("field \"id\" must be non-empty");
    return record;
}

std::vector<QaRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path.string());

    std::vector<QaRecord> records;
    std::unordered_map<std::string, std::size_t> seen_ids;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        QaRecord record;
        try {
            record = parse_record_line(line);
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
        auto [it, inserted] = seen_ids.emplace(record.id, line_number);
        if (!inserted) {
            throw DataError(path.string() + ":" + std::to_string(line_number) +
                            ": duplicate id \"" + record.id + "\" (first seen on line " +
                            std::to_string(it->second) + ")");
        }
        records.push_back(std::move(record));
    }
    if (in.bad()) throw DataError("I/O error while reading " + path.string());
    return records;
}

void save_dataset(std::span<const QaRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path.string());
    for (const auto& record : records) {
        out << serialize_record(record) << '\n';
    }
    if (!out) throw DataError("I/O error while writing " + path.string());
}

DatasetStats validate_dataset(std::span<const QaRecord> records) {
    if (records.empty()) throw DataError("dataset is empty");
    DatasetStats stats;
    stats.total = records.size();
    for (const auto& record : records) {
        stats.per_type[static_cast<std::size_t>(record.question_type)].count += 1;
    }
    for (auto& type_stats : stats.per_type) {
        const double exact = 100.0 * static_cast<double>(type_stats.count) /
                             static_cast<double>(stats.total);
        type_stats.percentage = std::round(exact * 100.0) / 100.0;
    }
    return stats;
}

StructuredCompletion parse_completion(std::string_view raw, const TagConfig& tags) {
    tags.validate();

    StructuredCompletion out;
    out.raw = std::string(raw);
    out.reasoning = extract_first_block(raw, tags.reasoning_open, tags.reasoning_close);
    out.answer = extract_first_block(raw, tags.answer_open, tags.answer_close);

    const auto reasoning_open = find_all(raw, tags.reasoning_open);
    const auto reasoning_close = find_all(raw, tags.reasoning_close);
    const auto answer_open = find_all(raw, tags.answer_open);
    const auto answer_close = find_all(raw, tags.answer_close);

    // Exactly-one semantics: a second block of either kind, a stray tag, or a
    // missing tag all make the completion malformed.
    const bool counts_ok = reasoning_open.size() == 1 && reasoning_close.size() == 1 &&
                           answer_open.size() == 1 && answer_close.size() == 1;
    if (!counts_ok) {
        out.well_formed = false;
        return out;
    }

    // Reasoning before answer, both blocks closed, no tag inside another block.
    const bool order_ok =
        reasoning_open[0] + tags.reasoning_open.size() <= reasoning_close[0] &&
        reasoning_close[0] + tags.reasoning_close.size() <= answer_open[0] &&
        answer_open[0] + tags.answer_open.size() <= answer_close[0];
    out.well_formed = order_ok;
    return out;
}

}  // namespace qarl
