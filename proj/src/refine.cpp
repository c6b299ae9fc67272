#include "qarl/refine.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace qarl {

double pair_score(const GeneratedPair& tuned, const GeneratedPair& base,
                  const EmbedderHandle& embedder) {
    const double reasoning_sim =
        std::clamp(embedding_similarity(tuned.reasoning, base.reasoning, embedder), 0.0, 1.0);
    const double answer_sim =
        std::clamp(embedding_similarity(tuned.answer, base.answer, embedder), 0.0, 1.0);
    return f1_fuse(reasoning_sim, answer_sim);
}

IdPartition partition(const std::map<std::string, double>& scores, double threshold) {
    IdPartition result;
    for (const auto& [id, score] : scores) {
        if (score > threshold) {  // strictly above
            result.accepted.push_back(id);
        } else {
            result.pending.push_back(id);
        }
    }
    return result;
}

void RefineOptions::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("refine threshold must lie in (0, 1)");
    }
    if (max_iterations < 1) throw ConfigError("refine max_iterations must be >= 1");
    if (!(stop_fraction > 0.0 && stop_fraction <= 1.0)) {
        throw ConfigError("refine stop_fraction must lie in (0, 1]");
    }
}

RefinementState refine_loop(std::span<const QaRecord> records, const GeneratorHandle& tuned,
                            const GeneratorHandle& base, const EmbedderHandle& embedder,
                            const RefineOptions& options) {
    options.validate();
    if (!tuned.generate || !base.generate) {
        throw BackendError("refine generators are not configured");
    }

    RefinementState state;
    state.threshold = options.threshold;

    std::map<std::string, const QaRecord*> by_id;
    for (const auto& record : records) {
        by_id.emplace(record.id, &record);
        state.pending.emplace(record.id, PendingInfo{});
    }
    const std::size_t total = records.size();

    for (std::size_t iteration = 1; iteration <= options.max_iterations; ++iteration) {
        std::map<std::string, double> scores;
        for (auto& [id, info] : state.pending) {
            const QaRecord& record = *by_id.at(id);
            try {
                info.tuned = tuned.generate(record);
                info.base = base.generate(record);
                info.last_score = pair_score(info.tuned, info.base, embedder);
                info.error.clear();
                scores[id] = *info.last_score;
            } catch (const std::exception& e) {
                info.error = e.what();  // pending-with-error, never accepted
            }
        }

        const IdPartition split = partition(scores, options.threshold);
        for (const auto& id : split.accepted) {
            state.accepted.emplace(id, state.pending.at(id).tuned);
            state.pending.erase(id);
        }
        for (auto& [id, info] : state.pending) {
            info.iterations_pending += 1;
        }

        state.iterations = iteration;
        state.history.push_back(IterationStats{state.accepted.size(), state.pending.size()});

        if (state.pending.empty()) break;
        if (total > 0 && static_cast<double>(state.pending.size()) /
                                 static_cast<double>(total) <=
                             options.stop_fraction) {
            break;
        }
        if (split.accepted.empty()) break;  // fixed point, no progress possible
    }
    return state;
}

void write_review_export(const RefinementState& state, std::span<const QaRecord> records,
                         const std::filesystem::path& path) {
    std::map<std::string, const QaRecord*> by_id;
    for (const auto& record : records) by_id.emplace(record.id, &record);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open review export for writing: " + path.string());

    for (const auto& [id, info] : state.pending) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw DataError("pending id \"" + id + "\" is not in the record set");
        }
        const QaRecord& record = *it->second;
        nlohmann::ordered_json j;
        j["id"] = record.id;
        j["image_ref"] = record.image_ref;
        j["question"] = record.question;
        j["question_type"] = std::string(to_string(record.question_type));
        j["reference_reasoning"] = record.reference_reasoning;
        j["reference_answer"] = record.reference_answer;
        if (info.last_score) {
            j["last_score"] = *info.last_score;
        } else {
            j["last_score"] = nullptr;
        }
        j["iterations_pending"] = info.iterations_pending;
        j["tuned_reasoning"] = info.tuned.reasoning;
        j["tuned_answer"] = info.tuned.answer;
        j["base_reasoning"] = info.base.reasoning;
        j["base_answer"] = info.base.answer;
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("I/O error while writing " + path.string());
}

std::vector<ReviewEntry> load_review_export(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open review export: " + path.string());

    std::vector<ReviewEntry> entries;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        try {
            const auto j = nlohmann::json::parse(line);
            ReviewEntry entry;
            entry.record.id = j.at("id").get<std::string>();
            entry.record.image_ref = j.at("image_ref").get<std::string>();
            entry.record.question = j.at("question").get<std::string>();
            entry.record.question_type =
                question_type_from_string(j.at("question_type").get<std::string>());
            entry.record.reference_reasoning = j.at("reference_reasoning").get<std::string>();
            entry.record.reference_answer = j.at("reference_answer").get<std::string>();
            if (!j.at("last_score").is_null()) {
                entry.last_score = j.at("last_score").get<double>();
            }
            entry.iterations_pending = j.at("iterations_pending").get<std::size_t>();
            entry.tuned = GeneratedPair{j.at("tuned_reasoning").get<std::string>(),
                                        j.at("tuned_answer").get<std::string>()};
            entry.base = GeneratedPair{j.at("base_reasoning").get<std::string>(),
                                       j.at("base_answer").get<std::string>()};
            entries.push_back(std::move(entry));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return entries;
}

std::string refinement_state_to_json(const RefinementState& state) {
    nlohmann::ordered_json j;
    j["iterations"] = state.iterations;
    j["threshold"] = state.threshold;
    j["accepted_count"] = state.accepted.size();
    j["pending_count"] = state.pending.size();
    j["history"] = nlohmann::ordered_json::array();
    for (const auto& stats : state.history) {
        j["history"].push_back({{"accepted_count", stats.accepted_count},
                                {"pending_count", stats.pending_count}});
    }
    j["accepted"] = nlohmann::ordered_json::array();
    for (const auto& [id, pair] : state.accepted) {
        j["accepted"].push_back(
            {{"id", id}, {"reasoning", pair.reasoning}, {"answer", pair.answer}});
    }
    j["pending"] = nlohmann::ordered_json::array();
    for (const auto& [id, info] : state.pending) {
        nlohmann::ordered_json p;
        p["id"] = id;
        if (info.last_score) {
            p["last_score"] = *info.last_score;
        } else {
            p["last_score"] = nullptr;
        }
        p["iterations_pending"] = info.iterations_pending;
        if (!info.error.empty()) p["error"] = info.error;
        j["pending"].push_back(std::move(p));
    }
    return j.dump(2);
}

}  // namespace qarl
