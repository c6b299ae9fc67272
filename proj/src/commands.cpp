#include "qarl/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>

#include <json.hpp>

#include "qarl/train.hpp"

namespace qarl {

namespace {

std::string percent_string(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.2f", value);
    return buffer;
}

std::vector<QaRecord> load_required_dataset(const RunConfig& config) {
    if (config.dataset_path.empty()) {
        throw ConfigError("this command requires \"dataset_path\" in the config");
    }
    return load_dataset(config.dataset_path);
}

std::unique_ptr<SimilarityJudge> make_similarity_judge(const RunConfig& config) {
    if (config.judge_is_mock) return std::make_unique<MockJudge>();
    return std::make_unique<HttpJudge>(config.judge);
}

nlohmann::ordered_json completion_to_json(const StructuredCompletion& completion) {
    nlohmann::ordered_json j;
    if (completion.reasoning) {
        j["reasoning"] = *completion.reasoning;
    } else {
        j["reasoning"] = nullptr;
    }
    if (completion.answer) {
        j["answer"] = *completion.answer;
    } else {
        j["answer"] = nullptr;
    }
    j["well_formed"] = completion.well_formed;
    return j;
}

}  // namespace

std::map<std::string, std::string> load_candidates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open candidates file: " + path.string());
    std::map<std::string, std::string> candidates;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        try {
            const auto j = nlohmann::json::parse(line);
            const std::string id = j.at("id").get<std::string>();
            if (!candidates.emplace(id, j.at("completion").get<std::string>()).second) {
                throw DataError("duplicate candidate id \"" + id + "\"");
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return candidates;
}

int cmd_validate(const RunConfig& config, std::ostream& out) {
    const std::vector<QaRecord> records = load_required_dataset(config);
    const DatasetStats stats = validate_dataset(records);
    out << "records: " << stats.total << '\n';
    for (std::size_t i = 0; i < kQuestionTypeCount; ++i) {
        const auto& type_stats = stats.per_type[i];
        out << to_string(static_cast<QuestionType>(i)) << ": " << type_stats.count << " ("
            << percent_string(type_stats.percentage) << "%)\n";
    }
    return 0;
}

int cmd_parse(const RunConfig& config, const std::string& raw_text, std::ostream& out) {
    const StructuredCompletion completion = parse_completion(raw_text, config.tags);
    out << completion_to_json(completion).dump(2) << '\n';
    return 0;
}

int cmd_score(const RunConfig& config, const std::string& record_id,
              const std::string& raw_text, std::ostream& out) {
    const std::vector<QaRecord> records = load_required_dataset(config);
    const QaRecord* record = nullptr;
    for (const auto& candidate : records) {
        if (candidate.id == record_id) {
            record = &candidate;
            break;
        }
    }
    if (record == nullptr) throw DataError("no record with id \"" + record_id + "\"");

    const StructuredCompletion completion = parse_completion(raw_text, config.tags);
    auto judge = make_similarity_judge(config);
    const RewardBreakdown breakdown = total_reward(completion, *record, config.weights, *judge);

    nlohmann::ordered_json j;
    j["record_id"] = record->id;
    j["well_formed"] = completion.well_formed;
    j["format"] = breakdown.format;
    j["reasoning"] = breakdown.reasoning;
    j["answer"] = breakdown.answer;
    j["total"] = breakdown.total;
    out << j.dump(2) << '\n';
    return 0;
}

int cmd_eval(const RunConfig& config, const std::filesystem::path& candidates_path,
             bool audit, const std::string& format, std::ostream& out) {
    if (config.eval_metrics.empty()) {
        throw ConfigError("cmd eval requires a non-empty \"eval_metrics\" list");
    }
    const std::vector<QaRecord> records = load_required_dataset(config);
    const std::map<std::string, std::string> raw_candidates = load_candidates(candidates_path);

    std::map<std::string, StructuredCompletion> candidates;
    for (const auto& [id, raw] : raw_candidates) {
        candidates.emplace(id, parse_completion(raw, config.tags));
    }

    const EmbedderHandle embedder = make_embedder(config);
    std::unique_ptr<HttpChatTransport> http_transport;
    std::unique_ptr<AuditingTransport> audit_transport;
    const bool needs_judge =
        std::any_of(config.eval_metrics.begin(), config.eval_metrics.end(),
                    [](const EvalMetricSetting& m) { return m.kind == "judge"; });

    std::filesystem::create_directories(config.output_dir);
    ChatTransport* transport = nullptr;
    if (needs_judge) {
        http_transport = std::make_unique<HttpChatTransport>(config.judge);
        transport = http_transport.get();
        if (audit) {
            audit_transport = std::make_unique<AuditingTransport>(
                *http_transport, config.output_dir / "audit.jsonl");
            transport = audit_transport.get();
        }
    }

    std::vector<MetricConfig> metrics;
    for (const auto& setting : config.eval_metrics) {
        MetricConfig metric;
        metric.name = setting.name;
        if (setting.kind == "jaccard") {
            metric.scorer = std::make_shared<JaccardRecordScorer>();
        } else if (setting.kind == "embedding") {
            metric.scorer = std::make_shared<EmbeddingRecordScorer>(embedder);
        } else {
            metric.scorer = std::make_shared<JudgeRecordScorer>(
                *transport, setting.protocol,
                RetryPolicy{config.judge.max_retries, config.judge.backoff_base});
        }
        metrics.push_back(std::move(metric));
    }

    const MetricReport report = run_benchmark(records, candidates, metrics, config.model_name);

    if (format == "json" || format == "both") {
        std::ofstream json_out(config.output_dir / "report.json", std::ios::trunc);
        json_out << report_to_json(report) << '\n';
    }
    if (format == "md" || format == "both") {
        std::ofstream md_out(config.output_dir / "report.md", std::ios::trunc);
        md_out << report_to_markdown(report);
    }

    for (const auto& summary : report.metrics) {
        out << summary.metric << ": R=" << summary.aggregate.reasoning
            << " A=" << summary.aggregate.answer << " F1=" << summary.aggregate.f1 << " ("
            << summary.scored << "/" << summary.total << " scored)\n";
    }
    return 0;
}

int cmd_train_toy(const RunConfig& config, std::ostream& out) {
    FormatTask task = make_format_task(config.tags, config.train.initial_bias);
    if (!config.train.init_checkpoint.empty()) {
        TinyPolicy resumed = TinyPolicy::load(config.train.init_checkpoint);
        if (resumed.vocab_size() != task.policy.vocab_size() ||
            resumed.context_order() != task.policy.context_order()) {
            throw DataError("init_checkpoint does not match the format task's policy shape");
        }
        task.policy = std::move(resumed);
    }
    auto judge = make_similarity_judge(config);

    SampleRewardFn reward;
    if (config.train.reward_mode == "constant") {
        reward = [](const std::string&) { return RewardOutcome{1.0, 1.0, 1.0, 1.0}; };
    } else {
        reward = [&task, &config, &judge](const std::string& text) {
            const StructuredCompletion completion = parse_completion(text, task.tags);
            const RewardBreakdown breakdown =
                total_reward(completion, task.reference, config.weights, *judge);
            return RewardOutcome{breakdown.total, breakdown.format, breakdown.reasoning,
                                 breakdown.answer};
        };
    }

    std::filesystem::create_directories(config.output_dir);
    const std::filesystem::path metrics_path = config.output_dir / "train_metrics.jsonl";
    std::ofstream metrics_out(metrics_path, std::ios::trunc);
    if (!metrics_out) throw DataError("cannot open metrics log: " + metrics_path.string());

    GrpoTrainer trainer(task.policy, config.train.grpo, config.seed);
    const DecodeFn decode = [&task](std::span<const int> tokens) { return task.decode(tokens); };

    std::size_t completed = 0;
    try {
        for (std::size_t step = 0; step < config.train.grpo.steps; ++step) {
            const StepMetrics metrics =
                trainer.step(task.prompts, config.train.max_response_len, reward, decode);
            metrics_out << step_metrics_to_json_line(metrics) << '\n';
            metrics_out.flush();
            completed = step + 1;
        }
    } catch (const BackendError& e) {
        throw BackendError(std::string(e.what()) + " (last completed step: " +
                           std::to_string(completed) + ")");
    }

    trainer.policy().save(config.output_dir / "policy.json");
    out << "steps: " << completed << '\n';
    out << "metrics: " << metrics_path.string() << '\n';
    return 0;
}

int cmd_refine(const RunConfig& config, std::ostream& out) {
    const std::vector<QaRecord> records = load_required_dataset(config);
    const EmbedderHandle embedder = make_embedder(config);
    const GeneratorHandle tuned = make_generator(config.tuned_generator);
    const GeneratorHandle base = make_generator(config.base_generator);

    std::filesystem::create_directories(config.output_dir);
    const RefinementState state = refine_loop(records, tuned, base, embedder, config.refine);

    std::ofstream history_out(config.output_dir / "refine_history.json", std::ios::trunc);
    history_out << refinement_state_to_json(state) << '\n';
    write_review_export(state, records, config.output_dir / "manual_review.jsonl");

    out << "iterations: " << state.iterations << '\n';
    out << "accepted: " << state.accepted.size() << '\n';
    out << "pending: " << state.pending.size() << '\n';
    return 0;
}

}  // namespace qarl
