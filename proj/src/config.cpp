#include "qarl/config.hpp"

#include <fstream>
#include <memory>

#include <json.hpp>

namespace qarl {

namespace {

using nlohmann::json;

RewardWeights parse_weights_field(const json& value) {
    if (value.is_string()) {
        return RewardWeights::parse(value.get<std::string>());
    }
    if (value.is_object()) {
        RewardWeights weights;
        weights.format = value.at("format").get<double>();
        weights.reasoning = value.at("reasoning").get<double>();
        weights.answer = value.at("answer").get<double>();
        weights.validate();
        return weights;
    }
    throw ConfigError("reward_weights must be a \"F:R:A\" string or an object");
}

TagConfig parse_tags(const json& value) {
    TagConfig tags;
    if (value.contains("reasoning_open")) tags.reasoning_open = value.at("reasoning_open");
    if (value.contains("reasoning_close")) tags.reasoning_close = value.at("reasoning_close");
    if (value.contains("answer_open")) tags.answer_open = value.at("answer_open");
    if (value.contains("answer_close")) tags.answer_close = value.at("answer_close");
    tags.validate();
    return tags;
}

TrainSettings parse_train(const json& value) {
    TrainSettings train;
    auto& g = train.grpo;
    if (value.contains("group_size")) g.group_size = value.at("group_size").get<std::size_t>();
    if (value.contains("clip_epsilon")) g.clip_epsilon = value.at("clip_epsilon").get<double>();
    if (value.contains("kl_beta")) g.kl_beta = value.at("kl_beta").get<double>();
    if (value.contains("std_epsilon")) g.std_epsilon = value.at("std_epsilon").get<double>();
    if (value.contains("learning_rate")) g.learning_rate = value.at("learning_rate").get<double>();
    if (value.contains("steps")) g.steps = value.at("steps").get<std::size_t>();
    if (value.contains("kl_mode")) {
        const std::string mode = value.at("kl_mode").get<std::string>();
        if (mode == "exact") {
            g.kl_mode = KlMode::Exact;
        } else if (mode == "k3") {
            g.kl_mode = KlMode::K3Estimator;
        } else {
            throw ConfigError("kl_mode must be \"exact\" or \"k3\", got \"" + mode + "\"");
        }
    }
    g.validate();
    if (value.contains("max_response_len")) {
        train.max_response_len = value.at("max_response_len").get<std::size_t>();
        if (train.max_response_len == 0) throw ConfigError("max_response_len must be >= 1");
    }
    if (value.contains("reward_mode")) {
        train.reward_mode = value.at("reward_mode").get<std::string>();
        if (train.reward_mode != "total" && train.reward_mode != "constant") {
            throw ConfigError("reward_mode must be \"total\" or \"constant\"");
        }
    }
    if (value.contains("initial_bias")) train.initial_bias = value.at("initial_bias").get<double>();
    if (value.contains("init_checkpoint")) {
        train.init_checkpoint = value.at("init_checkpoint").get<std::string>();
    }
    return train;
}

JudgeConfig parse_judge(const json& value) {
    JudgeConfig judge;
    judge.endpoint = value.at("endpoint").get<std::string>();
    judge.model_name = value.at("model_name").get<std::string>();
    if (value.contains("temperature")) judge.temperature = value.at("temperature").get<double>();
    if (value.contains("max_retries")) judge.max_retries = value.at("max_retries").get<std::size_t>();
    if (value.contains("backoff_base_ms")) {
        judge.backoff_base = std::chrono::milliseconds(value.at("backoff_base_ms").get<long>());
    }
    if (value.contains("parallelism_limit")) {
        judge.parallelism_limit = value.at("parallelism_limit").get<std::size_t>();
    }
    if (value.contains("api_key_env")) judge.api_key_env = value.at("api_key_env").get<std::string>();
    judge.validate();
    return judge;
}

GeneratorSettings parse_generator(const json& value) {
    GeneratorSettings settings;
    settings.kind = value.at("kind").get<std::string>();
    if (settings.kind != "echo_reference" && settings.kind != "fixed" &&
        settings.kind != "staged_echo") {
        throw ConfigError("unknown generator kind \"" + settings.kind + "\"");
    }
    if (value.contains("reasoning")) settings.fixed_reasoning = value.at("reasoning");
    if (value.contains("answer")) settings.fixed_answer = value.at("answer");
    if (value.contains("default_stage")) {
        settings.default_stage = value.at("default_stage").get<std::size_t>();
    }
    if (value.contains("stages")) {
        for (const auto& [id, stage] : value.at("stages").items()) {
            settings.stages[id] = stage.get<std::size_t>();
        }
    }
    if (settings.kind == "fixed" &&
        (settings.fixed_reasoning.empty() || settings.fixed_answer.empty())) {
        throw ConfigError("fixed generator requires \"reasoning\" and \"answer\" strings");
    }
    return settings;
}

JudgeProtocol parse_protocol(const std::string& text) {
    if (text == "five_level") return JudgeProtocol::FiveLevel;
    if (text == "fractional") return JudgeProtocol::Fractional;
    throw ConfigError("metric protocol must be \"five_level\" or \"fractional\"");
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid config JSON in " + path.string() + ": " + e.what());
    }

    RunConfig config;
    try {
        if (j.contains("dataset_path")) {
            config.dataset_path = j.at("dataset_path").get<std::string>();
        }
        if (j.contains("tags")) config.tags = parse_tags(j.at("tags"));
        config.tags.validate();
        if (j.contains("reward_weights")) config.weights = parse_weights_field(j.at("reward_weights"));
        config.weights.validate();
        if (j.contains("train")) config.train = parse_train(j.at("train"));

        if (j.contains("judge")) {
            const auto& judge = j.at("judge");
            if (judge.is_string()) {
                if (judge.get<std::string>() != "mock") {
                    throw ConfigError("judge must be \"mock\" or a config object");
                }
                config.judge_is_mock = true;
            } else if (judge.is_object()) {
                config.judge_is_mock = false;
                config.judge = parse_judge(judge);
            } else {
                throw ConfigError("judge must be \"mock\" or a config object");
            }
        }

        if (j.contains("embedder")) {
            const auto& embedder = j.at("embedder");
            config.embedder_kind = embedder.at("kind").get<std::string>();
            if (config.embedder_kind != "hashed_bow") {
                throw ConfigError("unknown embedder kind \"" + config.embedder_kind + "\"");
            }
            if (embedder.contains("dimension")) {
                config.embedder_dimension = embedder.at("dimension").get<std::size_t>();
                if (config.embedder_dimension == 0) {
                    throw ConfigError("embedder dimension must be >= 1");
                }
            }
        }

        if (j.contains("eval_metrics")) {
            for (const auto& metric : j.at("eval_metrics")) {
                EvalMetricSetting setting;
                setting.name = metric.at("name").get<std::string>();
                setting.kind = metric.at("kind").get<std::string>();
                if (setting.kind != "jaccard" && setting.kind != "embedding" &&
                    setting.kind != "judge") {
                    throw ConfigError("unknown metric kind \"" + setting.kind + "\"");
                }
                if (metric.contains("protocol")) {
                    setting.protocol = parse_protocol(metric.at("protocol").get<std::string>());
                }
                if (setting.kind == "judge" && config.judge_is_mock) {
                    throw ConfigError("metric \"" + setting.name +
                                      "\" needs an HTTP judge backend, but judge is \"mock\"");
                }
                config.eval_metrics.push_back(std::move(setting));
            }
        }

        if (j.contains("refine")) {
            const auto& refine = j.at("refine");
            if (refine.contains("threshold")) {
                config.refine.threshold = refine.at("threshold").get<double>();
            }
            if (refine.contains("max_iterations")) {
                config.refine.max_iterations = refine.at("max_iterations").get<std::size_t>();
            }
            if (refine.contains("stop_fraction")) {
                config.refine.stop_fraction = refine.at("stop_fraction").get<double>();
            }
            config.refine.validate();
            if (refine.contains("tuned_generator")) {
                config.tuned_generator = parse_generator(refine.at("tuned_generator"));
            }
            if (refine.contains("base_generator")) {
                config.base_generator = parse_generator(refine.at("base_generator"));
            }
        }

        if (j.contains("output_dir")) config.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("model_name")) config.model_name = j.at("model_name").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError("invalid config in " + path.string() + ": " + e.what());
    }

    if (!config.dataset_path.empty() && !std::filesystem::exists(config.dataset_path)) {
        throw ConfigError("dataset_path does not exist: " + config.dataset_path.string());
    }
    if (!config.train.init_checkpoint.empty() &&
        !std::filesystem::exists(config.train.init_checkpoint)) {
        throw ConfigError("init_checkpoint does not exist: " +
                          config.train.init_checkpoint.string());
    }
    return config;
}

EmbedderHandle make_embedder(const RunConfig& config) {
    return hashed_bow_embedder(config.embedder_dimension);
}

GeneratorHandle make_generator(const GeneratorSettings& settings) {
    GeneratorHandle handle;
    handle.name = settings.kind;
    if (settings.kind == "echo_reference") {
        handle.generate = [](const QaRecord& record) {
            return GeneratedPair{record.reference_reasoning, record.reference_answer};
        };
    } else if (settings.kind == "fixed") {
        handle.generate = [reasoning = settings.fixed_reasoning,
                           answer = settings.fixed_answer](const QaRecord&) {
            return GeneratedPair{reasoning, answer};
        };
    } else if (settings.kind == "staged_echo") {
        // Deterministic stand-in for a model that improves between
        // iterations: echoes the reference once a record has been generated
        // stage times, emits record-salted noise before that.
        auto attempts = std::make_shared<std::map<std::string, std::size_t>>();
        handle.generate = [attempts, stages = settings.stages,
                           default_stage = settings.default_stage](const QaRecord& record) {
            const std::size_t attempt = ++(*attempts)[record.id];
            auto it = stages.find(record.id);
            const std::size_t stage = it == stages.end() ? default_stage : it->second;
            if (attempt >= stage) {
                return GeneratedPair{record.reference_reasoning, record.reference_answer};
            }
            return GeneratedPair{"noise reasoning " + record.id,
                                 "noise answer " + record.id};
        };
    } else {
        throw ConfigError("unknown generator kind \"" + settings.kind + "\"");
    }
    return handle;
}

}  // namespace qarl
