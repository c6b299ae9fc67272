#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qarl/core.hpp"
#include "qarl/eval.hpp"
#include "qarl/grpo.hpp"
#include "qarl/judge.hpp"
#include "qarl/refine.hpp"
#include "qarl/rewards.hpp"

namespace qarl {

/// Scripted generator backends for the refinement loop. Real models sit
/// behind the same GeneratorHandle interface.
struct GeneratorSettings {
    std::string kind = "echo_reference";  // echo_reference | fixed | staged_echo
    std::string fixed_reasoning;
    std::string fixed_answer;
    // staged_echo: per-record iteration (1-based) at which the generator
    // switches from noise to echoing the reference.
    std::map<std::string, std::size_t> stages;
    std::size_t default_stage = 1;
};

struct EvalMetricSetting {
    std::string name;
    std::string kind = "jaccard";  // jaccard | embedding | judge
    JudgeProtocol protocol = JudgeProtocol::Fractional;
};

struct TrainSettings {
    GrpoConfig grpo;
    std::size_t max_response_len = 12;
    std::string reward_mode = "total";  // total | constant
    double initial_bias = 2.5;
    std::filesystem::path init_checkpoint;  // resume the toy policy when set
};

struct RunConfig {
    std::filesystem::path dataset_path;
    TagConfig tags;
    RewardWeights weights;
    TrainSettings train;
    bool judge_is_mock = true;
    JudgeConfig judge;  // used when judge_is_mock is false
    std::string embedder_kind = "hashed_bow";
    std::size_t embedder_dimension = 256;
    std::vector<EvalMetricSetting> eval_metrics;
    RefineOptions refine;
    GeneratorSettings tuned_generator;
    GeneratorSettings base_generator;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    std::string model_name = "candidate";
};

/// Parses and fully validates a run config. All failures throw ConfigError,
/// before any output is produced.
RunConfig load_run_config(const std::filesystem::path& path);

EmbedderHandle make_embedder(const RunConfig& config);
GeneratorHandle make_generator(const GeneratorSettings& settings);

}  // namespace qarl
