#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qarl/commands.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string seed_text;
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Run config file (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "Output directory (overrides the config)");
    cmd->add_option("--seed", args.seed_text, "RNG seed (overrides the config)");
}

qarl::RunConfig resolve_config(const CommonArgs& args) {
    qarl::RunConfig config = qarl::load_run_config(args.config_path);
    if (!args.out_dir.empty()) config.output_dir = args.out_dir;
    if (!args.seed_text.empty()) {
        try {
            config.seed = std::stoull(args.seed_text);
        } catch (const std::exception&) {
            throw qarl::ConfigError("--seed must be an unsigned integer");
        }
    }
    return config;
}

std::string read_completion_text(const std::string& inline_text, const std::string& input_path) {
    if (!inline_text.empty() && !input_path.empty()) {
        throw qarl::ConfigError("use either --text or --input, not both");
    }
    if (!inline_text.empty()) return inline_text;
    if (input_path.empty()) throw qarl::ConfigError("one of --text or --input is required");
    std::ifstream in(input_path);
    if (!in) throw qarl::DataError("cannot open completion file: " + input_path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GRPO post-training toolkit: structured rewards, judge scoring, "
                 "evaluation and dataset refinement for tagged reasoning/answer tasks"};
    app.require_subcommand(1);

    CommonArgs validate_args;
    CLI::App* validate_cmd = app.add_subcommand("validate", "Check a dataset and print its statistics");
    add_common_options(validate_cmd, validate_args);

    CommonArgs parse_args;
    std::string parse_text, parse_input;
    CLI::App* parse_cmd = app.add_subcommand("parse", "Split a completion into reasoning/answer sections");
    add_common_options(parse_cmd, parse_args);
    parse_cmd->add_option("--text", parse_text, "Completion text");
    parse_cmd->add_option("--input", parse_input, "File containing the completion text");

    CommonArgs score_args;
    std::string score_record_id, score_text, score_input;
    CLI::App* score_cmd = app.add_subcommand("score", "Compute the reward breakdown for one completion");
    add_common_options(score_cmd, score_args);
    score_cmd->add_option("--record-id", score_record_id, "Dataset record to score against")->required();
    score_cmd->add_option("--text", score_text, "Completion text");
    score_cmd->add_option("--input", score_input, "File containing the completion text");

    CommonArgs eval_args;
    std::string eval_candidates;
    bool eval_audit = false;
    std::string eval_format = "both";
    CLI::App* eval_cmd = app.add_subcommand("eval", "Run the benchmark metrics and write reports");
    add_common_options(eval_cmd, eval_args);
    eval_cmd->add_option("--candidates", eval_candidates, "Candidates file (JSONL id/completion)")->required();
    eval_cmd->add_flag("--audit", eval_audit, "Log raw judge replies to an audit file");
    eval_cmd->add_option("--format", eval_format, "Report format: json | md | both")
        ->check(CLI::IsMember({"json", "md", "both"}));

    CommonArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train-toy", "Train the toy policy on the synthetic tag task");
    add_common_options(train_cmd, train_args);

    CommonArgs refine_args;
    CLI::App* refine_cmd = app.add_subcommand("refine", "Run the iterative dataset-refinement loop");
    add_common_options(refine_cmd, refine_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
            e.get_name() == "CallForVersion") {
            return app.exit(e);
        }
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (validate_cmd->parsed()) {
            return qarl::cmd_validate(resolve_config(validate_args), std::cout);
        }
        if (parse_cmd->parsed()) {
            const std::string text = read_completion_text(parse_text, parse_input);
            return qarl::cmd_parse(resolve_config(parse_args), text, std::cout);
        }
        if (score_cmd->parsed()) {
            const std::string text = read_completion_text(score_text, score_input);
            return qarl::cmd_score(resolve_config(score_args), score_record_id, text, std::cout);
        }
        if (eval_cmd->parsed()) {
            return qarl::cmd_eval(resolve_config(eval_args), eval_candidates, eval_audit,
                                  eval_format, std::cout);
        }
        if (train_cmd->parsed()) {
            return qarl::cmd_train_toy(resolve_config(train_args), std::cout);
        }
        if (refine_cmd->parsed()) {
            return qarl::cmd_refine(resolve_config(refine_args), std::cout);
        }
    } catch (const qarl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qarl::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const qarl::BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
