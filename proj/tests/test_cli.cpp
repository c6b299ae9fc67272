#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "qarl/core.hpp"
#include "support.hpp"

using namespace qarl;
using test::TempDir;
using test::make_record;
using test::run_cli;

namespace {

std::string small_dataset() {
    return serialize_record(make_record("r1", QuestionType::ObjectIdentification)) + "\n" +
           serialize_record(make_record("r2", QuestionType::AttributeAnalysis,
                                        "the lamp is round and metal", "round")) +
           "\n" +
           serialize_record(make_record("r3", QuestionType::SpatialReasoning,
                                        "the door is left of the board", "left")) +
           "\n";
}

std::string base_config(const TempDir& dir, const std::string& extra = "") {
    return std::string("{\n") +
           "  \"dataset_path\": \"" + (dir.path() / "data.jsonl").string() + "\",\n" +
           "  \"reward_weights\": \"0.1:0.45:0.45\",\n" +
           "  \"judge\": \"mock\",\n" +
           "  \"output_dir\": \"" + (dir.path() / "out").string() + "\",\n" +
           "  \"seed\": 42,\n" +
           "  \"model_name\": \"cli-test\"" + (extra.empty() ? "" : ",\n" + extra) + "\n}\n";
}

std::string quoted(const std::filesystem::path& path) { return "\"" + path.string() + "\""; }

}  // namespace

TEST_CASE("cli validate prints stats for a valid dataset") {
    TempDir dir("cli_validate");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir));

    const auto result = run_cli("validate --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("records: 3") != std::string::npos);
    CHECK(result.output.find("object_identification: 1 (33.33%)") != std::string::npos);
}

TEST_CASE("cli validate reproduces the corpus split percentages") {
    TempDir dir("cli_split");
    std::string data;
    std::size_t next = 0;
    const std::array<std::pair<QuestionType, std::size_t>, 3> split = {{
        {QuestionType::ObjectIdentification, 1510},
        {QuestionType::AttributeAnalysis, 1255},
        {QuestionType::SpatialReasoning, 2087},
    }};
    for (const auto& [type, count] : split) {
        for (std::size_t i = 0; i < count; ++i) {
            data += serialize_record(make_record("q" + std::to_string(next++), type)) + "\n";
        }
    }
    test::write_file(dir.file("data.jsonl"), data);
    test::write_file(dir.file("config.json"), base_config(dir));

    const auto result = run_cli("validate --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("object_identification: 1510 (31.12%)") != std::string::npos);
    CHECK(result.output.find("attribute_analysis: 1255 (25.87%)") != std::string::npos);
    CHECK(result.output.find("spatial_reasoning: 2087 (43.01%)") != std::string::npos);
}

TEST_CASE("cli validate exits 3 on a duplicate id and names it") {
    TempDir dir("cli_dup");
    const std::string line = serialize_record(make_record("dup", QuestionType::SpatialReasoning));
    test::write_file(dir.file("data.jsonl"), line + "\n" + line + "\n");
    test::write_file(dir.file("config.json"), base_config(dir));

    const auto result = run_cli("validate --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 3);
    CHECK(result.output.find("dup") != std::string::npos);
}

TEST_CASE("cli exits 2 on config errors without creating artifacts") {
    TempDir dir("cli_cfg");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), "{ not json");

    const auto result = run_cli("train-toy --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 2);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "out"));

    test::write_file(dir.file("config2.json"), base_config(dir, "  \"reward_weights\": \"0.9:0.9:0.9\""));
    const auto bad_weights = run_cli("train-toy --config " + quoted(dir.file("config2.json")));
    CHECK(bad_weights.exit_code == 2);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "out"));

    const auto missing = run_cli("validate --config " + quoted(dir.file("nope.json")));
    CHECK(missing.exit_code == 2);
}

TEST_CASE("cli parse splits a completion") {
    TempDir dir("cli_parse");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir));

    const auto result = run_cli("parse --config " + quoted(dir.file("config.json")) +
                                " --text \"<think>why</think><answer>what</answer>\"");
    CHECK(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.output);
    CHECK(j.at("well_formed") == true);
    CHECK(j.at("reasoning") == "why");
    CHECK(j.at("answer") == "what");
}

TEST_CASE("cli score rewards an echo completion with 1.0 under the mock judge") {
    TempDir dir("cli_score");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir));
    test::write_file(dir.file("completion.txt"),
                     "<think>the lamp is round and metal</think><answer>round</answer>");

    const auto result = run_cli("score --config " + quoted(dir.file("config.json")) +
                                " --record-id r2 --input " + quoted(dir.file("completion.txt")));
    CHECK(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.output);
    CHECK(j.at("total").get<double>() == doctest::Approx(1.0));

    const auto unknown = run_cli("score --config " + quoted(dir.file("config.json")) +
                                 " --record-id missing --text \"x\"");
    CHECK(unknown.exit_code == 3);
}

TEST_CASE("cli eval writes deterministic reports for echo candidates") {
    TempDir dir("cli_eval");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir,
        "  \"eval_metrics\": [{\"name\": \"jaccard\", \"kind\": \"jaccard\"},"
        " {\"name\": \"embedding\", \"kind\": \"embedding\"}]"));

    std::string candidates;
    for (const auto& record : load_dataset(dir.file("data.jsonl"))) {
        nlohmann::ordered_json c;
        c["id"] = record.id;
        c["completion"] = "<think>" + record.reference_reasoning + "</think><answer>" +
                          record.reference_answer + "</answer>";
        candidates += c.dump() + "\n";
    }
    test::write_file(dir.file("candidates.jsonl"), candidates);

    const std::string command = "eval --config " + quoted(dir.file("config.json")) +
                                " --candidates " + quoted(dir.file("candidates.jsonl"));
    const auto result = run_cli(command);
    CHECK(result.exit_code == 0);

    const auto report = nlohmann::json::parse(test::read_file(dir.path() / "out" / "report.json"));
    for (const auto& metric : report.at("metrics")) {
        CHECK(metric.at("f1").get<double>() == doctest::Approx(1.0));
        CHECK(metric.at("scored") == 3);
    }
    CHECK(std::filesystem::exists(dir.path() / "out" / "report.md"));

    const std::string first_json = test::read_file(dir.path() / "out" / "report.json");
    const auto rerun = run_cli(command);
    CHECK(rerun.exit_code == 0);
    CHECK(test::read_file(dir.path() / "out" / "report.json") == first_json);
}

TEST_CASE("cli eval exits 3 when candidates are missing") {
    TempDir dir("cli_eval_missing");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir,
        "  \"eval_metrics\": [{\"name\": \"jaccard\", \"kind\": \"jaccard\"}]"));
    test::write_file(dir.file("candidates.jsonl"),
                     "{\"id\":\"r1\",\"completion\":\"<think>a</think><answer>b</answer>\"}\n");

    const auto result = run_cli("eval --config " + quoted(dir.file("config.json")) +
                                " --candidates " + quoted(dir.file("candidates.jsonl")));
    CHECK(result.exit_code == 3);
    CHECK(result.output.find("r2") != std::string::npos);
    CHECK(result.output.find("r3") != std::string::npos);
}

TEST_CASE("cli train-toy with zero steps writes an empty metrics log") {
    TempDir dir("cli_train0");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir, "  \"train\": {\"steps\": 0}"));

    const auto result = run_cli("train-toy --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 0);
    CHECK(test::read_file(dir.path() / "out" / "train_metrics.jsonl").empty());
    CHECK(std::filesystem::exists(dir.path() / "out" / "policy.json"));
}

TEST_CASE("cli train-toy degenerate constant reward leaves the policy unchanged") {
    TempDir dir("cli_train_const");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"),
                     base_config(dir, "  \"train\": {\"steps\": 5, \"reward_mode\": \"constant\"}"));

    const auto result = run_cli("train-toy --config " + quoted(dir.file("config.json")));
    CHECK(result.exit_code == 0);
    std::istringstream lines(test::read_file(dir.path() / "out" / "train_metrics.jsonl"));
    std::string line;
    std::size_t n_lines = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("loss").get<double>() == 0.0);
        CHECK(j.at("mean_total_reward").get<double>() == 1.0);
        CHECK(j.at("kl").get<double>() == 0.0);
        ++n_lines;
    }
    CHECK(n_lines == 5);

    // The saved checkpoint equals the task's initial policy: biased chain logits only.
    const auto policy = nlohmann::json::parse(test::read_file(dir.path() / "out" / "policy.json"));
    const auto logits = policy.at("logits").get<std::vector<double>>();
    std::size_t biased = 0;
    for (double logit : logits) {
        if (logit != 0.0) {
            CHECK(logit == 2.5);
            ++biased;
        }
    }
    CHECK(biased == 8);
}

TEST_CASE("cli train-toy is deterministic given the seed") {
    TempDir dir("cli_train_det");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir, "  \"train\": {\"steps\": 3}"));

    const std::string command = "train-toy --config " + quoted(dir.file("config.json"));
    CHECK(run_cli(command).exit_code == 0);
    const std::string first = test::read_file(dir.path() / "out" / "train_metrics.jsonl");
    CHECK(run_cli(command).exit_code == 0);
    CHECK(test::read_file(dir.path() / "out" / "train_metrics.jsonl") == first);
    CHECK_FALSE(first.empty());
}

TEST_CASE("cli train-toy resumes from a checkpoint") {
    TempDir dir("cli_resume");
    test::write_file(dir.file("data.jsonl"), small_dataset());
    test::write_file(dir.file("config.json"), base_config(dir,
        "  \"train\": {\"steps\": 60, \"group_size\": 16, \"learning_rate\": 100.0,"
        " \"kl_beta\": 0.0}"));
    CHECK(run_cli("train-toy --config " + quoted(dir.file("config.json"))).exit_code == 0);

    // Resume from the trained checkpoint: the policy should already be
    // compliant, so the very first logged step scores high.
    const auto checkpoint = dir.path() / "out" / "policy.json";
    test::write_file(dir.file("resume.json"), base_config(dir,
        "  \"train\": {\"steps\": 2, \"group_size\": 16, \"learning_rate\": 100.0,"
        " \"kl_beta\": 0.0, \"init_checkpoint\": \"" + checkpoint.string() + "\"}"));
    const auto resumed = run_cli("train-toy --config " + quoted(dir.file("resume.json")) +
                                 " --out " + quoted(dir.path() / "out2"));
    CHECK(resumed.exit_code == 0);

    std::istringstream lines(test::read_file(dir.path() / "out2" / "train_metrics.jsonl"));
    std::string first_line;
    REQUIRE(std::getline(lines, first_line));
    const auto j = nlohmann::json::parse(first_line);
    CHECK(j.at("mean_format_reward").get<double>() >= 0.9);

    test::write_file(dir.file("bad_resume.json"), base_config(dir,
        "  \"train\": {\"steps\": 1, \"init_checkpoint\": \"" +
            dir.file("missing_ckpt.json").string() + "\"}"));
    CHECK(run_cli("train-toy --config " + quoted(dir.file("bad_resume.json"))).exit_code == 2);
}

TEST_CASE("cli refine converges and exports pending records") {
    TempDir dir("cli_refine");
    test::write_file(dir.file("data.jsonl"), small_dataset());

    SUBCASE("agreeing generators empty the pending set") {
        test::write_file(dir.file("config.json"), base_config(dir,
            "  \"refine\": {\"threshold\": 0.8, \"max_iterations\": 5,"
            " \"tuned_generator\": {\"kind\": \"echo_reference\"},"
            " \"base_generator\": {\"kind\": \"echo_reference\"}}"));
        const auto result = run_cli("refine --config " + quoted(dir.file("config.json")));
        CHECK(result.exit_code == 0);
        CHECK(result.output.find("pending: 0") != std::string::npos);
        CHECK(test::read_file(dir.path() / "out" / "manual_review.jsonl").empty());
    }

    SUBCASE("permanent disagreement exports everything for review") {
        test::write_file(dir.file("config.json"), base_config(dir,
            "  \"refine\": {\"threshold\": 0.8, \"max_iterations\": 5,"
            " \"tuned_generator\": {\"kind\": \"fixed\", \"reasoning\": \"static words\","
            " \"answer\": \"static answer\"},"
            " \"base_generator\": {\"kind\": \"echo_reference\"}}"));
        const auto result = run_cli("refine --config " + quoted(dir.file("config.json")));
        CHECK(result.exit_code == 0);
        CHECK(result.output.find("iterations: 1") != std::string::npos);
        CHECK(result.output.find("pending: 3") != std::string::npos);

        std::istringstream lines(test::read_file(dir.path() / "out" / "manual_review.jsonl"));
        std::string line;
        std::size_t exported = 0;
        while (std::getline(lines, line)) ++exported;
        CHECK(exported == 3);

        const auto history =
            nlohmann::json::parse(test::read_file(dir.path() / "out" / "refine_history.json"));
        CHECK(history.at("history").size() == 1);
        CHECK(history.at("history")[0].at("pending_count") == 3);
    }
}
