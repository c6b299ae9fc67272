#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "qarl/refine.hpp"
#include "support.hpp"

using namespace qarl;
using test::TempDir;
using test::make_record;

namespace {

std::vector<QaRecord> three_records() {
    return {
        make_record("r1", QuestionType::ObjectIdentification, "a chair stands left", "a chair"),
        make_record("r2", QuestionType::AttributeAnalysis, "the lamp is round", "round"),
        make_record("r3", QuestionType::SpatialReasoning, "the door hides the board", "yes"),
    };
}

GeneratorHandle echo_generator() {
    return {"echo", [](const QaRecord& record) {
                return GeneratedPair{record.reference_reasoning, record.reference_answer};
            }};
}

GeneratorHandle noise_generator() {
    return {"noise", [](const QaRecord& record) {
                return GeneratedPair{"completely unrelated words " + record.id,
                                     "mismatched " + record.id};
            }};
}

// Echoes the reference from the given invocation (1-based) onwards.
GeneratorHandle staged_generator(std::map<std::string, std::size_t> stages) {
    auto attempts = std::make_shared<std::map<std::string, std::size_t>>();
    return {"staged", [attempts, stages = std::move(stages)](const QaRecord& record) {
                const std::size_t attempt = ++(*attempts)[record.id];
                const auto it = stages.find(record.id);
                const std::size_t stage = it == stages.end() ? 1 : it->second;
                if (attempt >= stage) {
                    return GeneratedPair{record.reference_reasoning, record.reference_answer};
                }
                return GeneratedPair{"noise tokens " + record.id, "noise " + record.id};
            }};
}

}  // namespace

TEST_CASE("pair_score fuses the two component similarities") {
    const EmbedderHandle embedder = hashed_bow_embedder(128);
    const GeneratedPair same{"the chair is on the left", "a chair"};
    CHECK(pair_score(same, same, embedder) == doctest::Approx(1.0));

    const GeneratedPair matching_reasoning{"the chair is on the left", "totally different"};
    CHECK(pair_score(same, matching_reasoning, embedder) == doctest::Approx(0.0));

    EmbedderHandle planted;
    planted.name = "planted";
    planted.dimension = 2;
    planted.embed = [](std::string_view text) -> std::vector<double> {
        if (text == "ra") return {1.0, 0.0};
        if (text == "rb") return {0.9, std::sqrt(1.0 - 0.81)};
        if (text == "aa") return {1.0, 0.0};
        return {0.7, std::sqrt(1.0 - 0.49)};  // cosine 0.7 against (1, 0)
    };
    const double fused = pair_score({"ra", "aa"}, {"rb", "ab"}, planted);
    CHECK(fused == doctest::Approx(0.7875).epsilon(1e-9));
}

TEST_CASE("partition is strict at the threshold") {
    const std::map<std::string, double> scores = {{"a", 0.85}, {"b", 0.8}, {"c", 0.1}};
    const IdPartition split = partition(scores, 0.8);
    CHECK(split.accepted == std::vector<std::string>{"a"});
    CHECK(split.pending == std::vector<std::string>{"b", "c"});

    const IdPartition all = partition({{"x", 1.0}, {"y", 1.0}}, 0.8);
    CHECK(all.accepted.size() == 2);
    CHECK(all.pending.empty());

    const IdPartition none = partition({}, 0.8);
    CHECK(none.accepted.empty());
    CHECK(none.pending.empty());
}

TEST_CASE("refine_loop converges immediately when the generators agree") {
    const auto records = three_records();
    const RefinementState state = refine_loop(records, echo_generator(), echo_generator(),
                                              hashed_bow_embedder(128), RefineOptions{});
    CHECK(state.iterations == 1);
    CHECK(state.accepted.size() == 3);
    CHECK(state.pending.empty());
    REQUIRE(state.history.size() == 1);
    CHECK(state.history[0].accepted_count == 3);
    CHECK(state.history[0].pending_count == 0);
    CHECK(state.accepted.at("r1").reasoning == "a chair stands left");
}

TEST_CASE("refine_loop shows strictly decreasing pending counts for staged agreement") {
    const auto records = three_records();
    RefineOptions options;
    options.max_iterations = 10;
    options.stop_fraction = 0.05;
    const RefinementState state =
        refine_loop(records, staged_generator({{"r1", 1}, {"r2", 2}, {"r3", 3}}),
                    echo_generator(), hashed_bow_embedder(128), options);
    CHECK(state.iterations == 3);
    REQUIRE(state.history.size() == 3);
    CHECK(state.history[0].pending_count == 2);
    CHECK(state.history[1].pending_count == 1);
    CHECK(state.history[2].pending_count == 0);
    CHECK(state.accepted.size() == 3);
}

TEST_CASE("refine_loop stops at the fixed point under permanent disagreement") {
    const auto records = three_records();
    RefineOptions options;
    options.max_iterations = 8;
    const RefinementState state = refine_loop(records, noise_generator(), echo_generator(),
                                              hashed_bow_embedder(128), options);
    CHECK(state.iterations == 1);  // nothing accepted, no progress possible
    CHECK(state.accepted.empty());
    CHECK(state.pending.size() == 3);
    for (const auto& [id, info] : state.pending) {
        CHECK(info.last_score.has_value());
        CHECK(*info.last_score <= 0.8);
        CHECK(info.iterations_pending == 1);
    }
}

TEST_CASE("generator failures leave the record pending with its error") {
    const auto records = three_records();
    GeneratorHandle flaky{"flaky", [](const QaRecord& record) -> GeneratedPair {
                              if (record.id == "r2") throw BackendError("model unreachable");
                              return {record.reference_reasoning, record.reference_answer};
                          }};
    RefineOptions options;
    options.max_iterations = 4;
    const RefinementState state =
        refine_loop(records, flaky, echo_generator(), hashed_bow_embedder(128), options);
    CHECK(state.accepted.size() == 2);
    REQUIRE(state.pending.size() == 1);
    const auto& info = state.pending.at("r2");
    CHECK(info.error.find("model unreachable") != std::string::npos);
    CHECK_FALSE(info.last_score.has_value());
}

TEST_CASE("refine_loop honors stop_fraction and max_iterations") {
    std::vector<QaRecord> records;
    for (int i = 0; i < 10; ++i) {
        records.push_back(make_record("rec" + std::to_string(i),
                                      QuestionType::ObjectIdentification,
                                      "reasoning " + std::to_string(i),
                                      "answer " + std::to_string(i)));
    }

    SUBCASE("pending share at or below stop_fraction ends the loop") {
        std::map<std::string, std::size_t> stages;
        for (int i = 0; i < 9; ++i) stages["rec" + std::to_string(i)] = 1;
        stages["rec9"] = 5;
        RefineOptions options;
        options.stop_fraction = 0.1;  // one of ten may stay pending
        options.max_iterations = 10;
        const RefinementState state = refine_loop(records, staged_generator(stages),
                                                  echo_generator(), hashed_bow_embedder(128),
                                                  options);
        CHECK(state.iterations == 1);
        CHECK(state.pending.size() == 1);
    }

    SUBCASE("max_iterations caps a slowly improving run") {
        std::map<std::string, std::size_t> stages;
        for (int i = 0; i < 10; ++i) stages["rec" + std::to_string(i)] = i + 1;
        RefineOptions options;
        options.max_iterations = 3;
        options.stop_fraction = 0.01;
        const RefinementState state = refine_loop(records, staged_generator(stages),
                                                  echo_generator(), hashed_bow_embedder(128),
                                                  options);
        CHECK(state.iterations == 3);
        CHECK(state.accepted.size() == 3);
        CHECK(state.pending.size() == 7);
    }
}

TEST_CASE("manual-review export round-trips the pending set") {
    TempDir dir("refine_export");
    const auto records = three_records();
    RefineOptions options;
    const RefinementState state = refine_loop(records, noise_generator(), echo_generator(),
                                              hashed_bow_embedder(128), options);
    const auto path = dir.file("manual_review.jsonl");
    write_review_export(state, records, path);

    const auto entries = load_review_export(path);
    REQUIRE(entries.size() == state.pending.size());
    for (const auto& entry : entries) {
        CHECK(state.pending.count(entry.record.id) == 1);
        const auto original = std::find_if(records.begin(), records.end(),
                                           [&](const QaRecord& r) { return r.id == entry.record.id; });
        REQUIRE(original != records.end());
        CHECK(entry.record == *original);
        CHECK(entry.iterations_pending == 1);
        CHECK(entry.last_score.has_value());
        CHECK(entry.tuned.reasoning.find("unrelated") != std::string::npos);
        CHECK(entry.base.reasoning == original->reference_reasoning);
    }
}

TEST_CASE("property: pending counts never increase across 100 random scenarios") {
    std::mt19937_64 rng(2024);
    for (int scenario = 0; scenario < 100; ++scenario) {
        const std::size_t n_records = 1 + rng() % 12;
        std::vector<QaRecord> records;
        std::map<std::string, std::size_t> stages;
        for (std::size_t i = 0; i < n_records; ++i) {
            const std::string id = "s" + std::to_string(scenario) + "_" + std::to_string(i);
            records.push_back(make_record(id, QuestionType::SpatialReasoning,
                                          "reasoning about " + id, "answer " + id));
            stages[id] = 1 + rng() % 6;
        }
        RefineOptions options;
        options.max_iterations = 1 + rng() % 8;
        options.stop_fraction = 0.05;

        const RefinementState state = refine_loop(records, staged_generator(stages),
                                                  echo_generator(), hashed_bow_embedder(64),
                                                  options);
        CHECK(state.iterations <= options.max_iterations);
        std::size_t previous = n_records;
        for (const auto& stats : state.history) {
            CHECK(stats.pending_count <= previous);
            previous = stats.pending_count;
            CHECK(stats.accepted_count + stats.pending_count == n_records);
        }
        CHECK(state.accepted.size() + state.pending.size() == n_records);
    }
}
