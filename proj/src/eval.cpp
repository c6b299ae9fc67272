#include "qarl/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <regex>
#include <thread>

#include <json.hpp>

namespace qarl {

namespace {

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

void replace_all(std::string& text, std::string_view placeholder, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
}

// Shared retry-and-parse loop over one chat exchange.
template <typename Parser>
auto retried_chat(ChatTransport& transport, const std::string& system_msg,
                  const std::string& user_msg, const RetryPolicy& retry, Parser parse)
    -> decltype(parse(std::string_view{})) {
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= retry.max_retries; ++attempt) {
        if (attempt > 0 && retry.backoff_base.count() > 0) {
            std::this_thread::sleep_for(retry.backoff_base * (1LL << (attempt - 1)));
        }
        try {
            return parse(std::string_view(transport.complete(system_msg, user_msg)));
        } catch (const TransportError& e) {
            last_error = e.what();
        } catch (const NoScoreFound& e) {
            last_error = std::string(e.what()) + "; reply was: " + e.reply;
        }
    }
    throw ExhaustedRetries(retry.max_retries + 1, last_error);
}

std::string format_score(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.4f", value);
    return buffer;
}

}  // namespace

double f1_fuse(double reasoning_score, double answer_score) {
    if (reasoning_score < 0.0 || reasoning_score > 1.0 || answer_score < 0.0 ||
        answer_score > 1.0) {
        throw DataError("f1_fuse inputs must lie in [0, 1]");
    }
    const double sum = reasoning_score + answer_score;
    if (sum == 0.0) return 0.0;
    return 2.0 * reasoning_score * answer_score / sum;
}

EmbedderHandle hashed_bow_embedder(std::size_t dimension) {
    if (dimension == 0) throw ConfigError("embedder dimension must be >= 1");
    EmbedderHandle handle;
    handle.name = "hashed_bow";
    handle.dimension = dimension;
    handle.embed = [dimension](std::string_view text) {
        std::vector<double> vec(dimension, 0.0);
        std::string token;
        auto flush = [&] {
            if (!token.empty()) {
                vec[fnv1a64(token) % dimension] += 1.0;
                token.clear();
            }
        };
        for (unsigned char c : text) {
            if (std::isspace(c)) {
                flush();
            } else {
                token.push_back(static_cast<char>(std::tolower(c)));
            }
        }
        flush();
        return vec;
    };
    return handle;
}

double embedding_similarity(std::string_view a, std::string_view b,
                            const EmbedderHandle& embedder) {
    if (!embedder.embed) throw ConfigError("embedder has no embed function");
    const std::vector<double> va = embedder.embed(a);
    const std::vector<double> vb = embedder.embed(b);
    if (va.size() != embedder.dimension || vb.size() != embedder.dimension) {
        throw BackendError("embedder returned a vector of the wrong dimension");
    }
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        dot += va[i] * vb[i];
        norm_a += va[i] * va[i];
        norm_b += vb[i] * vb[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        throw DataError("zero-vector embedding, cosine similarity undefined");
    }
    return std::clamp(dot / (std::sqrt(norm_a) * std::sqrt(norm_b)), -1.0, 1.0);
}

QualityPromptTemplate five_level_quality_prompt() {
    QualityPromptTemplate prompt;
    prompt.system =
        "You are a text similarity evaluator. Your task is to compare a candidate's "
        "reasoning and answer with reference versions. Rate each on a scale of "
        "1-5 (1 = completely incorrect, 5 = completely correct).\n"
        "IMPORTANT: Respond ONLY with two lines:\n"
        "REASONING_SCORE: [1/2/3/4/5]\n"
        "ANSWER_SCORE:   [1/2/3/4/5]";
    prompt.user_template =
        "Question: {question}\n"
        "Reference reasoning: {reference_reasoning}\n"
        "Candidate reasoning: {candidate_reasoning}\n"
        "Reference answer:   {reference_answer}\n"
        "Candidate answer:   {candidate_answer}";
    return prompt;
}

QualityPromptTemplate fractional_consistency_prompt() {
    QualityPromptTemplate prompt;
    prompt.system =
        "You are a professional evaluation assistant.\n"
        "Analyze the semantic consistency between reference and candidate answers.\n"
        "Guidelines:\n"
        "1. Score range: 0.0-1.0\n"
        "2. Consider accuracy and context\n"
        "3. Return ONLY the numeric score with 4 decimal places\n"
        "4. No additional text.";
    prompt.user_template = "Reference: {reference}\nCandidate: {candidate}\nScore:";
    return prompt;
}

ScorePair parse_five_level_reply(std::string_view reply) {
    static const std::regex reasoning_pattern(R"(REASONING_SCORE\s*:\s*\[?\s*([1-5])\s*\]?)",
                                              std::regex::icase);
    static const std::regex answer_pattern(R"(ANSWER_SCORE\s*:\s*\[?\s*([1-5])\s*\]?)",
                                           std::regex::icase);
    std::cmatch reasoning_match, answer_match;
    const char* begin = reply.data();
    const char* end = reply.data() + reply.size();
    if (!std::regex_search(begin, end, reasoning_match, reasoning_pattern) ||
        !std::regex_search(begin, end, answer_match, answer_pattern)) {
        throw NoScoreFound(std::string(reply));
    }
    const auto normalize = [](const std::cmatch& match) {
        const int level = match[1].str()[0] - '0';
        return static_cast<double>(level - 1) / 4.0;
    };
    return ScorePair{normalize(reasoning_match), normalize(answer_match)};
}

double parse_fractional_reply(std::string_view reply) {
    static const std::regex pattern(R"(([+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)))");
    std::cmatch match;
    if (!std::regex_search(reply.data(), reply.data() + reply.size(), match, pattern)) {
        throw NoScoreFound(std::string(reply));
    }
    return std::clamp(std::strtod(match[1].str().c_str(), nullptr), 0.0, 1.0);
}

namespace {

ScorePair protocol_score(const QaRecord& record, const StructuredCompletion& candidate,
                         ChatTransport& transport, JudgeProtocol protocol,
                         const RetryPolicy& retry) {
    if (protocol == JudgeProtocol::FiveLevel) {
        const QualityPromptTemplate prompt = five_level_quality_prompt();
        std::string user = prompt.user_template;
        replace_all(user, "{question}", record.question);
        replace_all(user, "{reference_reasoning}", record.reference_reasoning);
        replace_all(user, "{candidate_reasoning}", candidate.reasoning.value_or(""));
        replace_all(user, "{reference_answer}", record.reference_answer);
        replace_all(user, "{candidate_answer}", candidate.answer.value_or(""));
        return retried_chat(transport, prompt.system, user, retry, parse_five_level_reply);
    }

    const QualityPromptTemplate prompt = fractional_consistency_prompt();
    const auto one_component = [&](const std::string& reference, const std::string& generated) {
        std::string user = prompt.user_template;
        replace_all(user, "{reference}", reference);
        replace_all(user, "{candidate}", generated);
        return retried_chat(transport, prompt.system, user, retry, parse_fractional_reply);
    };
    ScorePair pair;
    pair.reasoning = one_component(record.reference_reasoning, candidate.reasoning.value_or(""));
    pair.answer = one_component(record.reference_answer, candidate.answer.value_or(""));
    return pair;
}

}  // namespace

ScoreTriple judge_quality_scores(const QaRecord& record, const StructuredCompletion& candidate,
                                 ChatTransport& transport, JudgeProtocol protocol,
                                 const RetryPolicy& retry) {
    if (!candidate.well_formed) {
        return ScoreTriple{};  // format gate, no judge traffic
    }
    const ScorePair pair = protocol_score(record, candidate, transport, protocol, retry);
    return ScoreTriple{pair.reasoning, pair.answer, f1_fuse(pair.reasoning, pair.answer)};
}

ScorePair JaccardRecordScorer::score(const QaRecord& record,
                                     const StructuredCompletion& candidate) {
    calls_.fetch_add(1);
    return ScorePair{
        mock_similarity(candidate.reasoning.value_or(""), record.reference_reasoning),
        mock_similarity(candidate.answer.value_or(""), record.reference_answer),
    };
}

ScorePair EmbeddingRecordScorer::score(const QaRecord& record,
                                       const StructuredCompletion& candidate) {
    const double reasoning = embedding_similarity(candidate.reasoning.value_or(""),
                                                  record.reference_reasoning, embedder_);
    const double answer = embedding_similarity(candidate.answer.value_or(""),
                                               record.reference_answer, embedder_);
    return ScorePair{std::clamp(reasoning, 0.0, 1.0), std::clamp(answer, 0.0, 1.0)};
}

ScorePair JudgeRecordScorer::score(const QaRecord& record,
                                   const StructuredCompletion& candidate) {
    return protocol_score(record, candidate, transport_, protocol_, retry_);
}

MetricReport run_benchmark(std::span<const QaRecord> records,
                           const std::map<std::string, StructuredCompletion>& candidates,
                           std::span<const MetricConfig> metrics,
                           const std::string& model_name) {
    std::string missing;
    for (const auto& record : records) {
        if (candidates.find(record.id) == candidates.end()) {
            missing += missing.empty() ? record.id : ", " + record.id;
        }
    }
    if (!missing.empty()) {
        throw DataError("missing candidates for record ids: " + missing);
    }

    MetricReport report;
    report.model_name = model_name;
    report.record_count = records.size();

    for (const auto& metric : metrics) {
        MetricSummary summary;
        summary.metric = metric.name;
        summary.total = records.size();
        double reasoning_sum = 0.0;
        double answer_sum = 0.0;

        for (const auto& record : records) {
            const StructuredCompletion& candidate = candidates.at(record.id);
            MetricCell cell;
            cell.record_id = record.id;
            if (!candidate.well_formed) {
                cell.scores = ScorePair{};  // gate: scored zero, no scorer call
            } else {
                try {
                    cell.scores = metric.scorer->score(record, candidate);
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
            }
            if (cell.scores) {
                reasoning_sum += cell.scores->reasoning;
                answer_sum += cell.scores->answer;
                ++summary.scored;
            }
            summary.cells.push_back(std::move(cell));
        }

        if (summary.scored > 0) {
            const double n = static_cast<double>(summary.scored);
            summary.aggregate.reasoning = reasoning_sum / n;
            summary.aggregate.answer = answer_sum / n;
            summary.aggregate.f1 =
                f1_fuse(summary.aggregate.reasoning, summary.aggregate.answer);
        }
        report.metrics.push_back(std::move(summary));
    }
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["model_name"] = report.model_name;
    j["record_count"] = report.record_count;
    j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& summary : report.metrics) {
        nlohmann::ordered_json m;
        m["metric"] = summary.metric;
        m["reasoning"] = summary.aggregate.reasoning;
        m["answer"] = summary.aggregate.answer;
        m["f1"] = summary.aggregate.f1;
        m["scored"] = summary.scored;
        m["total"] = summary.total;
        m["cells"] = nlohmann::ordered_json::array();
        for (const auto& cell : summary.cells) {
            nlohmann::ordered_json c;
            c["id"] = cell.record_id;
            if (cell.scores) {
                c["reasoning"] = cell.scores->reasoning;
                c["answer"] = cell.scores->answer;
            } else {
                c["error"] = cell.error;
            }
            m["cells"].push_back(std::move(c));
        }
        j["metrics"].push_back(std::move(m));
    }
    return j.dump(2);
}

std::string report_to_markdown(const MetricReport& report) {
    std::string out = "# Benchmark report: " + report.model_name + "\n\n";
    out += "Records: " + std::to_string(report.record_count) + "\n\n";
    out += "| Metric | R | A | F1 | Coverage |\n";
    out += "|---|---|---|---|---|\n";
    for (const auto& summary : report.metrics) {
        out += "| " + summary.metric + " | " + format_score(summary.aggregate.reasoning) +
               " | " + format_score(summary.aggregate.answer) + " | " +
               format_score(summary.aggregate.f1) + " | " + std::to_string(summary.scored) +
               "/" + std::to_string(summary.total) + " |\n";
    }
    return out;
}

}  // namespace qarl
