#include "qarl/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <semaphore>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

namespace qarl {

namespace {

constexpr std::string_view kGenPlaceholder = "{gen_text}";
constexpr std::string_view kRefPlaceholder = "{ref_text}";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string_view::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

void replace_once(std::string& text, std::string_view placeholder, std::string_view value) {
    const std::size_t pos = text.find(placeholder);
    text.replace(pos, placeholder.size(), value);
}

std::vector<std::string> lowercase_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const std::size_t scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("judge endpoint must include a scheme: " + endpoint);
    }
    const std::size_t path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

}  // namespace

void JudgePrompt::validate() const {
    if (system.empty() || user_template.empty()) {
        throw ConfigError("judge prompt system and user template must be non-empty");
    }
    if (count_occurrences(user_template, kGenPlaceholder) != 1 ||
        count_occurrences(user_template, kRefPlaceholder) != 1) {
        throw ConfigError(
            "judge prompt template must contain {gen_text} and {ref_text} exactly once");
    }
}

std::string JudgePrompt::fill(std::string_view gen, std::string_view ref) const {
    validate();
    std::string filled = user_template;
    // Fill {ref_text} first so placeholder-looking text inside gen is inert.
    replace_once(filled, kRefPlaceholder, ref);
    replace_once(filled, kGenPlaceholder, gen);
    return filled;
}

JudgePrompt reasoning_similarity_prompt() {
    JudgePrompt prompt;
    prompt.kind = PromptKind::Reasoning;
    prompt.system =
        "You are an AI assistant that evaluates the similarity between two reasoning "
        "processes. Your response MUST follow the format 'Similarity score: <score>', "
        "where <score> is a single floating-point number between 0.0 and 1.0 "
        "representing the similarity score.";
    prompt.user_template =
        "Compare these two reasoning passages and return a similarity score 0-1.\n"
        "\n"
        "Generated:\n"
        "{gen_text}\n"
        "\n"
        "Reference:\n"
        "{ref_text}";
    return prompt;
}

JudgePrompt answer_similarity_prompt() {
    JudgePrompt prompt;
    prompt.kind = PromptKind::Answer;
    prompt.system =
        "You are an AI assistant that evaluates the similarity between two answer. "
        "Your response MUST follow the format 'Similarity score: <score>', where "
        "<score> is a single floating-point number between 0.0 and 1.0 representing "
        "the similarity score.";
    prompt.user_template =
        "Compare these two answer texts and return a similarity score 0-1.\n"
        "\n"
        "Generated:\n"
        "{gen_text}\n"
        "\n"
        "Reference:\n"
        "{ref_text}";
    return prompt;
}

void JudgeConfig::validate() const {
    if (endpoint.empty()) throw ConfigError("judge endpoint must be set");
    if (model_name.empty()) throw ConfigError("judge model_name must be set");
    if (temperature < 0.0) throw ConfigError("judge temperature must be >= 0");
    if (parallelism_limit < 1) throw ConfigError("judge parallelism_limit must be >= 1");
    if (backoff_base.count() < 0) throw ConfigError("judge backoff_base must be >= 0");
}

ParsedScore parse_similarity_response(std::string_view reply) {
    static const std::regex pattern(
        R"(similarity\s+score\s*:\s*([+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)))",
        std::regex::icase);
    std::cmatch match;
    if (!std::regex_search(reply.data(), reply.data() + reply.size(), match, pattern)) {
        throw NoScoreFound(std::string(reply));
    }
    const double raw = std::strtod(match[1].str().c_str(), nullptr);
    ParsedScore parsed;
    parsed.value = std::clamp(raw, 0.0, 1.0);
    parsed.clamped = raw < 0.0 || raw > 1.0;
    return parsed;
}

double mock_similarity(std::string_view gen, std::string_view ref) {
    const auto gen_tokens = lowercase_tokens(gen);
    const auto ref_tokens = lowercase_tokens(ref);
    std::unordered_set<std::string> gen_set(gen_tokens.begin(), gen_tokens.end());
    std::unordered_set<std::string> ref_set(ref_tokens.begin(), ref_tokens.end());
    if (gen_set.empty() && ref_set.empty()) return 1.0;

    std::size_t intersection = 0;
    for (const auto& token : gen_set) {
        intersection += ref_set.count(token);
    }
    const std::size_t union_size = gen_set.size() + ref_set.size() - intersection;
    return static_cast<double>(intersection) / static_cast<double>(union_size);
}

// ---------------------------------------------------------------------------
// HTTP transport
// ---------------------------------------------------------------------------

struct HttpChatTransport::Impl {
    JudgeConfig config;
    std::string origin;
    std::string path;
    std::string api_key;
    std::counting_semaphore<> slots;

    Impl(JudgeConfig cfg, std::string origin_in, std::string path_in, std::string key)
        : config(std::move(cfg)),
          origin(std::move(origin_in)),
          path(std::move(path_in)),
          api_key(std::move(key)),
          slots(static_cast<std::ptrdiff_t>(config.parallelism_limit)) {}
};

HttpChatTransport::HttpChatTransport(JudgeConfig config) {
    config.validate();
    if (config.api_key_env.empty()) throw AuthMissing("(unnamed)");
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw AuthMissing(config.api_key_env);

    auto [origin, path] = split_endpoint(config.endpoint);
    impl_ = std::make_unique<Impl>(std::move(config), std::move(origin),
                                   path + "/chat/completions", key);
}

HttpChatTransport::~HttpChatTransport() = default;

std::string HttpChatTransport::complete(const std::string& system_msg,
                                        const std::string& user_msg) {
    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<>& slots;
        ~Release() { slots.release(); }
    } release{impl_->slots};

    nlohmann::json body;
    body["model"] = impl_->config.model_name;
    body["temperature"] = impl_->config.temperature;
    body["messages"] = nlohmann::json::array({
        {{"role", "system"}, {"content", system_msg}},
        {{"role", "user"}, {"content", user_msg}},
    });

    httplib::Client client(impl_->origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(60));
    httplib::Headers headers = {{"Authorization", "Bearer " + impl_->api_key}};

    auto result = client.Post(impl_->path, headers, body.dump(), "application/json");
    if (!result) {
        throw TransportError("judge request failed: " + httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw TransportError("judge request returned HTTP " + std::to_string(result->status));
    }

    try {
        const auto reply = nlohmann::json::parse(result->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed chat completion reply: ") + e.what());
    }
}

AuditingTransport::AuditingTransport(ChatTransport& inner, const std::filesystem::path& audit_path)
    : inner_(inner), path_(audit_path) {
    std::ofstream touch(path_, std::ios::app);
    if (!touch) throw DataError("cannot open audit file: " + path_.string());
}

std::string AuditingTransport::complete(const std::string& system_msg,
                                        const std::string& user_msg) {
    const std::string reply = inner_.complete(system_msg, user_msg);
    nlohmann::json entry;
    entry["system"] = system_msg;
    entry["user"] = user_msg;
    entry["reply"] = reply;
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    out << entry.dump() << '\n';
    return reply;
}

double scored_chat(ChatTransport& transport, const JudgePrompt& prompt,
                   std::string_view gen, std::string_view ref, const RetryPolicy& retry) {
    const std::string user_msg = prompt.fill(gen, ref);
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= retry.max_retries; ++attempt) {
        if (attempt > 0 && retry.backoff_base.count() > 0) {
            std::this_thread::sleep_for(retry.backoff_base * (1LL << (attempt - 1)));
        }
        try {
            const std::string reply = transport.complete(prompt.system, user_msg);
            return parse_similarity_response(reply).value;
        } catch (const TransportError& e) {
            last_error = e.what();
        } catch (const NoScoreFound& e) {
            // Judges occasionally ignore the reply format; a re-ask usually repairs it.
            last_error = std::string(e.what()) + "; reply was: " + e.reply;
        }
    }
    throw ExhaustedRetries(retry.max_retries + 1, last_error);
}

double MockJudge::similarity(const std::string& generated, const std::string& reference,
                             PromptKind) {
    calls_.fetch_add(1);
    return mock_similarity(generated, reference);
}

HttpJudge::HttpJudge(JudgeConfig config)
    : config_(std::move(config)),
      transport_(config_),
      reasoning_prompt_(reasoning_similarity_prompt()),
      answer_prompt_(answer_similarity_prompt()) {}

double HttpJudge::similarity(const std::string& generated, const std::string& reference,
                             PromptKind kind) {
    const JudgePrompt& prompt =
        kind == PromptKind::Reasoning ? reasoning_prompt_ : answer_prompt_;
    return score(generated, reference, prompt);
}

double HttpJudge::score(std::string_view gen, std::string_view ref, const JudgePrompt& prompt) {
    return scored_chat(transport_, prompt, gen, ref,
                       RetryPolicy{config_.max_retries, config_.backoff_base});
}

double judge_score(std::string_view gen, std::string_view ref, const JudgePrompt& prompt,
                   const JudgeConfig& config) {
    HttpJudge judge(config);
    return judge.score(gen, ref, prompt);
}

}  // namespace qarl
