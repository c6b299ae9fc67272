#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "qarl/errors.hpp"

namespace qarl {

enum class PromptKind { Reasoning, Answer };

/// A system prompt plus a user template with {gen_text} and {ref_text}
/// placeholders, each of which must appear exactly once.
struct JudgePrompt {
    std::string system;
    std::string user_template;
    PromptKind kind = PromptKind::Reasoning;

    void validate() const;
    std::string fill(std::string_view gen, std::string_view ref) const;
};

// Built-in similarity prompts. The judge is asked to reply in the fixed
// wire format "Similarity score: <score>" with a score in [0, 1].
JudgePrompt reasoning_similarity_prompt();
JudgePrompt answer_similarity_prompt();

struct JudgeConfig {
    std::string endpoint;    // e.g. "http://127.0.0.1:8080" or ".../v1"
    std::string model_name;
    double temperature = 0.0;
    std::size_t max_retries = 3;
    std::chrono::milliseconds backoff_base{250};
    std::size_t parallelism_limit = 4;
    std::string api_key_env = "JUDGE_API_KEY";

    void validate() const;
};

struct ParsedScore {
    double value = 0.0;
    bool clamped = false;  // reply carried a score outside [0, 1]
};

/// Extracts the first "Similarity score: <number>" occurrence
/// (case-insensitive label, whitespace-tolerant) and clamps it to [0, 1].
/// Throws NoScoreFound when the pattern is absent.
ParsedScore parse_similarity_response(std::string_view reply);

/// Deterministic test stand-in: token-set Jaccard similarity over
/// whitespace-split, lowercased tokens. Two empty texts score 1.0.
double mock_similarity(std::string_view gen, std::string_view ref);

/// One chat completion round-trip. Implementations throw TransportError on
/// delivery failure; retrying is the caller's concern.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::string complete(const std::string& system_msg, const std::string& user_msg) = 0;
};

/// OpenAI-compatible /chat/completions client. Reads the bearer token from
/// the environment variable named in the config at construction time and an
/// internal semaphore keeps at most parallelism_limit requests in flight.
class HttpChatTransport final : public ChatTransport {
public:
    explicit HttpChatTransport(JudgeConfig config);
    ~HttpChatTransport() override;

    std::string complete(const std::string& system_msg, const std::string& user_msg) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Decorator that appends one JSON line per completed call to an audit file.
class AuditingTransport final : public ChatTransport {
public:
    AuditingTransport(ChatTransport& inner, const std::filesystem::path& audit_path);
    std::string complete(const std::string& system_msg, const std::string& user_msg) override;

private:
    ChatTransport& inner_;
    std::filesystem::path path_;
    std::mutex mutex_;
};

struct RetryPolicy {
    std::size_t max_retries = 3;
    std::chrono::milliseconds backoff_base{250};
};

/// Fills the prompt, issues the chat call, parses the score. Transport
/// failures and unparseable replies are retried up to max_retries times with
/// exponential backoff; at most max_retries+1 requests are ever issued.
double scored_chat(ChatTransport& transport, const JudgePrompt& prompt,
                   std::string_view gen, std::string_view ref, const RetryPolicy& retry);

/// Scores generated text against a reference, selecting the reasoning or the
/// answer prompt by kind. Implementations must tolerate concurrent calls.
class SimilarityJudge {
public:
    virtual ~SimilarityJudge() = default;
    virtual double similarity(const std::string& generated, const std::string& reference,
                              PromptKind kind) = 0;
};

/// Jaccard-based deterministic judge with a call counter, used by tests and
/// by mock-backend runs.
class MockJudge final : public SimilarityJudge {
public:
    double similarity(const std::string& generated, const std::string& reference,
                      PromptKind kind) override;
    std::size_t call_count() const { return calls_.load(); }

private:
    std::atomic<std::size_t> calls_{0};
};

/// HTTP-backed judge using the built-in reasoning/answer similarity prompts.
class HttpJudge final : public SimilarityJudge {
public:
    explicit HttpJudge(JudgeConfig config);

    double similarity(const std::string& generated, const std::string& reference,
                      PromptKind kind) override;
    double score(std::string_view gen, std::string_view ref, const JudgePrompt& prompt);

private:
    JudgeConfig config_;
    HttpChatTransport transport_;
    JudgePrompt reasoning_prompt_;
    JudgePrompt answer_prompt_;
};

/// One-shot convenience wrapper around HttpJudge::score.
double judge_score(std::string_view gen, std::string_view ref, const JudgePrompt& prompt,
                   const JudgeConfig& config);

}  // namespace qarl
