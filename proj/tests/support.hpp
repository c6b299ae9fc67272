#pragma once

#include <unistd.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qarl/core.hpp"
#include "qarl/judge.hpp"

namespace qarl::test {

/// In-process chat double: pops scripted replies in order; an empty script
/// entry simulates a transport failure. Counts calls.
class ScriptedTransport final : public ChatTransport {
public:
    struct Step {
        bool fail = false;
        std::string reply;
    };

    void push_reply(std::string reply) { script_.push_back({false, std::move(reply)}); }
    void push_failure() { script_.push_back({true, ""}); }

    std::string complete(const std::string&, const std::string&) override {
        std::lock_guard<std::mutex> lock(mutex_);
        ++calls_;
        if (script_.empty()) throw TransportError("scripted transport ran out of replies");
        Step step = script_.front();
        script_.pop_front();
        if (step.fail) throw TransportError("scripted transport failure");
        return step.reply;
    }

    std::size_t calls() const { return calls_; }

private:
    std::deque<Step> script_;
    std::mutex mutex_;
    std::size_t calls_ = 0;
};

/// Unique temporary directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& label) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("qarl_" + label + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline QaRecord make_record(const std::string& id, QuestionType type,
                            const std::string& reasoning = "the object is a chair",
                            const std::string& answer = "a chair") {
    QaRecord record;
    record.id = id;
    record.image_ref = "images/" + id + ".png";
    record.question = "What object is presented in the top polar region?";
    record.question_type = type;
    record.reference_reasoning = reasoning;
    record.reference_answer = answer;
    return record;
}

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

/// Runs the built CLI binary with the given arguments.
inline CliResult run_cli(const std::string& args) {
    const std::string command = std::string(QARL_CLI_PATH) + " " + args + " 2>&1";
    CliResult result;
    FILE* pipe = ::popen(command.c_str(), "r");
    if (pipe == nullptr) return result;
    std::array<char, 4096> buffer;
    while (std::fgets(buffer.data(), buffer.size(), pipe) != nullptr) {
        result.output += buffer.data();
    }
    const int status = ::pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace qarl::test
