#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "qarl/config.hpp"

namespace qarl {

/// Subcommand implementations. Each returns 0 on success and throws
/// ConfigError / DataError / BackendError otherwise; the CLI maps those onto
/// exit codes 2, 3 and 4.
int cmd_validate(const RunConfig& config, std::ostream& out);
int cmd_parse(const RunConfig& config, const std::string& raw_text, std::ostream& out);
int cmd_score(const RunConfig& config, const std::string& record_id,
              const std::string& raw_text, std::ostream& out);
int cmd_eval(const RunConfig& config, const std::filesystem::path& candidates_path,
             bool audit, const std::string& format, std::ostream& out);
int cmd_train_toy(const RunConfig& config, std::ostream& out);
int cmd_refine(const RunConfig& config, std::ostream& out);

/// Candidates file: one JSON object per line, {"id": ..., "completion": ...}.
std::map<std::string, std::string> load_candidates(const std::filesystem::path& path);

}  // namespace qarl
