#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nsgp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name, e.g.
/// {"train", "--data", "sun.csv", "--out", "run1"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands every `--config FILE` into the `--key value` pairs it holds,
/// placed before the remaining flags so that explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace nsgp::cli
