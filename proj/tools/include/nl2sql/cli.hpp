#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nl2sql::cli {

inline constexpr std::string_view kConfigEnvVar = "NL2SQL_CONFIG";

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

// Resolved key=value configuration. Every key has a default; unknown keys
// are rejected.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<std::string>& keys();
  static bool known(const std::string& key);

  // Lines of `key = value`; blank lines and lines starting with '#' are
  // ignored. Throws ConfigError naming every bad line.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);  // throws ConfigError
  const std::string& get(const std::string& key) const;

  // Typed accessors; parse failures are collected by `problems`.
  long long get_int(const std::string& key, std::vector<std::string>& problems) const;
  double get_double(const std::string& key, std::vector<std::string>& problems) const;
  bool get_bool(const std::string& key, std::vector<std::string>& problems) const;

  std::string to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

// Runs one CLI invocation (args exclude the program name). Machine-readable
// output goes to `out`, logs and error JSON to `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nl2sql::cli
