#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace quadsci {

inline constexpr const char* kToolVersion = "0.1.0";

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// One JSON line per invocation describing what ran.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // every option, defaults included
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::string version = kToolVersion;
  double duration_s = 0.0;
  int exit_code = 0;

  std::string to_line() const;
  /// Throws FormatError on anything that is not a manifest line.
  static RunManifest parse(const std::string& line);
};

namespace cli {

/// Runs one subcommand. args excludes the program name. Reports go to
/// `out`, diagnostics and (without --manifest) the manifest line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace cli
}  // namespace quadsci
