#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvavg::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitIo = 4,
  kExitRuntime = 5,
};

/// Raised with every problem found while reading or validating a config.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Sectioned key=value table. '#' and ';' start comment lines.
class Config {
 public:
  using Section = std::map<std::string, std::string>;

  /// Parses text, appending "origin:line: message" entries to problems.
  static Config parse(std::string_view text, std::string_view origin, std::vector<std::string>& problems);

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const { return sections_.count(section) != 0; }
  const std::map<std::string, Section>& sections() const noexcept { return sections_; }

  /// Applies every entry of other on top of this one. Keys absent from this
  /// table are reported as unknown.
  void overlay(const Config& other, std::string_view origin, std::vector<std::string>& problems);

  /// Canonical text form; parse(to_text()) reproduces the table.
  std::string to_text() const;

 private:
  std::map<std::string, Section> sections_;
};

/// Every recognised key with its default value.
Config default_config();

/// Typed access that records problems instead of throwing.
class Reader {
 public:
  explicit Reader(const Config& config) : config_(config) {}

  std::string text(const std::string& section, const std::string& key);
  double real(const std::string& section, const std::string& key);
  std::size_t count(const std::string& section, const std::string& key);
  std::uint64_t u64(const std::string& section, const std::string& key);
  std::vector<double> reals(const std::string& section, const std::string& key);
  /// ';'-separated list of ','-separated vectors.
  std::vector<std::vector<double>> vectors(const std::string& section, const std::string& key);

  void problem(std::string message) { problems_.push_back(std::move(message)); }
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  const std::string& raw(const std::string& section, const std::string& key);

  const Config& config_;
  std::vector<std::string> problems_;
  std::string empty_;
};

/// Default output directory: $MVAVG_OUTPUT_DIR, else "mvavg-out".
std::filesystem::path default_output_dir();

/// Entry point. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mvavg::cli
