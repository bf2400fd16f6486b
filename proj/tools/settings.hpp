#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dermalab/cvxeda.hpp"
#include "dermalab/dsp.hpp"
#include "dermalab/features.hpp"
#include "dermalab/forest.hpp"

namespace dermalab::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIngest = 3,
  kModeling = 4,
  kStats = 5,
  kReport = 6,
};

/// Carries the exit code a command should end with.
class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

enum class KeyType { Real, Int, Bool, Text };

/// Flat dotted-key parameters. Defaults, then the config file, then flags.
class Settings {
 public:
  Settings();

  /// Throws Failure(kUsage) on unreadable JSON, unknown keys or bad types.
  void load_file(const std::filesystem::path& path);
  /// `text` is converted to the key's type.
  void set_text(const std::string& key, const std::string& text);
  void set(const std::string& key, const nlohmann::json& value);

  bool has(const std::string& key) const;
  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::string text(const std::string& key) const;

  /// `seed` if set, else DERMALAB_SEED, else 0.
  std::uint64_t seed() const;

  CleanParams clean() const;
  CvxEdaParams cvxeda() const;
  FeatureParams features() const;
  ForestParams forest(ForestTask task) const;

  /// Effective values of every key under the given prefixes, sorted.
  nlohmann::ordered_json dump(const std::vector<std::string>& prefixes) const;

 private:
  const nlohmann::json& value(const std::string& key) const;
  nlohmann::json values_;  // object keyed by the dotted names
};

}  // namespace dermalab::cli
