#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bitcal/calibrator.hpp"
#include "bitcal/engine.hpp"
#include "bitcal/policy.hpp"

namespace bitcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Fully resolved settings of one invocation: built-in defaults, then the
// config file, then --set overrides, then dedicated flags.
struct RunConfig {
  std::vector<Method> methods{Method::kFixed, Method::kAdaptive, Method::kBitcal};
  std::vector<Tokens> budgets{512};
  int served_bits = 4;
  bool served_bits_explicit = false;
  Tokens chunk_size = 16;
  CalibratorConfig::Params calibrator;
  PolicyConfig::Params policy;
  std::string model = "sim";
  std::optional<std::filesystem::path> scenarios_dir;
  std::optional<std::filesystem::path> traces_dir;
  std::optional<std::filesystem::path> records_dir;
  std::optional<std::filesystem::path> emit_traces_dir;
  std::filesystem::path out_dir = "out";
  unsigned jobs = 0;  // 0 = available cores
  std::uint64_t seed = 42;

  /// Engine settings for one (method, budget) cell.
  EngineConfig engine_config(Method method, Tokens budget) const;
};

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

/// Every key accepted by config files and --set, with its default.
const std::vector<ConfigKey>& config_keys();

/// Applies one key. Throws Error(kInvalidConfig) naming the key, with a
/// suggestion for near misses.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every key of a JSON object config file.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Closest known key within a small edit distance, if any.
std::optional<std::string> suggest_key(std::string_view key);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bitcal::cli
