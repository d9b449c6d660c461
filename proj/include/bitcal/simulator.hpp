#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bitcal/engine.hpp"

namespace bitcal {

// Version tag of the built-in scenario suite and of the scenario file format.
inline constexpr std::string_view kScenarioSuiteVersion = "builtin-v1";
inline constexpr std::string_view kScenarioSchema = "bitcal.scenario/1";

// A run of tokens sharing the same scripted observables. Exactly one of
// `entropy` and `distribution` is set.
struct Segment {
  Tokens length = 0;
  std::optional<double> entropy;
  std::optional<std::vector<double>> distribution;
  // Chunk text; "{step}" expands to the 0-based step index, which makes
  // every chunk distinct.
  std::string text;
  // Per-step rotation of the 2-D hidden direction, in radians. Steps in a
  // segment without it carry no hidden vector.
  std::optional<double> hidden_angle;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Scenario {
  std::string scenario_id;
  std::string description;
  std::vector<Segment> segments;
  // The chunk covering this token offset carries the first marker line.
  std::optional<Tokens> marker_at;
  // End-of-sequence after exactly this many tokens. Without it the last
  // segment repeats until the caller stops asking.
  std::optional<Tokens> eos_at;
  double gold_answer = 0.0;
  // Answer on the text's final marker line.
  double emitted_answer = 0.0;
  // When set, the first marker line carries this answer and a second marker
  // line with emitted_answer follows in the chunk covering revision_at.
  std::optional<double> provisional_answer;
  std::optional<Tokens> revision_at;
  // Starting angle of the hidden direction.
  double hidden_phase = 0.0;

  Tokens total_length() const;

  /// Throws Error(kInvalidInput) when the script is inconsistent.
  void validate() const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Replays `scenario` in chunks of at most `chunk_size` tokens. Throws
/// Error(kInvalidConfig) if chunk_size < 1 and Error(kInvalidInput) for an
/// invalid scenario.
std::unique_ptr<TokenSource> scenario_source(const Scenario& scenario, Tokens chunk_size);

/// Fixed suite covering the controller behaviors the simulator is meant to
/// exhibit (see scenarios/README.md for what each one is for).
std::vector<Scenario> builtin_scenario_suite();

/// Looks up a scenario of the built-in suite by id.
const Scenario& builtin_scenario(std::string_view scenario_id);

std::string scenario_to_json(const Scenario& scenario);

/// Throws Error(kParse) with `origin` in the message on malformed input.
Scenario scenario_from_json(std::string_view text, std::string_view origin = "<memory>");

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// All *.json scenarios in `dir`, ordered by scenario_id.
std::vector<Scenario> load_scenario_dir(const std::filesystem::path& dir);

/// Text of the answer line the simulator emits, e.g. "#### 42".
std::string answer_line(std::string_view marker, double answer);

}  // namespace bitcal
