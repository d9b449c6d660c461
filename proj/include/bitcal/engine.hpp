#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bitcal/calibrator.hpp"
#include "bitcal/policy.hpp"
#include "bitcal/signals.hpp"

namespace bitcal {

enum class Method { kFixed, kAdaptive, kBitcal };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);

enum class StopCause {
  kFloorExhaustedBudget,  // budget ran out while the floor still held
  kEos,
  kBufferStop,
  kConfidentStop,
  kEscalate,
  kTailStop,
  kBudgetExhausted,
  kErrored,
};

std::string_view to_string(StopCause cause);
std::optional<StopCause> parse_stop_cause(std::string_view text);

/// True for terminations initiated by the controller.
bool is_controller_stop(StopCause cause);

struct SourceStep {
  StepSignals signals;
  bool eos = false;

  friend bool operator==(const SourceStep&, const SourceStep&) = default;
};

// Produces decoding steps on demand. Returning nullopt means the source has
// nothing more to give without having signaled end-of-sequence (for example a
// replayed trace that the original run cut off). Implementations may throw
// Error(kSourceFailure).
class TokenSource {
 public:
  virtual ~TokenSource() = default;
  virtual std::optional<SourceStep> next(Tokens max_tokens) = 0;
};

struct EngineConfig {
  Tokens budget = 512;
  Tokens chunk_size = 16;
  Method method = Method::kBitcal;
  int served_bits = 4;
  CalibratorConfig calibrator;
  PolicyConfig policy;
  std::string model = "sim";
  // Replaces the method-derived effective precision. Only meaningful for
  // controlled methods; used to check that the variants share machinery.
  std::optional<int> effective_bits_override;

  /// 16 for ADAPTIVE, served_bits for BITCAL (unless overridden).
  int effective_bits() const;

  /// Throws Error(kInvalidConfig) unless budget >= chunk_size >= 1 and
  /// served_bits >= 1.
  void validate() const;
};

struct ActionRecord {
  Action action;
  Tokens cumulative_tokens = 0;
  double entropy = 0.0;
  double confidence = 0.0;

  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

struct EpisodeRecord {
  std::string example_id;
  std::string model;
  Method method = Method::kFixed;
  int served_bits = 4;
  int effective_bits = 16;
  Tokens budget = 0;
  Tokens tokens_used = 0;
  Tokens steps = 0;
  std::vector<ActionRecord> actions;
  StopCause stop_cause = StopCause::kBudgetExhausted;
  std::optional<Tokens> first_marker_tokens;
  std::string generated_text;
  std::optional<double> predicted_answer;
  double gold_answer = 0.0;
  bool correct = false;
  bool early_halt = false;
  // Set when a trace is replayed under a different controller than the one
  // that produced it.
  bool counterfactual_replay = false;
  std::optional<std::string> error;

  bool errored() const { return error.has_value(); }

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// Runs one example to completion against `source`. Source failures do not
/// throw; they produce a record with `error` set and stop_cause kErrored.
/// Throws Error(kInvalidConfig) for an invalid config.
EpisodeRecord run_episode(TokenSource& source, const EngineConfig& cfg, double gold,
                          std::string example_id);

/// Number after the last marker, with commas and a currency sign ignored.
std::optional<double> extract_answer(std::string_view full_text, std::string_view marker);

/// |predicted - gold| <= 1e-6 * max(1, |gold|).
bool answers_match(double predicted, double gold);

}  // namespace bitcal
