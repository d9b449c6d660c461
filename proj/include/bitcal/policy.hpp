#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "bitcal/signals.hpp"

namespace bitcal {

enum class ActionKind { kContinue, kStop, kEscalate };

enum class Reason {
  kFloor,
  kBufferStop,
  kEntropyEscalate,
  kConfidentStop,
  kTailWait,
  kTailStop,
  kDefaultContinue,
};

struct Action {
  ActionKind kind = ActionKind::kContinue;
  Reason reason = Reason::kDefaultContinue;

  friend bool operator==(const Action&, const Action&) = default;
};

std::string_view to_string(ActionKind kind);
std::string_view to_string(Reason reason);
std::optional<ActionKind> parse_action_kind(std::string_view text);
std::optional<Reason> parse_reason(std::string_view text);

/// The action kind a reason code implies.
ActionKind action_for(Reason reason);

class PolicyConfig {
 public:
  struct Params {
    double theta_h = 2.0;
    double theta_c = 0.75;
    double theta_e = 4.0;
    Tokens floor_tokens = 128;
    Tokens budget_buffer = 32;
    int effective_bits = 16;
    std::string marker = "####";
  };

  PolicyConfig() : PolicyConfig(Params{}) {}

  /// Throws Error(kInvalidConfig) unless theta_h < theta_e, both token
  /// counts are non-negative, effective_bits >= 1, and marker is non-empty.
  explicit PolicyConfig(Params params);

  const Params& params() const { return params_; }
  double theta_h() const { return params_.theta_h; }
  double theta_c() const { return params_.theta_c; }
  double theta_e() const { return params_.theta_e; }
  Tokens floor_tokens() const { return params_.floor_tokens; }
  Tokens budget_buffer() const { return params_.budget_buffer; }
  int effective_bits() const { return params_.effective_bits; }
  const std::string& marker() const { return params_.marker; }

  PolicyConfig with_effective_bits(int bits) const;

  friend bool operator==(const PolicyConfig& a, const PolicyConfig& b) {
    const Params& x = a.params_;
    const Params& y = b.params_;
    return x.theta_h == y.theta_h && x.theta_c == y.theta_c && x.theta_e == y.theta_e &&
           x.floor_tokens == y.floor_tokens && x.budget_buffer == y.budget_buffer &&
           x.effective_bits == y.effective_bits && x.marker == y.marker;
  }

 private:
  Params params_;
};

// Token count at the first step whose accumulated text contains the marker.
struct MarkerState {
  std::optional<Tokens> first_marker_tokens;

  friend bool operator==(const MarkerState&, const MarkerState&) = default;
};

/// Post-marker confirmation horizon in tokens: 32 at <= 4 bits, 16 up to 8,
/// none above.
Tokens tail_length(int bits);

/// Sets first_marker_tokens to cumulative_tokens on the first sighting of
/// marker anywhere in full_text. A state that is already set never changes.
MarkerState update_marker(MarkerState state, std::string_view full_text,
                          Tokens cumulative_tokens, std::string_view marker);

/// One halting decision. Cases are evaluated in this order: floor, marker
/// tail (wait or stop, bypassing the signals), then budget buffer, entropy
/// escalation, confident stop, and the default continue.
Action decide(Tokens cumulative_tokens, Tokens remaining_budget, double entropy,
              double conf, const MarkerState& marker_state, const PolicyConfig& cfg);

}  // namespace bitcal
