#include "bitcal/policy.hpp"

#include <array>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "bitcal/error.hpp"

namespace bitcal {

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 3> kActionNames{{
    {ActionKind::kContinue, "CONTINUE"},
    {ActionKind::kStop, "STOP"},
    {ActionKind::kEscalate, "ESCALATE"},
}};

constexpr std::array<std::pair<Reason, std::string_view>, 7> kReasonNames{{
    {Reason::kFloor, "FLOOR"},
    {Reason::kBufferStop, "BUFFER_STOP"},
    {Reason::kEntropyEscalate, "ENTROPY_ESCALATE"},
    {Reason::kConfidentStop, "CONFIDENT_STOP"},
    {Reason::kTailWait, "TAIL_WAIT"},
    {Reason::kTailStop, "TAIL_STOP"},
    {Reason::kDefaultContinue, "DEFAULT_CONTINUE"},
}};

}  // namespace

std::string_view to_string(ActionKind kind) {
  for (const auto& [k, name] : kActionNames) {
    if (k == kind) return name;
  }
  return "UNKNOWN";
}

std::string_view to_string(Reason reason) {
  for (const auto& [r, name] : kReasonNames) {
    if (r == reason) return name;
  }
  return "UNKNOWN";
}

std::optional<ActionKind> parse_action_kind(std::string_view text) {
  for (const auto& [k, name] : kActionNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::optional<Reason> parse_reason(std::string_view text) {
  for (const auto& [r, name] : kReasonNames) {
    if (name == text) return r;
  }
  return std::nullopt;
}

ActionKind action_for(Reason reason) {
  switch (reason) {
    case Reason::kFloor:
    case Reason::kTailWait:
    case Reason::kDefaultContinue:
      return ActionKind::kContinue;
    case Reason::kBufferStop:
    case Reason::kConfidentStop:
    case Reason::kTailStop:
      return ActionKind::kStop;
    case Reason::kEntropyEscalate:
      return ActionKind::kEscalate;
  }
  return ActionKind::kContinue;
}

PolicyConfig::PolicyConfig(Params params) : params_(std::move(params)) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidConfig, msg); };
  if (!std::isfinite(params_.theta_h) || !std::isfinite(params_.theta_c) ||
      !std::isfinite(params_.theta_e)) {
    fail("policy thresholds must be finite");
  }
  if (!(params_.theta_h < params_.theta_e)) {
    fail(fmt::format("theta_h ({}) must be < theta_e ({})", params_.theta_h, params_.theta_e));
  }
  if (params_.floor_tokens < 0) fail("floor_tokens must be >= 0");
  if (params_.budget_buffer < 0) fail("budget_buffer must be >= 0");
  if (params_.effective_bits < 1) fail("effective_bits must be >= 1");
  if (params_.marker.empty()) fail("marker must be non-empty");
}

PolicyConfig PolicyConfig::with_effective_bits(int bits) const {
  Params p = params_;
  p.effective_bits = bits;
  return PolicyConfig(std::move(p));
}

Tokens tail_length(int bits) {
  if (bits <= 4) return 32;
  if (bits <= 8) return 16;
  return 0;
}

MarkerState update_marker(MarkerState state, std::string_view full_text,
                          Tokens cumulative_tokens, std::string_view marker) {
  if (!state.first_marker_tokens && !marker.empty() &&
      full_text.find(marker) != std::string_view::npos) {
    state.first_marker_tokens = cumulative_tokens;
  }
  return state;
}

Action decide(Tokens cumulative_tokens, Tokens remaining_budget, double entropy, double conf,
              const MarkerState& marker_state, const PolicyConfig& cfg) {
  if (cumulative_tokens < cfg.floor_tokens()) {
    return {ActionKind::kContinue, Reason::kFloor};
  }
  if (marker_state.first_marker_tokens) {
    const Tokens since_marker = cumulative_tokens - *marker_state.first_marker_tokens;
    if (since_marker < tail_length(cfg.effective_bits())) {
      return {ActionKind::kContinue, Reason::kTailWait};
    }
    return {ActionKind::kStop, Reason::kTailStop};
  }
  if (remaining_budget < cfg.budget_buffer()) {
    return {ActionKind::kStop, Reason::kBufferStop};
  }
  if (entropy >= cfg.theta_e()) {
    return {ActionKind::kEscalate, Reason::kEntropyEscalate};
  }
  if (entropy <= cfg.theta_h() && conf >= cfg.theta_c()) {
    return {ActionKind::kStop, Reason::kConfidentStop};
  }
  return {ActionKind::kContinue, Reason::kDefaultContinue};
}

}  // namespace bitcal
