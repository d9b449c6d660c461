#include "bitcal/engine.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "bitcal/error.hpp"

namespace bitcal {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 3> kMethodNames{{
    {Method::kFixed, "fixed"},
    {Method::kAdaptive, "adaptive"},
    {Method::kBitcal, "bitcal"},
}};

constexpr std::array<std::pair<StopCause, std::string_view>, 8> kStopCauseNames{{
    {StopCause::kFloorExhaustedBudget, "FLOOR_EXHAUSTED_BUDGET"},
    {StopCause::kEos, "EOS"},
    {StopCause::kBufferStop, "BUFFER_STOP"},
    {StopCause::kConfidentStop, "CONFIDENT_STOP"},
    {StopCause::kEscalate, "ESCALATE"},
    {StopCause::kTailStop, "TAIL_STOP"},
    {StopCause::kBudgetExhausted, "BUDGET_EXHAUSTED"},
    {StopCause::kErrored, "ERRORED"},
}};

StopCause stop_cause_for(Reason reason) {
  switch (reason) {
    case Reason::kBufferStop: return StopCause::kBufferStop;
    case Reason::kConfidentStop: return StopCause::kConfidentStop;
    case Reason::kTailStop: return StopCause::kTailStop;
    case Reason::kEntropyEscalate: return StopCause::kEscalate;
    default: break;
  }
  throw Error(ErrorKind::kInvalidInput,
              fmt::format("reason {} does not terminate an episode", to_string(reason)));
}

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Currency signs that may sit between a sign and the digits.
constexpr std::array<std::string_view, 6> kCurrencySigns{"$", "\xE2\x82\xAC", "\xC2\xA3",
                                                         "\xC2\xA5", "\xE2\x82\xB9", "\xC2\xA2"};

std::size_t currency_length_at(std::string_view text, std::size_t pos) {
  for (std::string_view sign : kCurrencySigns) {
    if (text.substr(pos, sign.size()) == sign) return sign.size();
  }
  return 0;
}

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view text) {
  for (const auto& [m, name] : kMethodNames) {
    if (name == text) return m;
  }
  return std::nullopt;
}

std::string_view to_string(StopCause cause) {
  for (const auto& [c, name] : kStopCauseNames) {
    if (c == cause) return name;
  }
  return "UNKNOWN";
}

std::optional<StopCause> parse_stop_cause(std::string_view text) {
  for (const auto& [c, name] : kStopCauseNames) {
    if (name == text) return c;
  }
  return std::nullopt;
}

bool is_controller_stop(StopCause cause) {
  return cause == StopCause::kBufferStop || cause == StopCause::kConfidentStop ||
         cause == StopCause::kEscalate || cause == StopCause::kTailStop;
}

int EngineConfig::effective_bits() const {
  if (effective_bits_override) return *effective_bits_override;
  switch (method) {
    case Method::kAdaptive: return 16;
    case Method::kBitcal: return served_bits;
    case Method::kFixed: break;
  }
  return served_bits;
}

void EngineConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidConfig, msg); };
  if (chunk_size < 1) fail(fmt::format("chunk_size must be >= 1 (got {})", chunk_size));
  if (budget < chunk_size) {
    fail(fmt::format("budget ({}) must be >= chunk_size ({})", budget, chunk_size));
  }
  if (served_bits < 1) fail(fmt::format("served_bits must be >= 1 (got {})", served_bits));
  if (effective_bits_override && *effective_bits_override < 1) {
    fail("effective bits override must be >= 1");
  }
}

EpisodeRecord run_episode(TokenSource& source, const EngineConfig& cfg, double gold,
                          std::string example_id) {
  cfg.validate();
  const int eff_bits = cfg.effective_bits();
  const CalibratorConfig calibrator = cfg.calibrator.with_effective_bits(eff_bits);
  const PolicyConfig policy = cfg.policy.with_effective_bits(eff_bits);
  const bool controlled = cfg.method != Method::kFixed;

  EpisodeRecord rec;
  rec.example_id = std::move(example_id);
  rec.model = cfg.model;
  rec.method = cfg.method;
  rec.served_bits = cfg.served_bits;
  rec.effective_bits = eff_bits;
  rec.budget = cfg.budget;
  rec.gold_answer = gold;

  SignalTracker tracker;
  MarkerState marker;
  std::optional<StopCause> cause;

  try {
    while (rec.tokens_used < cfg.budget && !cause) {
      const Tokens request = std::min(cfg.chunk_size, cfg.budget - rec.tokens_used);
      std::optional<SourceStep> step = source.next(request);
      if (!step) {
        throw Error(ErrorKind::kSourceFailure,
                    fmt::format("source exhausted at {} tokens without end-of-sequence",
                                rec.tokens_used));
      }
      const Tokens n = step->signals.tokens_in_chunk;
      if (n > request || n < 0 || (n == 0 && !step->eos)) {
        throw Error(ErrorKind::kSourceFailure,
                    fmt::format("source returned {} tokens for a request of {}", n, request));
      }

      rec.generated_text += step->signals.chunk_text;
      rec.tokens_used += n;
      ++rec.steps;
      marker = update_marker(marker, rec.generated_text, rec.tokens_used, policy.marker());

      const SignalReadout readout = tracker.observe(step->signals);
      const double conf = confidence(readout, calibrator);

      if (step->eos) {
        cause = StopCause::kEos;
        break;
      }
      if (!controlled) continue;

      const Action action = decide(rec.tokens_used, cfg.budget - rec.tokens_used,
                                   readout.entropy, conf, marker, policy);
      rec.actions.push_back({action, rec.tokens_used, readout.entropy, conf});
      if (action.kind != ActionKind::kContinue) cause = stop_cause_for(action.reason);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidConfig) throw;
    rec.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
    rec.stop_cause = StopCause::kErrored;
    rec.first_marker_tokens = marker.first_marker_tokens;
    rec.predicted_answer = extract_answer(rec.generated_text, policy.marker());
    return rec;
  }

  if (!cause) {
    const bool floor_held = !rec.actions.empty() && rec.actions.back().action.reason == Reason::kFloor;
    cause = floor_held ? StopCause::kFloorExhaustedBudget : StopCause::kBudgetExhausted;
  }
  rec.stop_cause = *cause;
  rec.first_marker_tokens = marker.first_marker_tokens;
  rec.predicted_answer = extract_answer(rec.generated_text, policy.marker());
  rec.correct = rec.predicted_answer && answers_match(*rec.predicted_answer, gold);
  rec.early_halt = controlled && rec.tokens_used < cfg.budget && is_controller_stop(rec.stop_cause);
  return rec;
}

std::optional<double> extract_answer(std::string_view full_text, std::string_view marker) {
  if (marker.empty()) return std::nullopt;
  const std::size_t at = full_text.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;

  std::string tail;
  for (char c : full_text.substr(at + marker.size())) {
    if (c != ',') tail.push_back(c);
  }

  // First maximal numeric token: [sign][currency]digits[.digits] or .digits.
  std::size_t pos = 0;
  while (pos < tail.size()) {
    std::size_t cursor = pos;
    bool negative = false;
    if (tail[cursor] == '-' || tail[cursor] == '+') {
      negative = tail[cursor] == '-';
      ++cursor;
    }
    if (const std::size_t currency = currency_length_at(tail, cursor); currency > 0) {
      cursor += currency;
      while (cursor < tail.size() && is_ascii_space(tail[cursor])) ++cursor;
    }
    std::size_t digits_begin = cursor;
    std::size_t end = cursor;
    while (end < tail.size() && is_digit(tail[end])) ++end;
    bool has_int = end > digits_begin;
    if (end < tail.size() && tail[end] == '.' && end + 1 < tail.size() && is_digit(tail[end + 1])) {
      ++end;
      while (end < tail.size() && is_digit(tail[end])) ++end;
    } else if (has_int && end < tail.size() && tail[end] == '.') {
      ++end;  // "42."
    }
    if (end > digits_begin && (has_int || tail[digits_begin] == '.')) {
      double value = 0.0;
      std::string_view token(tail.data() + digits_begin, end - digits_begin);
      if (token.back() == '.') token.remove_suffix(1);
      const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
      if (result.ec == std::errc() && std::isfinite(value)) {
        return negative ? -value : value;
      }
      return std::nullopt;
    }
    ++pos;
  }
  return std::nullopt;
}

bool answers_match(double predicted, double gold) {
  return std::abs(predicted - gold) <= 1e-6 * std::max(1.0, std::abs(gold));
}

}  // namespace bitcal
