#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitcal/engine.hpp"

namespace bitcal {

// Standard normal quantile at 0.975.
inline constexpr double kZ95 = 1.959964;

struct WilsonInterval {
  double low = 0.0;   // proportion
  double high = 0.0;  // proportion
};

/// Wilson score interval for `successes` out of `n`. Throws
/// Error(kUndefinedInterval) for n == 0 and Error(kInvalidInput) when
/// successes is outside [0, n] or z <= 0.
WilsonInterval wilson_interval(std::int64_t successes, std::int64_t n, double z = kZ95);

// Aggregates for one (model, method, budget) group. Percentages are on a
// 0-100 scale and unrounded.
struct RunSummary {
  std::string model;
  Method method = Method::kFixed;
  Tokens budget = 0;
  std::int64_t n = 0;
  std::int64_t n_correct = 0;
  double accuracy = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double avg_tokens = 0.0;
  std::optional<double> savings_pct;
  double premature_stop_pct = 0.0;
  std::int64_t n_early_incorrect = 0;
  std::int64_t n_errored = 0;

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

/// Aggregates one group. Errored records are counted in n_errored and
/// otherwise ignored. Throws Error(kEmptyRun) when no usable record remains
/// and Error(kInvalidGrouping) when records (or the reference) disagree on
/// model, method or budget, or the reference is not a fixed run.
RunSummary summarize(std::span<const EpisodeRecord> records,
                     const std::optional<RunSummary>& fixed_reference = std::nullopt);

/// Groups records by (model, budget, method), attaches fixed-decoding
/// references for savings, and orders the result by model, budget, then
/// method (fixed, adaptive, bitcal).
std::vector<RunSummary> summarize_all(std::span<const EpisodeRecord> records);

/// Rounds half away from zero (half-up for the non-negative values used
/// here) to `decimals` places.
double round_half_up(double value, int decimals);

/// One-decimal percentage, e.g. "83.3".
std::string format_percent(double pct);

/// Table with columns Method,B,N,Acc.,Avg toks,Prem. stop,CI low,CI high.
std::string format_summary_table(std::span<const RunSummary> summaries);
void emit_summary_table(std::span<const RunSummary> summaries, const std::filesystem::path& path);

/// One JSON object per line with every RunSummary field, unrounded.
std::string format_summary_records(std::span<const RunSummary> summaries);

// Plot-ready series.
std::string format_accuracy_series(std::span<const RunSummary> summaries);
std::string format_premature_series(std::span<const RunSummary> summaries);
std::string format_pareto_series(std::span<const RunSummary> summaries);
std::string format_budget_sweep_series(std::span<const RunSummary> summaries);

}  // namespace bitcal
