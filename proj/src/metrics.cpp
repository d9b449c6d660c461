#include "bitcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "bitcal/error.hpp"
#include "bitcal/trace_io.hpp"
#include "json.hpp"

namespace bitcal {

namespace {

int method_rank(Method m) {
  switch (m) {
    case Method::kFixed: return 0;
    case Method::kAdaptive: return 1;
    case Method::kBitcal: return 2;
  }
  return 3;
}

bool summary_order(const RunSummary& a, const RunSummary& b) {
  return std::forward_as_tuple(a.model, a.budget, method_rank(a.method)) <
         std::forward_as_tuple(b.model, b.budget, method_rank(b.method));
}

std::string format_tokens(double avg) {
  return fmt::format("{:.0f}", round_half_up(avg, 0));
}

std::string format_one_decimal(double value) {
  return fmt::format("{:.1f}", round_half_up(value, 1));
}

std::vector<RunSummary> sorted(std::span<const RunSummary> summaries) {
  std::vector<RunSummary> out(summaries.begin(), summaries.end());
  std::stable_sort(out.begin(), out.end(), summary_order);
  return out;
}

}  // namespace

WilsonInterval wilson_interval(std::int64_t successes, std::int64_t n, double z) {
  if (n == 0) throw Error(ErrorKind::kUndefinedInterval, "Wilson interval needs n >= 1");
  if (n < 0 || successes < 0 || successes > n) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("successes {} outside [0, n={}]", successes, n));
  }
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("z must be > 0 (got {})", z));
  }
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double center = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  WilsonInterval ci{center - half, center + half};
  // Exact endpoints at the extremes; the formula leaves rounding residue.
  if (successes == 0) ci.low = 0.0;
  if (successes == n) ci.high = 1.0;
  ci.low = std::clamp(ci.low, 0.0, 1.0);
  ci.high = std::clamp(ci.high, 0.0, 1.0);
  return ci;
}

RunSummary summarize(std::span<const EpisodeRecord> records,
                     const std::optional<RunSummary>& fixed_reference) {
  if (records.empty()) throw Error(ErrorKind::kEmptyRun, "no records to summarize");

  RunSummary s;
  s.model = records.front().model;
  s.method = records.front().method;
  s.budget = records.front().budget;

  double token_sum = 0.0;
  for (const EpisodeRecord& r : records) {
    if (r.model != s.model || r.method != s.method || r.budget != s.budget) {
      throw Error(ErrorKind::kInvalidGrouping,
                  fmt::format("record {} ({}/{}/B={}) does not belong to group {}/{}/B={}",
                              r.example_id, r.model, to_string(r.method), r.budget, s.model,
                              to_string(s.method), s.budget));
    }
    if (r.errored()) {
      ++s.n_errored;
      continue;
    }
    ++s.n;
    if (r.correct) ++s.n_correct;
    if (r.early_halt && !r.correct) ++s.n_early_incorrect;
    token_sum += static_cast<double>(r.tokens_used);
  }
  if (s.n == 0) {
    throw Error(ErrorKind::kEmptyRun,
                fmt::format("all {} records of {}/{}/B={} errored", s.n_errored, s.model,
                            to_string(s.method), s.budget));
  }

  const double nd = static_cast<double>(s.n);
  s.accuracy = 100.0 * static_cast<double>(s.n_correct) / nd;
  const WilsonInterval ci = wilson_interval(s.n_correct, s.n);
  s.ci_low = 100.0 * ci.low;
  s.ci_high = 100.0 * ci.high;
  s.avg_tokens = token_sum / nd;
  s.premature_stop_pct = 100.0 * static_cast<double>(s.n_early_incorrect) / nd;

  if (fixed_reference) {
    const RunSummary& ref = *fixed_reference;
    if (ref.method != Method::kFixed || ref.model != s.model || ref.budget != s.budget) {
      throw Error(ErrorKind::kInvalidGrouping,
                  fmt::format("savings reference {}/{}/B={} is not fixed decoding on {}/B={}",
                              ref.model, to_string(ref.method), ref.budget, s.model, s.budget));
    }
    if (ref.avg_tokens > 0.0) {
      s.savings_pct = 100.0 * (ref.avg_tokens - s.avg_tokens) / ref.avg_tokens;
    }
  }
  return s;
}

std::vector<RunSummary> summarize_all(std::span<const EpisodeRecord> records) {
  if (records.empty()) throw Error(ErrorKind::kEmptyRun, "no records to summarize");
  std::map<std::tuple<std::string, Tokens, int>, std::vector<EpisodeRecord>> groups;
  for (const EpisodeRecord& r : records) {
    groups[{r.model, r.budget, method_rank(r.method)}].push_back(r);
  }
  std::vector<RunSummary> out;
  std::optional<RunSummary> fixed;
  for (const auto& [key, group] : groups) {
    const auto& [model, budget, rank] = key;
    if (fixed && (fixed->model != model || fixed->budget != budget)) fixed.reset();
    RunSummary s = summarize(group, rank == method_rank(Method::kFixed) ? std::nullopt : fixed);
    if (s.method == Method::kFixed) fixed = s;
    out.push_back(std::move(s));
  }
  return out;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge absorbs binary representation error at exact half steps.
  const double scaled = std::abs(value) * scale;
  const double rounded = std::floor(scaled + 0.5 + 1e-9) / scale;
  return std::copysign(rounded, value);
}

std::string format_percent(double pct) { return format_one_decimal(pct); }

std::string format_summary_table(std::span<const RunSummary> summaries) {
  std::string out = "Method,B,N,Acc.,Avg toks,Prem. stop,CI low,CI high\n";
  for (const RunSummary& s : sorted(summaries)) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(s.method), s.budget, s.n,
                       format_percent(s.accuracy), format_tokens(s.avg_tokens),
                       format_percent(s.premature_stop_pct), format_percent(s.ci_low),
                       format_percent(s.ci_high));
  }
  return out;
}

void emit_summary_table(std::span<const RunSummary> summaries, const std::filesystem::path& path) {
  write_text_file(path, format_summary_table(summaries));
}

std::string format_summary_records(std::span<const RunSummary> summaries) {
  std::string out;
  for (const RunSummary& s : sorted(summaries)) {
    nlohmann::ordered_json j;
    j["model"] = s.model;
    j["method"] = to_string(s.method);
    j["budget"] = s.budget;
    j["n"] = s.n;
    j["n_correct"] = s.n_correct;
    j["accuracy"] = s.accuracy;
    j["ci_low"] = s.ci_low;
    j["ci_high"] = s.ci_high;
    j["avg_tokens"] = s.avg_tokens;
    j["savings_pct"] = s.savings_pct ? nlohmann::ordered_json(*s.savings_pct) : nlohmann::ordered_json();
    j["premature_stop_pct"] = s.premature_stop_pct;
    j["n_early_incorrect"] = s.n_early_incorrect;
    j["n_errored"] = s.n_errored;
    out += j.dump();
    out += "\n";
  }
  return out;
}

std::string format_accuracy_series(std::span<const RunSummary> summaries) {
  std::string out = "model,method,B,N,accuracy,ci_low,ci_high\n";
  for (const RunSummary& s : sorted(summaries)) {
    out += fmt::format("{},{},{},{},{},{},{}\n", s.model, to_string(s.method), s.budget, s.n,
                       format_percent(s.accuracy), format_percent(s.ci_low),
                       format_percent(s.ci_high));
  }
  return out;
}

std::string format_premature_series(std::span<const RunSummary> summaries) {
  std::string out = "model,method,B,premature_stop,n_early_incorrect\n";
  for (const RunSummary& s : sorted(summaries)) {
    out += fmt::format("{},{},{},{},{}\n", s.model, to_string(s.method), s.budget,
                       format_percent(s.premature_stop_pct), s.n_early_incorrect);
  }
  return out;
}

std::string format_pareto_series(std::span<const RunSummary> summaries) {
  std::string out = "model,method,B,avg_tokens,accuracy\n";
  for (const RunSummary& s : sorted(summaries)) {
    out += fmt::format("{},{},{},{},{}\n", s.model, to_string(s.method), s.budget,
                       format_one_decimal(s.avg_tokens), format_percent(s.accuracy));
  }
  return out;
}

std::string format_budget_sweep_series(std::span<const RunSummary> summaries) {
  std::string out = "model,method,B,accuracy,ci_low,ci_high,avg_tokens,savings\n";
  for (const RunSummary& s : sorted(summaries)) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", s.model, to_string(s.method), s.budget,
                       format_percent(s.accuracy), format_percent(s.ci_low),
                       format_percent(s.ci_high), format_one_decimal(s.avg_tokens),
                       s.savings_pct ? format_percent(*s.savings_pct) : std::string{});
  }
  return out;
}

}  // namespace bitcal
