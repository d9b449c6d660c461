#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bitcal {

using Tokens = std::int64_t;

// Divisor guard when normalizing hidden vectors.
inline constexpr double kHiddenEpsilon = 1e-8;

// Tolerance on |sum(p) - 1| for probability vectors.
inline constexpr double kDistributionTolerance = 1e-6;

// Chunks shorter than this (in Unicode scalar values, after stripping) do
// not take part in trace stability.
inline constexpr std::size_t kMinStableChunkChars = 8;

struct EntropyValue {
  double nats = 0.0;
  friend bool operator==(const EntropyValue&, const EntropyValue&) = default;
};

using ProbabilityVector = std::vector<double>;

// Exactly one of: a full next-token distribution, or its entropy.
using Distribution = std::variant<ProbabilityVector, EntropyValue>;

// Observables of one decoding step.
struct StepSignals {
  std::string chunk_text;
  Tokens tokens_in_chunk = 0;
  Distribution distribution = EntropyValue{};
  std::optional<std::vector<double>> hidden;

  friend bool operator==(const StepSignals&, const StepSignals&) = default;
};

struct SignalReadout {
  double entropy = 0.0;
  double trace_stability = 1.0;
  // Clipped to [0, 1]; this is what the calibrator consumes.
  double hidden_stability = 1.0;
  // Mean cosine before clipping, kept for diagnostics.
  double hidden_stability_raw = 1.0;
};

/// Shannon entropy in nats. Zero-probability terms contribute nothing.
/// Throws Error(kInvalidDistribution) on negative entries or a sum that is
/// off by more than kDistributionTolerance.
double entropy(std::span<const double> probabilities);
inline double entropy(const ProbabilityVector& probabilities) {
  return entropy(std::span<const double>(probabilities));
}

/// Entropy of either alternative of a Distribution. A precomputed value must
/// be finite and non-negative.
double entropy(const Distribution& distribution);

/// Trims leading and trailing Unicode whitespace from UTF-8 text.
std::string_view strip_unicode_whitespace(std::string_view text);

/// Number of Unicode scalar values in UTF-8 text. Each malformed byte counts
/// as one scalar.
std::size_t count_scalars(std::string_view text);

/// Fraction of consecutive chunk pairs that are identical after stripping,
/// counting only pairs where both sides have at least kMinStableChunkChars
/// scalars. Falls back to 1.0 when fewer than two such pairs exist.
double trace_stability(std::span<const std::string> chunks);

/// Mean cosine of consecutive hidden vectors, each normalized by
/// (norm + kHiddenEpsilon). Zero vectors normalize to zero. Returns 1.0 with
/// fewer than two vectors. Throws Error(kInvalidInput) on dimension mismatch.
double hidden_stability(std::span<const std::vector<double>> hiddens);

// Incremental form of the three signals for a running episode. Produces the
// same values as the free functions over the accumulated history.
class SignalTracker {
 public:
  /// Records one step and returns the readout after it.
  SignalReadout observe(const StepSignals& step);

  const std::vector<std::string>& chunks() const { return chunks_; }

 private:
  std::vector<std::string> chunks_;
  std::size_t eligible_pairs_ = 0;
  std::size_t equal_pairs_ = 0;

  std::optional<std::vector<double>> last_unit_hidden_;
  std::size_t hidden_count_ = 0;
  double cosine_sum_ = 0.0;
};

}  // namespace bitcal
