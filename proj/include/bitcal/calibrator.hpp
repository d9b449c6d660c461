#pragma once

#include "bitcal/signals.hpp"

namespace bitcal {

// Calibrator tunables. Weights are renormalized to sum to one when the
// config is built; the stored weights are the normalized ones.
class CalibratorConfig {
 public:
  struct Params {
    double h_max = 10.0;
    double w_entropy = 0.40;
    double w_trace = 0.35;
    double w_hidden = 0.25;
    double temperature = 1.0;
    int effective_bits = 16;
  };

  CalibratorConfig() : CalibratorConfig(Params{}) {}

  /// Throws Error(kInvalidConfig) for non-positive h_max or temperature,
  /// negative or all-zero weights, or effective_bits < 1.
  explicit CalibratorConfig(const Params& params);

  double h_max() const { return h_max_; }
  double w_entropy() const { return w_entropy_; }
  double w_trace() const { return w_trace_; }
  double w_hidden() const { return w_hidden_; }
  double temperature() const { return temperature_; }
  int effective_bits() const { return effective_bits_; }

  CalibratorConfig with_effective_bits(int bits) const;

  friend bool operator==(const CalibratorConfig&, const CalibratorConfig&) = default;

 private:
  double h_max_;
  double w_entropy_;
  double w_trace_;
  double w_hidden_;
  double temperature_;
  int effective_bits_;
};

/// clip(entropy / h_max, 0, 1). Throws Error(kInvalidInput) on non-finite
/// entropy or non-positive h_max.
double normalized_uncertainty(double entropy, double h_max);

/// Bit-width confidence scale: conservative at 4 bits and below, neutral up
/// to 8, slightly optimistic above.
double bit_scale(int bits);

/// Weighted combination of the three signals before bit scaling.
double raw_confidence(const SignalReadout& readout, const CalibratorConfig& cfg);

/// Bit-scaled, clipped, temperature-adjusted confidence in [0, 1].
double confidence(const SignalReadout& readout, const CalibratorConfig& cfg);

}  // namespace bitcal
