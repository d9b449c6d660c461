#include "bitcal/calibrator.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bitcal/error.hpp"

namespace bitcal {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::kInvalidConfig, message);
}

}  // namespace

CalibratorConfig::CalibratorConfig(const Params& params) {
  require(std::isfinite(params.h_max) && params.h_max > 0.0,
          fmt::format("h_max must be > 0 (got {})", params.h_max));
  require(std::isfinite(params.temperature) && params.temperature > 0.0,
          fmt::format("temperature must be > 0 (got {})", params.temperature));
  for (double w : {params.w_entropy, params.w_trace, params.w_hidden}) {
    require(std::isfinite(w) && w >= 0.0, fmt::format("signal weights must be >= 0 (got {})", w));
  }
  const double total = params.w_entropy + params.w_trace + params.w_hidden;
  require(total > 0.0, "signal weights must not all be zero");
  require(params.effective_bits >= 1,
          fmt::format("effective_bits must be >= 1 (got {})", params.effective_bits));

  h_max_ = params.h_max;
  w_entropy_ = params.w_entropy / total;
  w_trace_ = params.w_trace / total;
  w_hidden_ = params.w_hidden / total;
  temperature_ = params.temperature;
  effective_bits_ = params.effective_bits;
}

CalibratorConfig CalibratorConfig::with_effective_bits(int bits) const {
  require(bits >= 1, fmt::format("effective_bits must be >= 1 (got {})", bits));
  CalibratorConfig copy = *this;
  copy.effective_bits_ = bits;
  return copy;
}

double normalized_uncertainty(double entropy, double h_max) {
  if (!std::isfinite(entropy)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("entropy {} is not finite", entropy));
  }
  if (!(h_max > 0.0) || !std::isfinite(h_max)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("h_max {} must be > 0", h_max));
  }
  return std::clamp(entropy / h_max, 0.0, 1.0);
}

double bit_scale(int bits) {
  if (bits <= 4) return 0.85;
  if (bits <= 8) return 1.00;
  return 1.05;
}

double raw_confidence(const SignalReadout& readout, const CalibratorConfig& cfg) {
  const double u = normalized_uncertainty(readout.entropy, cfg.h_max());
  return cfg.w_entropy() * (1.0 - u) + cfg.w_trace() * readout.trace_stability +
         cfg.w_hidden() * readout.hidden_stability;
}

double confidence(const SignalReadout& readout, const CalibratorConfig& cfg) {
  const double raw = raw_confidence(readout, cfg);
  double c = std::clamp(raw * bit_scale(cfg.effective_bits()), 0.0, 1.0);
  if (cfg.temperature() != 1.0) {
    c = std::clamp(std::pow(c, 1.0 / cfg.temperature()), 0.0, 1.0);
  }
  return c;
}

}  // namespace bitcal
