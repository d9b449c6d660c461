#include <cmath>

#include "bitcal/calibrator.hpp"
#include "bitcal/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bitcal;

namespace {

SignalReadout readout(double h, double tr, double hid) {
  SignalReadout r;
  r.entropy = h;
  r.trace_stability = tr;
  r.hidden_stability = hid;
  r.hidden_stability_raw = hid;
  return r;
}

CalibratorConfig with_bits(int bits, double temperature = 1.0) {
  CalibratorConfig::Params p;
  p.effective_bits = bits;
  p.temperature = temperature;
  return CalibratorConfig(p);
}

// Direct evaluation of the weighted score with the default weights.
double oracle_confidence(double h, double tr, double hid, int bits, double gamma) {
  const double u = std::clamp(h / 10.0, 0.0, 1.0);
  const double raw = 0.40 * (1.0 - u) + 0.35 * tr + 0.25 * hid;
  const double s = bits <= 4 ? 0.85 : (bits <= 8 ? 1.00 : 1.05);
  const double c = std::clamp(raw * s, 0.0, 1.0);
  return std::clamp(std::pow(c, 1.0 / gamma), 0.0, 1.0);
}

}  // namespace

TEST_CASE("normalized uncertainty") {
  CHECK(normalized_uncertainty(0.0, 10.0) == 0.0);
  CHECK(normalized_uncertainty(10.0, 10.0) == 1.0);
  CHECK(normalized_uncertainty(11.9, 10.0) == 1.0);
  CHECK(normalized_uncertainty(2.5, 10.0) == 0.25);
  CHECK_THROWS_AS(normalized_uncertainty(NAN, 10.0), Error);
  CHECK_THROWS_AS(normalized_uncertainty(INFINITY, 10.0), Error);
}

TEST_CASE("bit scale steps") {
  CHECK(bit_scale(1) == 0.85);
  CHECK(bit_scale(4) == 0.85);
  CHECK(bit_scale(5) == 1.00);
  CHECK(bit_scale(8) == 1.00);
  CHECK(bit_scale(9) == 1.05);
  CHECK(bit_scale(16) == 1.05);
}

TEST_CASE("confidence examples") {
  CHECK(confidence(readout(0, 1, 1), with_bits(16)) == 1.0);
  CHECK(confidence(readout(0, 1, 1), with_bits(4)) == doctest::Approx(0.85).epsilon(1e-12));
  for (int bits : {2, 4, 8, 16}) CHECK(confidence(readout(10, 0, 0), with_bits(bits)) == 0.0);
}

TEST_CASE("config validation and renormalization") {
  CalibratorConfig::Params p;
  p.w_entropy = 4;
  p.w_trace = 3.5;
  p.w_hidden = 2.5;
  const CalibratorConfig cfg(p);
  CHECK(cfg.w_entropy() == doctest::Approx(0.40).epsilon(1e-12));
  CHECK(cfg.w_trace() == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(cfg.w_hidden() == doctest::Approx(0.25).epsilon(1e-12));

  const auto rejects = [](CalibratorConfig::Params q) {
    try {
      CalibratorConfig c(q);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::kInvalidConfig;
    }
    return false;
  };
  CalibratorConfig::Params bad;
  bad.w_entropy = bad.w_trace = bad.w_hidden = 0;
  CHECK(rejects(bad));
  bad = {};
  bad.w_trace = -0.1;
  CHECK(rejects(bad));
  bad = {};
  bad.temperature = 0;
  CHECK(rejects(bad));
  bad = {};
  bad.h_max = 0;
  CHECK(rejects(bad));
  bad = {};
  bad.effective_bits = 0;
  CHECK(rejects(bad));
}

TEST_CASE("confidence matches direct evaluation") {
  testing::Rng rng(21);
  for (int trial = 0; trial < 10000; ++trial) {
    const double h = rng.uniform(0.0, 14.0);
    const double tr = rng.uniform(0.0, 1.0);
    const double hid = rng.uniform(0.0, 1.0);
    const int bits = static_cast<int>(rng.integer(1, 16));
    const double gamma = rng.coin() ? 1.0 : rng.uniform(0.2, 3.0);
    const double c = confidence(readout(h, tr, hid), with_bits(bits, gamma));
    CHECK(testing::close(c, oracle_confidence(h, tr, hid, bits, gamma), 1e-12));
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    const CalibratorConfig plain = with_bits(bits);
    const double scaled = raw_confidence(readout(h, tr, hid), plain) * bit_scale(bits);
    if (scaled <= 1.0) CHECK(testing::close(confidence(readout(h, tr, hid), plain), scaled, 1e-15));
  }
}

TEST_CASE("confidence monotonicity and bit ordering") {
  testing::Rng rng(22);
  for (int trial = 0; trial < 10000; ++trial) {
    const double h = rng.uniform(0.0, 12.0);
    const double tr = rng.uniform(0.0, 1.0);
    const double hid = rng.uniform(0.0, 1.0);
    const double gamma = rng.coin() ? 1.0 : rng.uniform(0.2, 3.0);
    const int bits = static_cast<int>(rng.integer(1, 16));
    const CalibratorConfig cfg = with_bits(bits, gamma);
    const double c = confidence(readout(h, tr, hid), cfg);
    CHECK(confidence(readout(h + rng.uniform(0.0, 3.0), tr, hid), cfg) <= c);
    CHECK(confidence(readout(h, std::min(1.0, tr + rng.uniform(0.0, 0.5)), hid), cfg) >= c);
    CHECK(confidence(readout(h, tr, std::min(1.0, hid + rng.uniform(0.0, 0.5))), cfg) >= c);
    const double c4 = confidence(readout(h, tr, hid), with_bits(4, gamma));
    const double c8 = confidence(readout(h, tr, hid), with_bits(8, gamma));
    const double c16 = confidence(readout(h, tr, hid), with_bits(16, gamma));
    CHECK(c4 <= c8);
    CHECK(c8 <= c16);
  }
}

TEST_CASE("uniform weight scaling leaves confidence unchanged") {
  testing::Rng rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    CalibratorConfig::Params p;
    p.w_entropy = rng.uniform(0.0, 1.0);
    p.w_trace = rng.uniform(0.0, 1.0);
    p.w_hidden = rng.uniform(0.01, 1.0);
    p.effective_bits = static_cast<int>(rng.integer(1, 16));
    CalibratorConfig::Params q = p;
    const double lambda = rng.uniform(0.001, 1000.0);
    q.w_entropy *= lambda;
    q.w_trace *= lambda;
    q.w_hidden *= lambda;
    const SignalReadout r = readout(rng.uniform(0, 12), rng.uniform(0, 1), rng.uniform(0, 1));
    CHECK(testing::close(confidence(r, CalibratorConfig(p)), confidence(r, CalibratorConfig(q)), 1e-12));
  }
}
