#include "bitcal/error.hpp"
#include "bitcal/policy.hpp"
#include "doctest.h"
#include "policy_oracle.hpp"
#include "support.hpp"

using namespace bitcal;

namespace {

PolicyConfig bits_cfg(int bits) {
  PolicyConfig::Params p;
  p.effective_bits = bits;
  return PolicyConfig(p);
}

const Action kFloorA{ActionKind::kContinue, Reason::kFloor};
const Action kBuffer{ActionKind::kStop, Reason::kBufferStop};
const Action kEscalateA{ActionKind::kEscalate, Reason::kEntropyEscalate};
const Action kConfident{ActionKind::kStop, Reason::kConfidentStop};
const Action kWait{ActionKind::kContinue, Reason::kTailWait};
const Action kTail{ActionKind::kStop, Reason::kTailStop};
const Action kDefault{ActionKind::kContinue, Reason::kDefaultContinue};

}  // namespace

TEST_CASE("tail length steps") {
  CHECK(tail_length(1) == 32);
  CHECK(tail_length(4) == 32);
  CHECK(tail_length(5) == 16);
  CHECK(tail_length(8) == 16);
  CHECK(tail_length(9) == 0);
  CHECK(tail_length(16) == 0);
}

TEST_CASE("marker state updates once") {
  MarkerState s = update_marker({}, "x #### 42", 160, "####");
  CHECK(s.first_marker_tokens == 160);
  s = update_marker(s, "x #### 42 #### 43", 200, "####");
  CHECK(s.first_marker_tokens == 160);
  CHECK_FALSE(update_marker({}, "no marker here", 96, "####").first_marker_tokens.has_value());
  // A marker split across chunks is found in the accumulated text.
  CHECK(update_marker({}, std::string("ab##") + "##cd", 32, "####").first_marker_tokens == 32);
}

TEST_CASE("decide examples") {
  const PolicyConfig d;
  CHECK(decide(100, 412, 1.0, 0.9, {}, d) == kFloorA);
  CHECK(decide(200, 16, 1.0, 0.9, {}, d) == kBuffer);
  CHECK(decide(200, 300, 4.5, 0.2, {}, d) == kEscalateA);
  CHECK(decide(200, 300, 1.5, 0.80, {}, d) == kConfident);
  CHECK(decide(170, 300, 0.1, 1.0, {150}, bits_cfg(4)) == kWait);
  CHECK(decide(182, 300, 9.0, 0.0, {150}, bits_cfg(4)) == kTail);
  CHECK(decide(150, 300, 9.0, 0.0, {150}, bits_cfg(16)) == kTail);
  CHECK(decide(200, 300, 3.0, 0.9, {}, d) == kDefault);
}

TEST_CASE("threshold boundaries are inclusive") {
  const PolicyConfig d;
  CHECK(decide(200, 300, 2.0, 0.75, {}, d) == kConfident);
  CHECK(decide(200, 300, 4.0, 1.0, {}, d) == kEscalateA);
  CHECK(decide(200, 32, 4.0, 1.0, {}, d) == kEscalateA);
  CHECK(decide(200, 31, 4.0, 1.0, {}, d) == kBuffer);
  CHECK(decide(128, 300, 3.0, 0.0, {}, d) == kDefault);
  CHECK(decide(127, 0, 9.0, 1.0, {}, d) == kFloorA);
}

TEST_CASE("marker before the floor uses the original marker count") {
  // Marker at 96: once the floor is met, 128 - 96 = 32 satisfies the 4-bit tail.
  CHECK(decide(112, 400, 0.5, 0.9, {96}, bits_cfg(4)) == kFloorA);
  CHECK(decide(128, 384, 0.5, 0.9, {96}, bits_cfg(4)) == kTail);
  // Marker at 97 leaves one token short.
  CHECK(decide(128, 384, 0.5, 0.9, {97}, bits_cfg(4)) == kWait);
}

TEST_CASE("config validation") {
  const auto rejects = [](PolicyConfig::Params p) {
    try {
      PolicyConfig c(std::move(p));
    } catch (const Error& e) {
      return e.kind() == ErrorKind::kInvalidConfig;
    }
    return false;
  };
  PolicyConfig::Params p;
  p.theta_h = 4.0;
  CHECK(rejects(p));
  p = {};
  p.floor_tokens = -1;
  CHECK(rejects(p));
  p = {};
  p.budget_buffer = -1;
  CHECK(rejects(p));
  p = {};
  p.marker = "";
  CHECK(rejects(p));
  p = {};
  p.effective_bits = 0;
  CHECK(rejects(p));
}

TEST_CASE("action and reason names round trip") {
  for (ActionKind k : {ActionKind::kContinue, ActionKind::kStop, ActionKind::kEscalate}) {
    CHECK(parse_action_kind(to_string(k)) == k);
  }
  for (Reason r : {Reason::kFloor, Reason::kBufferStop, Reason::kEntropyEscalate,
                   Reason::kConfidentStop, Reason::kTailWait, Reason::kTailStop,
                   Reason::kDefaultContinue}) {
    CHECK(parse_reason(to_string(r)) == r);
  }
  CHECK(to_string(Reason::kTailStop) == "TAIL_STOP");
  CHECK(action_for(Reason::kTailStop) == ActionKind::kStop);
  CHECK(action_for(Reason::kTailWait) == ActionKind::kContinue);
  CHECK(action_for(Reason::kEntropyEscalate) == ActionKind::kEscalate);
  CHECK_FALSE(parse_reason("tail_stop").has_value());
}

TEST_CASE("decide matches the oracle on the boundary grid") {
  const testing::PolicyGridResult r = testing::run_policy_grid();
  CHECK(r.points >= 10000);
  CHECK(r.mismatches == 0);
}

TEST_CASE("decide matches the oracle on random inputs") {
  testing::Rng rng(31);
  for (int trial = 0; trial < 20000; ++trial) {
    PolicyConfig::Params p;
    p.theta_h = rng.uniform(0.0, 5.0);
    p.theta_e = p.theta_h + rng.uniform(0.01, 5.0);
    p.theta_c = rng.uniform(0.0, 1.0);
    p.floor_tokens = rng.integer(0, 300);
    p.budget_buffer = rng.integer(0, 64);
    p.effective_bits = static_cast<int>(rng.integer(1, 16));
    const PolicyConfig cfg(p);
    const long long cum = rng.integer(0, 1024);
    const long long rem = rng.integer(0, 1024);
    const double h = rng.uniform(0.0, 12.0);
    const double c = rng.uniform(0.0, 1.0);
    std::optional<long long> marker;
    if (rng.coin()) marker = rng.integer(0, cum);
    const Action want = testing::oracle_decide(cum, rem, h, c, marker, p.effective_bits, p.theta_h,
                                               p.theta_c, p.theta_e, p.floor_tokens, p.budget_buffer);
    CHECK(decide(cum, rem, h, c, MarkerState{marker}, cfg) == want);
  }
}

TEST_CASE("post-marker decisions ignore the signals") {
  testing::Rng rng(32);
  for (int bits : {2, 4, 6, 8, 12, 16}) {
    const PolicyConfig cfg = bits_cfg(bits);
    for (long long cum = 128; cum <= 512; cum += 16) {
      for (long long marker = 0; marker <= cum; marker += 8) {
        const Action first = decide(cum, 512 - cum, 0.0, 1.0, {marker}, cfg);
        for (int k = 0; k < 10; ++k) {
          const Action other = decide(cum, rng.integer(0, 512), rng.uniform(0, 12), rng.uniform(0, 1), {marker}, cfg);
          CHECK(other == first);
        }
      }
    }
  }
}

TEST_CASE("tail wait is unreachable above eight bits") {
  for (int bits : {9, 12, 16, 32}) {
    const PolicyConfig cfg = bits_cfg(bits);
    for (long long cum = 0; cum <= 600; ++cum) {
      for (long long marker = std::max(0LL, cum - 40); marker <= cum; ++marker) {
        CHECK(decide(cum, 100, 1.0, 0.5, {marker}, cfg).reason != Reason::kTailWait);
      }
    }
  }
}

TEST_CASE("shrinking the remaining budget only moves toward a buffer stop") {
  testing::Rng rng(33);
  const PolicyConfig cfg;
  for (int trial = 0; trial < 2000; ++trial) {
    const long long cum = rng.integer(128, 1024);
    const double h = rng.uniform(0, 8);
    const double c = rng.uniform(0, 1);
    Action previous = decide(cum, 1024, h, c, {}, cfg);
    for (long long rem = 1024; rem >= 0; rem -= 7) {
      const Action a = decide(cum, rem, h, c, {}, cfg);
      if (previous == kBuffer) CHECK(a == kBuffer);
      CHECK((a == previous || a == kBuffer));
      previous = a;
    }
  }
}
