#include <functional>
#include <string>
#include <vector>

#include "bitcal/engine.hpp"
#include "bitcal/error.hpp"
#include "bitcal/simulator.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bitcal;

namespace {

// Emits full chunks of constant entropy until `eos_at`, with optional text
// per step. Counts every token it hands out.
class CountingSource : public TokenSource {
 public:
  using TextFn = std::function<std::string(Tokens start, Tokens stop)>;

  CountingSource(std::optional<Tokens> eos_at, double entropy, TextFn text)
      : eos_at_(eos_at), entropy_(entropy), text_(std::move(text)) {}

  std::optional<SourceStep> next(Tokens max_tokens) override {
    if (eos_at_ && emitted_ >= *eos_at_) return std::nullopt;
    Tokens n = max_tokens;
    if (eos_at_) n = std::min(n, *eos_at_ - emitted_);
    SourceStep step;
    step.signals.tokens_in_chunk = n;
    step.signals.distribution = EntropyValue{entropy_};
    step.signals.chunk_text = text_ ? text_(emitted_, emitted_ + n) : "";
    emitted_ += n;
    step.eos = eos_at_ && emitted_ == *eos_at_;
    return step;
  }

  Tokens emitted() const { return emitted_; }

 private:
  std::optional<Tokens> eos_at_;
  double entropy_;
  TextFn text_;
  Tokens emitted_ = 0;
};

// Replays a fixed list of steps regardless of what is requested.
class ListSource : public TokenSource {
 public:
  explicit ListSource(std::vector<SourceStep> steps) : steps_(std::move(steps)) {}
  std::optional<SourceStep> next(Tokens) override {
    if (cursor_ >= steps_.size()) return std::nullopt;
    return steps_[cursor_++];
  }

 private:
  std::vector<SourceStep> steps_;
  std::size_t cursor_ = 0;
};

class ThrowingSource : public TokenSource {
 public:
  std::optional<SourceStep> next(Tokens max_tokens) override {
    if (++calls_ > 3) throw Error(ErrorKind::kSourceFailure, "device lost");
    SourceStep s;
    s.signals.tokens_in_chunk = max_tokens;
    s.signals.chunk_text = "working";
    return s;
  }

 private:
  int calls_ = 0;
};

EngineConfig config(Method method, Tokens budget = 512, int bits = 4) {
  EngineConfig cfg;
  cfg.method = method;
  cfg.budget = budget;
  cfg.served_bits = bits;
  return cfg;
}

}  // namespace

TEST_CASE("fixed decoding halts at end-of-sequence without an early halt") {
  CountingSource source(281, 1.0, nullptr);
  const EpisodeRecord r = run_episode(source, config(Method::kFixed), 0.0, "fixed-281");
  CHECK(r.tokens_used == 281);
  CHECK(r.stop_cause == StopCause::kEos);
  CHECK_FALSE(r.early_halt);
  CHECK(r.actions.empty());
  CHECK(r.steps == 18);
}

TEST_CASE("tail delays the bitcal stop by two chunks at four bits") {
  const Scenario& s = builtin_scenario("clean_marker");
  auto a = scenario_source(s, 16);
  const EpisodeRecord bitcal = run_episode(*a, config(Method::kBitcal), s.gold_answer, s.scenario_id);
  CHECK(bitcal.tokens_used == 192);
  CHECK(bitcal.stop_cause == StopCause::kTailStop);
  CHECK(bitcal.first_marker_tokens == 160);
  CHECK(bitcal.correct);
  auto b = scenario_source(s, 16);
  const EpisodeRecord adaptive = run_episode(*b, config(Method::kAdaptive), s.gold_answer, s.scenario_id);
  CHECK(adaptive.tokens_used == 160);
  CHECK(adaptive.stop_cause == StopCause::kTailStop);
  CHECK(adaptive.effective_bits == 16);
  CHECK(bitcal.effective_bits == 4);
}

TEST_CASE("final request is truncated to the remaining budget") {
  CountingSource source(std::nullopt, 3.0, nullptr);
  EngineConfig cfg = config(Method::kFixed, 500);
  const EpisodeRecord r = run_episode(source, cfg, 0.0, "cap");
  CHECK(r.tokens_used == 500);
  CHECK(source.emitted() == 500);
  CHECK(r.stop_cause == StopCause::kBudgetExhausted);
  CHECK(r.steps == 32);
}

TEST_CASE("budget exhausted while the floor holds") {
  CountingSource source(std::nullopt, 1.0, nullptr);
  const EpisodeRecord r = run_episode(source, config(Method::kBitcal, 64), 0.0, "tiny");
  CHECK(r.tokens_used == 64);
  CHECK(r.stop_cause == StopCause::kFloorExhaustedBudget);
  CHECK_FALSE(r.early_halt);
}

TEST_CASE("end-of-sequence takes precedence over a same-step decision") {
  // Step 8 reaches the floor with a confident readout and also ends the sequence.
  CountingSource source(128, 0.1, [](Tokens, Tokens) { return std::string("the same stable text"); });
  const EpisodeRecord r = run_episode(source, config(Method::kAdaptive), 0.0, "eos");
  CHECK(r.stop_cause == StopCause::kEos);
  CHECK(r.actions.size() == 7);
  CHECK_FALSE(r.early_halt);
}

TEST_CASE("source failures produce errored records") {
  SUBCASE("exhausted without end-of-sequence") {
    SourceStep s;
    s.signals.tokens_in_chunk = 16;
    ListSource source({s, s});
    const EpisodeRecord r = run_episode(source, config(Method::kFixed), 1.0, "short");
    CHECK(r.errored());
    CHECK(r.stop_cause == StopCause::kErrored);
    CHECK(r.tokens_used == 32);
    CHECK_FALSE(r.correct);
  }
  SUBCASE("oversized chunk") {
    SourceStep s;
    s.signals.tokens_in_chunk = 17;
    ListSource source({s});
    const EpisodeRecord r = run_episode(source, config(Method::kBitcal), 1.0, "big");
    CHECK(r.errored());
    CHECK(r.error->find("17") != std::string::npos);
    CHECK(r.tokens_used == 0);
  }
  SUBCASE("thrown failure") {
    ThrowingSource source;
    const EpisodeRecord r = run_episode(source, config(Method::kAdaptive), 1.0, "lost");
    CHECK(r.errored());
    CHECK(r.error->find("device lost") != std::string::npos);
  }
  SUBCASE("invalid distribution") {
    SourceStep s;
    s.signals.tokens_in_chunk = 16;
    s.signals.distribution = ProbabilityVector{0.9, 0.9};
    ListSource source({s});
    CHECK(run_episode(source, config(Method::kBitcal), 1.0, "bad-p").errored());
  }
}

TEST_CASE("invalid engine configs throw") {
  CountingSource source(100, 1.0, nullptr);
  EngineConfig cfg = config(Method::kBitcal, 8);
  CHECK_THROWS_AS(run_episode(source, cfg, 0.0, "x"), Error);
  cfg = config(Method::kBitcal);
  cfg.chunk_size = 0;
  CHECK_THROWS_AS(run_episode(source, cfg, 0.0, "x"), Error);
  cfg = config(Method::kBitcal, 512, 0);
  CHECK_THROWS_AS(run_episode(source, cfg, 0.0, "x"), Error);
}

TEST_CASE("answer extraction") {
  CHECK(extract_answer("reasoning ... #### 42", "####") == 42.0);
  CHECK(extract_answer("a #### 10 then more #### 1,234", "####") == 1234.0);
  CHECK_FALSE(extract_answer("no marker", "####").has_value());
  CHECK(extract_answer("#### $1,250.50", "####") == 1250.5);
  CHECK(extract_answer("#### -7", "####") == -7.0);
  CHECK(extract_answer("#### -$ 3", "####") == -3.0);
  CHECK(extract_answer("#### .5", "####") == 0.5);
  CHECK(extract_answer("#### 42.", "####") == 42.0);
  CHECK(extract_answer("#### the answer is 18 apples", "####") == 18.0);
  CHECK(extract_answer("####42\n", "####") == 42.0);
  CHECK_FALSE(extract_answer("#### none", "####").has_value());
  CHECK_FALSE(extract_answer("#### 3 ####", "####").has_value());
  CHECK(extract_answer("€12 ## 5", "##") == 5.0);
}

TEST_CASE("answer comparison") {
  CHECK(answers_match(42, 42));
  CHECK(answers_match(42.0000001, 42));
  CHECK_FALSE(answers_match(41, 42));
  CHECK(answers_match(1e-7, 0.0));
  CHECK_FALSE(answers_match(2e-6, 0.0));
  CHECK(answers_match(1000000.5, 1000000.0));
  CHECK_FALSE(answers_match(1000002.0, 1000000.0));
}

TEST_CASE("method and stop cause names round trip") {
  for (Method m : {Method::kFixed, Method::kAdaptive, Method::kBitcal}) CHECK(parse_method(to_string(m)) == m);
  for (StopCause c : {StopCause::kFloorExhaustedBudget, StopCause::kEos, StopCause::kBufferStop,
                      StopCause::kConfidentStop, StopCause::kEscalate, StopCause::kTailStop,
                      StopCause::kBudgetExhausted, StopCause::kErrored}) {
    CHECK(parse_stop_cause(to_string(c)) == c);
  }
  CHECK_FALSE(parse_method("adaptve").has_value());
}

TEST_CASE("randomized sources respect the budget and the record contracts") {
  testing::Rng rng(41);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tokens chunk = rng.integer(1, 32);
    const Tokens budget = rng.integer(chunk, 700);
    std::optional<Tokens> eos;
    if (rng.coin(0.6)) eos = rng.integer(1, 900);
    const std::optional<Tokens> marker_at = rng.coin(0.6) ? std::optional<Tokens>(rng.integer(1, 800)) : std::nullopt;
    const double h = rng.uniform(0.0, 6.0);
    const bool stable = rng.coin();
    CountingSource source(eos, h, [&](Tokens start, Tokens stop) {
      std::string text = stable ? "steady line of reasoning" : "step " + std::to_string(start);
      if (marker_at && *marker_at > start && *marker_at <= stop) text += " #### 5";
      return text;
    });
    EngineConfig cfg;
    cfg.chunk_size = chunk;
    cfg.budget = budget;
    cfg.method = static_cast<Method>(rng.integer(0, 2));
    cfg.served_bits = static_cast<int>(rng.integer(1, 16));
    const EpisodeRecord r = run_episode(source, cfg, 5.0, "fuzz");
    REQUIRE_FALSE(r.errored());
    CHECK(r.tokens_used <= budget);
    CHECK(source.emitted() == r.tokens_used);
    CHECK(r.correct == (r.predicted_answer.has_value() && answers_match(*r.predicted_answer, 5.0)));
    CHECK(r.early_halt == (cfg.method != Method::kFixed && r.tokens_used < budget &&
                           is_controller_stop(r.stop_cause)));
    if (cfg.method == Method::kFixed) {
      CHECK(r.actions.empty());
      CHECK((r.stop_cause == StopCause::kEos || r.stop_cause == StopCause::kBudgetExhausted));
      CHECK_FALSE(r.early_halt);
    } else {
      CHECK(static_cast<Tokens>(r.actions.size()) >= r.steps - 1);
    }
  }
}

TEST_CASE("forcing sixteen effective bits turns bitcal into adaptive") {
  for (const Scenario& s : builtin_scenario_suite()) {
    auto a = scenario_source(s, 16);
    auto b = scenario_source(s, 16);
    EngineConfig bit = config(Method::kBitcal);
    bit.effective_bits_override = 16;
    EpisodeRecord x = run_episode(*a, bit, s.gold_answer, s.scenario_id);
    const EpisodeRecord y = run_episode(*b, config(Method::kAdaptive), s.gold_answer, s.scenario_id);
    x.method = Method::kAdaptive;
    CHECK(x == y);
  }
}

TEST_CASE("episodes are deterministic") {
  for (const Scenario& s : builtin_scenario_suite()) {
    for (Method m : {Method::kFixed, Method::kAdaptive, Method::kBitcal}) {
      auto a = scenario_source(s, 16);
      auto b = scenario_source(s, 16);
      CHECK(run_episode(*a, config(m), s.gold_answer, s.scenario_id) ==
            run_episode(*b, config(m), s.gold_answer, s.scenario_id));
    }
  }
}
