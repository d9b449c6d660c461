#include "bitcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "bitcal/error.hpp"
#include "json.hpp"

namespace bitcal {

using nlohmann::ordered_json;

namespace {

constexpr std::string_view kMarker = "####";

std::string expand_template(const std::string& text, Tokens step) {
  static constexpr std::string_view kPlaceholder = "{step}";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t at = text.find(kPlaceholder, pos);
    if (at == std::string::npos) break;
    out.append(text, pos, at - pos);
    out += std::to_string(step);
    pos = at + kPlaceholder.size();
  }
  out.append(text, pos);
  return out;
}

bool covers(Tokens start, Tokens stop, std::optional<Tokens> offset) {
  return offset && *offset > start && *offset <= stop;
}

class ScriptedSource final : public TokenSource {
 public:
  ScriptedSource(Scenario scenario, Tokens chunk_size)
      : scenario_(std::move(scenario)),
        chunk_size_(chunk_size),
        end_(scenario_.eos_at),
        phase_(scenario_.hidden_phase) {}

  std::optional<SourceStep> next(Tokens max_tokens) override {
    if (end_ && emitted_ >= *end_) return std::nullopt;
    Tokens n = std::min(chunk_size_, max_tokens);
    if (end_) n = std::min(n, *end_ - emitted_);
    if (n < 1) return std::nullopt;
    const Tokens start = emitted_;
    const Tokens stop = start + n;
    const Segment& seg = segment_for(stop - 1);

    SourceStep step;
    std::string text = expand_template(seg.text, index_);
    if (covers(start, stop, scenario_.marker_at)) {
      text += "\n";
      text += answer_line(kMarker, scenario_.provisional_answer.value_or(scenario_.emitted_answer));
    }
    if (covers(start, stop, scenario_.revision_at)) {
      text += "\n";
      text += answer_line(kMarker, scenario_.emitted_answer);
    }
    text += "\n";
    step.signals.chunk_text = std::move(text);
    step.signals.tokens_in_chunk = n;
    if (seg.distribution) {
      step.signals.distribution = *seg.distribution;
    } else {
      step.signals.distribution = EntropyValue{*seg.entropy};
    }
    if (seg.hidden_angle) {
      if (hidden_started_) phase_ += *seg.hidden_angle;
      hidden_started_ = true;
      step.signals.hidden = std::vector<double>{std::cos(phase_), std::sin(phase_)};
    }
    step.eos = end_ && stop == *end_;

    emitted_ = stop;
    ++index_;
    return step;
  }

 private:
  const Segment& segment_for(Tokens token_index) const {
    Tokens offset = 0;
    for (const Segment& seg : scenario_.segments) {
      offset += seg.length;
      if (token_index < offset) return seg;
    }
    return scenario_.segments.back();
  }

  Scenario scenario_;
  Tokens chunk_size_;
  std::optional<Tokens> end_;
  Tokens emitted_ = 0;
  Tokens index_ = 0;
  double phase_;
  bool hidden_started_ = false;
};

// Builders for the built-in suite.
constexpr std::string_view kSteadyText = "so the running total stays 3 * 4 = 12";
constexpr std::string_view kDriftText = "step {step}: re-reading the quantities in the problem";

Segment steady(Tokens length, double entropy, std::optional<double> angle = std::nullopt) {
  return Segment{length, entropy, std::nullopt, std::string(kSteadyText), angle};
}

Segment drifting(Tokens length, double entropy) {
  return Segment{length, entropy, std::nullopt, std::string(kDriftText), std::nullopt};
}

template <typename T>
std::optional<T> optional_field(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

void check_keys(const ordered_json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw Error(ErrorKind::kParse, fmt::format("{}: unknown key '{}'", where, item.key()));
    }
  }
}

}  // namespace

Tokens Scenario::total_length() const {
  Tokens total = 0;
  for (const Segment& seg : segments) total += seg.length;
  return total;
}

void Scenario::validate() const {
  const auto fail = [this](const std::string& msg) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("scenario '{}': {}", scenario_id, msg));
  };
  if (scenario_id.empty()) fail("scenario_id must be non-empty");
  if (segments.empty()) fail("at least one segment is required");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    if (seg.length < 1) fail(fmt::format("segment {} has non-positive length", i));
    if (seg.entropy.has_value() == seg.distribution.has_value()) {
      fail(fmt::format("segment {} needs exactly one of entropy and distribution", i));
    }
    if (seg.entropy && (!std::isfinite(*seg.entropy) || *seg.entropy < 0.0)) {
      fail(fmt::format("segment {} entropy must be finite and >= 0", i));
    }
    if (seg.distribution) {
      try {
        (void)entropy(std::span<const double>(*seg.distribution));
      } catch (const Error& e) {
        fail(fmt::format("segment {}: {}", i, e.what()));
      }
    }
    if (seg.hidden_angle && !std::isfinite(*seg.hidden_angle)) {
      fail(fmt::format("segment {} hidden_angle must be finite", i));
    }
  }
  const Tokens total = total_length();
  const auto check_offset = [&](std::optional<Tokens> offset, const char* name) {
    if (offset && (*offset < 1 || *offset > total)) {
      fail(fmt::format("{} = {} outside [1, {}]", name, *offset, total));
    }
  };
  check_offset(marker_at, "marker_at");
  check_offset(eos_at, "eos_at");
  check_offset(revision_at, "revision_at");
  if (provisional_answer.has_value() != revision_at.has_value()) {
    fail("provisional_answer and revision_at must be given together");
  }
  if (revision_at && (!marker_at || *revision_at <= *marker_at)) {
    fail("revision_at must come after marker_at");
  }
  if (!std::isfinite(gold_answer) || !std::isfinite(emitted_answer) ||
      !std::isfinite(hidden_phase)) {
    fail("answers and hidden_phase must be finite");
  }
}

std::unique_ptr<TokenSource> scenario_source(const Scenario& scenario, Tokens chunk_size) {
  if (chunk_size < 1) {
    throw Error(ErrorKind::kInvalidConfig,
                fmt::format("chunk_size must be >= 1 (got {})", chunk_size));
  }
  scenario.validate();
  return std::make_unique<ScriptedSource>(scenario, chunk_size);
}

std::string answer_line(std::string_view marker, double answer) {
  return fmt::format("{} {}", marker, answer);
}

std::vector<Scenario> builtin_scenario_suite() {
  std::vector<Scenario> suite;

  // Low entropy on a repeated intermediate line: both controlled variants
  // clear the confidence threshold at the floor, long before the answer.
  {
    Scenario s;
    s.scenario_id = "early_confident_wrong";
    s.description = "repeated partial computation with low entropy; answer only at 240";
    s.segments = {steady(512, 1.0)};
    s.marker_at = 240;
    s.eos_at = 256;
    s.gold_answer = 12;
    s.emitted_answer = 12;
    suite.push_back(s);
  }
  // First marker line is wrong and is revised one chunk later; only a
  // confirmation tail sees the revision.
  {
    Scenario s;
    s.scenario_id = "marker_then_revision";
    s.description = "first answer line 41 revised to 42 one chunk after the marker";
    s.segments = {drifting(160, 3.0), steady(352, 0.5)};
    s.marker_at = 160;
    s.provisional_answer = 41;
    s.revision_at = 176;
    s.eos_at = 256;
    s.gold_answer = 42;
    s.emitted_answer = 42;
    suite.push_back(s);
  }
  {
    Scenario s;
    s.scenario_id = "high_entropy_escalation";
    s.description = "entropy above the escalation threshold for the whole trace";
    s.segments = {drifting(512, 4.5)};
    s.marker_at = 384;
    s.eos_at = 400;
    s.gold_answer = 7;
    s.emitted_answer = 7;
    suite.push_back(s);
  }
  // Mid-range entropy and no answer until just past the buffer edge of a
  // 512-token budget.
  {
    Scenario s;
    s.scenario_id = "buffer_stop_edge";
    s.description = "undecided trace whose answer lands inside the last budget buffer";
    s.segments = {drifting(1024, 3.0)};
    s.marker_at = 500;
    s.eos_at = 520;
    s.gold_answer = 150;
    s.emitted_answer = 150;
    suite.push_back(s);
  }
  {
    Scenario s;
    s.scenario_id = "eos_before_floor";
    s.description = "short solution that ends before any halting decision is allowed";
    s.segments = {steady(100, 0.5)};
    s.marker_at = 90;
    s.eos_at = 100;
    s.gold_answer = 18;
    s.emitted_answer = 18;
    suite.push_back(s);
  }
  // Marker at 96 with a 4-bit tail of 32: the tail is already satisfied the
  // moment the floor lets the controller act.
  {
    Scenario s;
    s.scenario_id = "marker_before_floor";
    s.description = "answer line at 96, before the 128-token floor";
    s.segments = {steady(512, 0.5)};
    s.marker_at = 96;
    s.eos_at = 300;
    s.gold_answer = 3;
    s.emitted_answer = 3;
    suite.push_back(s);
  }
  // cos(angle) = 0.4 puts raw confidence at 0.79: above the threshold when
  // scaled by 1.05, below it when scaled by 0.85.
  {
    Scenario s;
    s.scenario_id = "confidence_scale_save";
    s.description = "borderline confidence separated only by the bit-width scale";
    s.segments = {steady(512, 1.5, std::acos(0.4))};
    s.marker_at = 200;
    s.eos_at = 300;
    s.gold_answer = 64;
    s.emitted_answer = 64;
    suite.push_back(s);
  }
  {
    Scenario s;
    s.scenario_id = "clean_marker";
    s.description = "undecided reasoning, then a correct answer line at 160 and low entropy";
    s.segments = {drifting(160, 3.0), steady(352, 0.5)};
    s.marker_at = 160;
    s.gold_answer = 42;
    s.emitted_answer = 42;
    suite.push_back(s);
  }
  // Uniform over 32 symbols: ln 32 ~ 3.47 nats, between the stop and
  // escalate thresholds.
  {
    Scenario s;
    s.scenario_id = "distribution_adapter";
    s.description = "full probability vectors instead of precomputed entropy";
    Segment seg;
    seg.length = 512;
    seg.distribution = std::vector<double>(32, 1.0 / 32.0);
    seg.text = std::string(kSteadyText);
    s.segments = {seg};
    s.marker_at = 150;
    s.eos_at = 320;
    s.gold_answer = 1250;
    s.emitted_answer = 1250;
    suite.push_back(s);
  }
  // Hidden direction turning by 2 rad per step: negative cosine, clipped to
  // zero, keeps confidence under the threshold despite low entropy.
  {
    Scenario s;
    s.scenario_id = "hidden_drift";
    s.description = "low entropy but an unsettled hidden state";
    s.segments = {steady(512, 1.8, 2.0)};
    s.marker_at = 300;
    s.eos_at = 400;
    s.gold_answer = 0.5;
    s.emitted_answer = 0.5;
    suite.push_back(s);
  }
  return suite;
}

const Scenario& builtin_scenario(std::string_view scenario_id) {
  static const std::vector<Scenario> suite = builtin_scenario_suite();
  for (const Scenario& s : suite) {
    if (s.scenario_id == scenario_id) return s;
  }
  throw Error(ErrorKind::kInvalidInput, fmt::format("no built-in scenario '{}'", scenario_id));
}

std::string scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["schema"] = kScenarioSchema;
  j["scenario_id"] = s.scenario_id;
  j["description"] = s.description;
  j["gold_answer"] = s.gold_answer;
  j["emitted_answer"] = s.emitted_answer;
  if (s.marker_at) j["marker_at"] = *s.marker_at;
  if (s.eos_at) j["eos_at"] = *s.eos_at;
  if (s.provisional_answer) j["provisional_answer"] = *s.provisional_answer;
  if (s.revision_at) j["revision_at"] = *s.revision_at;
  j["hidden_phase"] = s.hidden_phase;
  j["segments"] = ordered_json::array();
  for (const Segment& seg : s.segments) {
    ordered_json js;
    js["length"] = seg.length;
    if (seg.entropy) js["entropy"] = *seg.entropy;
    if (seg.distribution) js["distribution"] = *seg.distribution;
    js["text"] = seg.text;
    if (seg.hidden_angle) js["hidden_angle"] = *seg.hidden_angle;
    j["segments"].push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(std::string_view text, std::string_view origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, fmt::format("{}: {}", origin, e.what()));
  }
  Scenario s;
  try {
    if (!j.is_object()) throw Error(ErrorKind::kParse, fmt::format("{}: expected an object", origin));
    check_keys(j,
               {"schema", "scenario_id", "description", "gold_answer", "emitted_answer",
                "marker_at", "eos_at", "provisional_answer", "revision_at", "hidden_phase",
                "segments"},
               origin);
    const std::string schema = j.at("schema").get<std::string>();
    if (schema != kScenarioSchema) {
      throw Error(ErrorKind::kUnsupportedVersion,
                  fmt::format("{}: unsupported scenario schema '{}'", origin, schema));
    }
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.description = j.value("description", std::string{});
    s.gold_answer = j.at("gold_answer").get<double>();
    s.emitted_answer = j.at("emitted_answer").get<double>();
    s.marker_at = optional_field<Tokens>(j, "marker_at");
    s.eos_at = optional_field<Tokens>(j, "eos_at");
    s.provisional_answer = optional_field<double>(j, "provisional_answer");
    s.revision_at = optional_field<Tokens>(j, "revision_at");
    s.hidden_phase = j.value("hidden_phase", 0.0);
    for (const auto& js : j.at("segments")) {
      const std::string where = fmt::format("{}: segment {}", origin, s.segments.size());
      check_keys(js, {"length", "entropy", "distribution", "text", "hidden_angle"}, where);
      Segment seg;
      seg.length = js.at("length").get<Tokens>();
      seg.entropy = optional_field<double>(js, "entropy");
      seg.distribution = optional_field<std::vector<double>>(js, "distribution");
      seg.text = js.at("text").get<std::string>();
      seg.hidden_angle = optional_field<double>(js, "hidden_angle");
      s.segments.push_back(std::move(seg));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("{}: {}", origin, e.what()));
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kParse, fmt::format("{}: {}", origin, e.what()));
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open scenario file {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scenario_from_json(buffer.str(), path.string());
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write scenario file {}", path.string()));
  out << scenario_to_json(scenario);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed for {}", path.string()));
}

std::vector<Scenario> load_scenario_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorKind::kIo, fmt::format("scenario directory {} does not exist", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& file : files) out.push_back(load_scenario(file));
  std::sort(out.begin(), out.end(),
            [](const Scenario& a, const Scenario& b) { return a.scenario_id < b.scenario_id; });
  return out;
}

}  // namespace bitcal
