#include "bitcal/trace_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <fmt/format.h>

#include "bitcal/error.hpp"
#include "json.hpp"

namespace bitcal {

using nlohmann::ordered_json;

namespace {

// Splits on '\n', dropping a trailing '\r' and skipping blank lines. Each
// entry carries its 1-based line number.
std::vector<std::pair<std::size_t, std::string_view>> split_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.emplace_back(number, line);
    pos = end + 1;
  }
  return lines;
}

[[noreturn]] void parse_fail(std::string_view origin, std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::kParse, fmt::format("{}:{}: {}", origin, line, msg));
}

ordered_json parse_line(std::string_view origin, std::size_t line, std::string_view text) {
  try {
    ordered_json j = ordered_json::parse(text);
    if (!j.is_object()) parse_fail(origin, line, "expected a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    parse_fail(origin, line, e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

void check_keys(const ordered_json& j, std::initializer_list<std::string_view> allowed,
                std::string_view origin, std::size_t line) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      parse_fail(origin, line, fmt::format("unknown key '{}'", item.key()));
    }
  }
}

void check_schema(const ordered_json& header, std::string_view expected, std::string_view origin) {
  if (!header.contains("schema") || !header.at("schema").is_string()) {
    parse_fail(origin, 1, "header has no schema field");
  }
  const std::string schema = header.at("schema").get<std::string>();
  if (schema != expected) {
    throw Error(ErrorKind::kUnsupportedVersion,
                fmt::format("{}:1: unsupported schema '{}' (expected '{}')", origin, schema,
                            expected));
  }
}

class ReplaySource final : public TokenSource {
 public:
  explicit ReplaySource(TraceFile trace) : trace_(std::move(trace)) {}

  std::optional<SourceStep> next(Tokens max_tokens) override {
    if (cursor_ >= trace_.steps.size()) return std::nullopt;
    const SourceStep& step = trace_.steps[cursor_];
    if (step.signals.tokens_in_chunk > max_tokens) {
      throw Error(ErrorKind::kSourceFailure,
                  fmt::format("trace {} step {} holds {} tokens but only {} were requested",
                              trace_.metadata.example_id, cursor_, step.signals.tokens_in_chunk,
                              max_tokens));
    }
    ++cursor_;
    return step;
  }

 private:
  TraceFile trace_;
  std::size_t cursor_ = 0;
};

ordered_json record_to_json(const EpisodeRecord& r) {
  ordered_json j;
  j["example_id"] = r.example_id;
  j["model"] = r.model;
  j["method"] = to_string(r.method);
  j["served_bits"] = r.served_bits;
  j["effective_bits"] = r.effective_bits;
  j["budget"] = r.budget;
  j["tokens_used"] = r.tokens_used;
  j["steps"] = r.steps;
  j["stop_cause"] = to_string(r.stop_cause);
  j["early_halt"] = r.early_halt;
  j["correct"] = r.correct;
  j["predicted_answer"] = r.predicted_answer ? ordered_json(*r.predicted_answer) : ordered_json();
  j["gold_answer"] = r.gold_answer;
  j["first_marker_tokens"] =
      r.first_marker_tokens ? ordered_json(*r.first_marker_tokens) : ordered_json();
  j["counterfactual_replay"] = r.counterfactual_replay;
  j["error"] = r.error ? ordered_json(*r.error) : ordered_json();
  j["actions"] = ordered_json::array();
  for (const ActionRecord& a : r.actions) {
    ordered_json ja;
    ja["action"] = to_string(a.action.kind);
    ja["reason"] = to_string(a.action.reason);
    ja["tokens"] = a.cumulative_tokens;
    ja["entropy"] = a.entropy;
    ja["confidence"] = a.confidence;
    j["actions"].push_back(std::move(ja));
  }
  j["generated_text"] = r.generated_text;
  return j;
}

EpisodeRecord record_from_json(const ordered_json& j, std::string_view origin, std::size_t line) {
  check_keys(j,
             {"example_id", "model", "method", "served_bits", "effective_bits", "budget",
              "tokens_used", "steps", "stop_cause", "early_halt", "correct", "predicted_answer",
              "gold_answer", "first_marker_tokens", "counterfactual_replay", "error", "actions",
              "generated_text"},
             origin, line);
  EpisodeRecord r;
  r.example_id = j.at("example_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  const std::string method = j.at("method").get<std::string>();
  const auto parsed_method = parse_method(method);
  if (!parsed_method) parse_fail(origin, line, fmt::format("unknown method '{}'", method));
  r.method = *parsed_method;
  r.served_bits = j.at("served_bits").get<int>();
  r.effective_bits = j.at("effective_bits").get<int>();
  r.budget = j.at("budget").get<Tokens>();
  r.tokens_used = j.at("tokens_used").get<Tokens>();
  r.steps = j.at("steps").get<Tokens>();
  const std::string cause = j.at("stop_cause").get<std::string>();
  const auto parsed_cause = parse_stop_cause(cause);
  if (!parsed_cause) parse_fail(origin, line, fmt::format("unknown stop_cause '{}'", cause));
  r.stop_cause = *parsed_cause;
  r.early_halt = j.at("early_halt").get<bool>();
  r.correct = j.at("correct").get<bool>();
  r.predicted_answer = optional_field<double>(j, "predicted_answer");
  r.gold_answer = j.at("gold_answer").get<double>();
  r.first_marker_tokens = optional_field<Tokens>(j, "first_marker_tokens");
  r.counterfactual_replay = j.value("counterfactual_replay", false);
  r.error = optional_field<std::string>(j, "error");
  for (const auto& ja : j.at("actions")) {
    check_keys(ja, {"action", "reason", "tokens", "entropy", "confidence"}, origin, line);
    ActionRecord a;
    const std::string kind = ja.at("action").get<std::string>();
    const std::string reason = ja.at("reason").get<std::string>();
    const auto parsed_kind = parse_action_kind(kind);
    const auto parsed_reason = parse_reason(reason);
    if (!parsed_kind || !parsed_reason || action_for(*parsed_reason) != *parsed_kind) {
      parse_fail(origin, line, fmt::format("invalid action {}/{}", kind, reason));
    }
    a.action = {*parsed_kind, *parsed_reason};
    a.cumulative_tokens = ja.at("tokens").get<Tokens>();
    a.entropy = ja.at("entropy").get<double>();
    a.confidence = ja.at("confidence").get<double>();
    r.actions.push_back(a);
  }
  r.generated_text = j.at("generated_text").get<std::string>();
  if (r.tokens_used > r.budget) {
    parse_fail(origin, line, fmt::format("tokens_used {} exceeds budget {}", r.tokens_used, r.budget));
  }
  if (r.correct && !r.predicted_answer) {
    parse_fail(origin, line, "correct record without a predicted answer");
  }
  return r;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::kIo, fmt::format("read failed for {}", path.string()));
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot open {} for writing", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed for {}", path.string()));
}

TraceFile parse_trace(std::string_view text, std::string_view origin) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_fail(origin, 1, "empty trace file");

  TraceFile trace;
  const auto& [header_line, header_text] = lines.front();
  const ordered_json header = parse_line(origin, header_line, header_text);
  check_schema(header, kTraceSchema, origin);
  try {
    check_keys(header,
               {"schema", "example_id", "gold_answer", "model", "served_bits", "prompt_digest",
                "producer", "budget"},
               origin, header_line);
    TraceMetadata& meta = trace.metadata;
    meta.example_id = header.at("example_id").get<std::string>();
    meta.gold_answer = header.at("gold_answer").get<double>();
    meta.model = header.at("model").get<std::string>();
    meta.served_bits = header.at("served_bits").get<int>();
    meta.prompt_digest = header.value("prompt_digest", std::string{});
    if (const auto producer = optional_field<std::string>(header, "producer")) {
      meta.producer = parse_method(*producer);
      if (!meta.producer) {
        parse_fail(origin, header_line, fmt::format("unknown producer '{}'", *producer));
      }
    }
    meta.budget = optional_field<Tokens>(header, "budget");
    if (meta.served_bits < 1) parse_fail(origin, header_line, "served_bits must be >= 1");
  } catch (const nlohmann::json::exception& e) {
    parse_fail(origin, header_line, e.what());
  }

  bool saw_eos = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [line_no, line_text] = lines[i];
    const ordered_json j = parse_line(origin, line_no, line_text);
    SourceStep step;
    try {
      check_keys(j, {"step", "text", "tokens", "entropy", "probs", "hidden", "eos"}, origin,
                 line_no);
      const auto index = j.at("step").get<std::int64_t>();
      if (index != static_cast<std::int64_t>(i - 1)) {
        parse_fail(origin, line_no,
                   fmt::format("step index {} where {} was expected (steps must be contiguous from 0)",
                               index, i - 1));
      }
      if (saw_eos) parse_fail(origin, line_no, "step after end-of-sequence");
      step.signals.chunk_text = j.at("text").get<std::string>();
      step.signals.tokens_in_chunk = j.at("tokens").get<Tokens>();
      const bool has_entropy = j.contains("entropy");
      const bool has_probs = j.contains("probs");
      if (has_entropy == has_probs) {
        parse_fail(origin, line_no, "exactly one of 'entropy' and 'probs' must be present");
      }
      if (has_entropy) {
        step.signals.distribution = EntropyValue{j.at("entropy").get<double>()};
      } else {
        step.signals.distribution = j.at("probs").get<std::vector<double>>();
      }
      step.signals.hidden = optional_field<std::vector<double>>(j, "hidden");
      step.eos = j.value("eos", false);
      saw_eos = step.eos;
      if (step.signals.tokens_in_chunk < 0 || (step.signals.tokens_in_chunk == 0 && !step.eos)) {
        parse_fail(origin, line_no, "tokens must be >= 1 (0 only on an end-of-sequence step)");
      }
    } catch (const nlohmann::json::exception& e) {
      parse_fail(origin, line_no, e.what());
    }
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

std::string format_trace(const TraceFile& trace) {
  const TraceMetadata& meta = trace.metadata;
  ordered_json header;
  header["schema"] = kTraceSchema;
  header["example_id"] = meta.example_id;
  header["gold_answer"] = meta.gold_answer;
  header["model"] = meta.model;
  header["served_bits"] = meta.served_bits;
  header["prompt_digest"] = meta.prompt_digest;
  if (meta.producer) header["producer"] = to_string(*meta.producer);
  if (meta.budget) header["budget"] = *meta.budget;

  std::string out = header.dump() + "\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const SourceStep& step = trace.steps[i];
    ordered_json j;
    j["step"] = i;
    j["text"] = step.signals.chunk_text;
    j["tokens"] = step.signals.tokens_in_chunk;
    if (const auto* probs = std::get_if<ProbabilityVector>(&step.signals.distribution)) {
      j["probs"] = *probs;
    } else {
      j["entropy"] = std::get<EntropyValue>(step.signals.distribution).nats;
    }
    if (step.signals.hidden) j["hidden"] = *step.signals.hidden;
    if (step.eos) j["eos"] = true;
    out += j.dump();
    out += "\n";
  }
  return out;
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  return parse_trace(read_text_file(path), path.string());
}

void write_trace_file(const TraceFile& trace, const std::filesystem::path& path) {
  write_text_file(path, format_trace(trace));
}

std::unique_ptr<TokenSource> trace_source(TraceFile trace) {
  return std::make_unique<ReplaySource>(std::move(trace));
}

LoadedTrace read_trace(const std::filesystem::path& path) {
  TraceFile trace = read_trace_file(path);
  TraceMetadata metadata = trace.metadata;
  return {std::move(metadata), trace_source(std::move(trace))};
}

TraceFile capture_trace(TokenSource& source, TraceMetadata metadata, Tokens budget,
                        Tokens chunk_size) {
  if (chunk_size < 1 || budget < 1) {
    throw Error(ErrorKind::kInvalidConfig, "capture needs budget >= 1 and chunk_size >= 1");
  }
  TraceFile trace;
  trace.metadata = std::move(metadata);
  trace.metadata.producer = Method::kFixed;
  trace.metadata.budget = budget;
  Tokens used = 0;
  while (used < budget) {
    std::optional<SourceStep> step = source.next(std::min(chunk_size, budget - used));
    if (!step) break;
    used += step->signals.tokens_in_chunk;
    const bool eos = step->eos;
    trace.steps.push_back(std::move(*step));
    if (eos) break;
  }
  return trace;
}

bool is_counterfactual_replay(const TraceMetadata& metadata, Method method) {
  return !metadata.producer || *metadata.producer != method;
}

std::string format_records(const std::vector<EpisodeRecord>& records) {
  ordered_json header;
  header["schema"] = kRecordsSchema;
  std::string out = header.dump() + "\n";
  for (const EpisodeRecord& r : records) {
    out += record_to_json(r).dump();
    out += "\n";
  }
  return out;
}

std::vector<EpisodeRecord> parse_records(std::string_view text, std::string_view origin) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_fail(origin, 1, "empty records file");
  check_schema(parse_line(origin, lines.front().first, lines.front().second), kRecordsSchema,
               origin);
  std::vector<EpisodeRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [line_no, line_text] = lines[i];
    const ordered_json j = parse_line(origin, line_no, line_text);
    try {
      records.push_back(record_from_json(j, origin, line_no));
    } catch (const nlohmann::json::exception& e) {
      parse_fail(origin, line_no, e.what());
    }
  }
  return records;
}

void write_records(const std::vector<EpisodeRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, format_records(records));
}

std::vector<EpisodeRecord> read_records(const std::filesystem::path& path) {
  return parse_records(read_text_file(path), path.string());
}

}  // namespace bitcal
