#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bitcal/engine.hpp"

namespace bitcal {

inline constexpr std::string_view kTraceSchema = "bitcal.trace/1";
inline constexpr std::string_view kRecordsSchema = "bitcal.records/1";

struct TraceMetadata {
  std::string example_id;
  double gold_answer = 0.0;
  std::string model;
  int served_bits = 4;
  std::string prompt_digest;
  // Controller that produced the log, when known.
  std::optional<Method> producer;
  // Budget of the producing run, when known.
  std::optional<Tokens> budget;

  friend bool operator==(const TraceMetadata&, const TraceMetadata&) = default;
};

struct TraceFile {
  TraceMetadata metadata;
  std::vector<SourceStep> steps;
};

/// Parses a trace from JSON-lines text. Throws Error(kParse) naming the
/// 1-based line for malformed input and Error(kUnsupportedVersion) for an
/// unknown schema.
TraceFile parse_trace(std::string_view text, std::string_view origin = "<memory>");
std::string format_trace(const TraceFile& trace);

TraceFile read_trace_file(const std::filesystem::path& path);
void write_trace_file(const TraceFile& trace, const std::filesystem::path& path);

/// Replays the logged steps in order. A logged chunk larger than the
/// requested size is a source failure, since chunks cannot be split.
std::unique_ptr<TokenSource> trace_source(TraceFile trace);

struct LoadedTrace {
  TraceMetadata metadata;
  std::unique_ptr<TokenSource> source;
};

/// Reads `path` and returns its metadata with a replaying source.
LoadedTrace read_trace(const std::filesystem::path& path);

/// Logs what `source` produces under uncontrolled decoding up to `budget`
/// tokens, in chunks of `chunk_size`.
TraceFile capture_trace(TokenSource& source, TraceMetadata metadata, Tokens budget,
                        Tokens chunk_size);

/// True when `method` is not the controller that produced the trace. Traces
/// without a known producer count as counterfactual.
bool is_counterfactual_replay(const TraceMetadata& metadata, Method method);

std::string format_records(const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> parse_records(std::string_view text, std::string_view origin = "<memory>");

/// Header line followed by one record per line.
void write_records(const std::vector<EpisodeRecord>& records, const std::filesystem::path& path);
std::vector<EpisodeRecord> read_records(const std::filesystem::path& path);

/// Reads a whole file; throws Error(kIo) with the path on failure.
std::string read_text_file(const std::filesystem::path& path);
/// Writes a whole file; throws Error(kIo) with the path on failure.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace bitcal
