#include "bitcal/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <map>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "bitcal/error.hpp"
#include "bitcal/metrics.hpp"
#include "bitcal/simulator.hpp"
#include "bitcal/trace_io.hpp"
#include "json.hpp"

namespace bitcal::cli {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_fail(const std::string& message) {
  throw Error(ErrorKind::kInvalidConfig, message);
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) items.push_back(item);
    pos = end + 1;
  }
  return items;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto result = std::from_chars(value.data(), value.data() + value.size(), out);
  if (result.ec != std::errc() || result.ptr != value.data() + value.size()) {
    config_fail(fmt::format("config key '{}': cannot parse '{}' as a number", key, value));
  }
  return out;
}

std::vector<Method> parse_methods(std::string_view value) {
  std::vector<Method> methods;
  for (std::string_view item : split_list(value)) {
    const auto m = parse_method(item);
    if (!m) {
      config_fail(fmt::format("unknown method '{}' (valid methods: fixed, adaptive, bitcal)", item));
    }
    if (std::find(methods.begin(), methods.end(), *m) == methods.end()) methods.push_back(*m);
  }
  if (methods.empty()) config_fail("at least one method is required");
  return methods;
}

std::vector<Tokens> parse_budgets(std::string_view value) {
  std::vector<Tokens> budgets;
  for (std::string_view item : split_list(value)) {
    const Tokens b = parse_number<Tokens>("budgets", item);
    if (b < 1) config_fail(fmt::format("budget {} must be >= 1", b));
    if (std::find(budgets.begin(), budgets.end(), b) == budgets.end()) budgets.push_back(b);
  }
  if (budgets.empty()) config_fail("at least one budget is required");
  return budgets;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  if (count == 0) return;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string records_file_name(Method method, Tokens budget) {
  return fmt::format("records_{}_B{}.jsonl", to_string(method), budget);
}

std::string sanitize_dir_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_";
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void require_dir(const fs::path& dir, std::string_view what) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    config_fail(fmt::format("{} directory '{}' does not exist", what, dir.string()));
  }
}

nlohmann::ordered_json describe_config(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  std::vector<std::string> methods;
  for (Method m : cfg.methods) methods.emplace_back(to_string(m));
  j["methods"] = methods;
  j["budgets"] = cfg.budgets;
  j["served_bits"] = cfg.served_bits;
  j["chunk_size"] = cfg.chunk_size;
  j["h_max"] = cfg.calibrator.h_max;
  j["w_entropy"] = cfg.calibrator.w_entropy;
  j["w_trace"] = cfg.calibrator.w_trace;
  j["w_hidden"] = cfg.calibrator.w_hidden;
  j["temperature"] = cfg.calibrator.temperature;
  j["theta_h"] = cfg.policy.theta_h;
  j["theta_c"] = cfg.policy.theta_c;
  j["theta_e"] = cfg.policy.theta_e;
  j["floor_tokens"] = cfg.policy.floor_tokens;
  j["budget_buffer"] = cfg.policy.budget_buffer;
  j["marker"] = cfg.policy.marker;
  j["model"] = cfg.model;
  j["seed"] = cfg.seed;
  return j;
}

void write_run_meta(const RunConfig& cfg, std::string_view command) {
  ensure_dir(cfg.out_dir);
  nlohmann::ordered_json meta;
  meta["command"] = command;
  meta["config"] = describe_config(cfg);
  write_text_file(cfg.out_dir / "run_meta.json", meta.dump(2) + "\n");
}

struct Group {
  Method method;
  Tokens budget;
  std::vector<EpisodeRecord> records;
};

void log_errored(const std::vector<Group>& groups, std::ostream& err) {
  for (const Group& g : groups) {
    for (const EpisodeRecord& r : g.records) {
      if (r.errored()) {
        err << fmt::format("warning: {} {} B={} excluded from aggregates: {}\n", r.example_id,
                           to_string(r.method), r.budget, *r.error);
      }
    }
  }
}

// Summaries of every group that has at least one usable record.
std::vector<RunSummary> usable_summaries(const std::vector<EpisodeRecord>& records) {
  std::map<std::tuple<std::string, Tokens, Method>, bool> usable;
  for (const EpisodeRecord& r : records) {
    usable[{r.model, r.budget, r.method}] |= !r.errored();
  }
  std::vector<EpisodeRecord> kept;
  for (const EpisodeRecord& r : records) {
    if (usable[{r.model, r.budget, r.method}]) kept.push_back(r);
  }
  if (kept.empty()) return {};
  return summarize_all(kept);
}

void print_summaries(const std::vector<EpisodeRecord>& records, std::ostream& out) {
  for (const RunSummary& s : usable_summaries(records)) {
    out << fmt::format(
        "{} {} B={}: N={} acc={}% [{}, {}] avg_tokens={} savings={} premature={}% errored={}\n",
        s.model, to_string(s.method), s.budget, s.n, format_percent(s.accuracy),
        format_percent(s.ci_low), format_percent(s.ci_high), fmt::format("{:.1f}", s.avg_tokens),
        s.savings_pct ? format_percent(*s.savings_pct) + "%" : std::string("-"),
        format_percent(s.premature_stop_pct), s.n_errored);
  }
}

void write_groups(const RunConfig& cfg, std::vector<Group>& groups, std::ostream& out,
                  std::ostream& err) {
  ensure_dir(cfg.out_dir);
  std::vector<EpisodeRecord> all;
  for (Group& g : groups) {
    std::stable_sort(g.records.begin(), g.records.end(),
                     [](const EpisodeRecord& a, const EpisodeRecord& b) {
                       return std::tie(a.example_id, a.model) < std::tie(b.example_id, b.model);
                     });
    write_records(g.records, cfg.out_dir / records_file_name(g.method, g.budget));
    all.insert(all.end(), g.records.begin(), g.records.end());
  }
  log_errored(groups, err);
  print_summaries(all, out);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<Scenario> scenarios;
  if (cfg.scenarios_dir) {
    require_dir(*cfg.scenarios_dir, "scenario");
    scenarios = load_scenario_dir(*cfg.scenarios_dir);
  } else {
    scenarios = builtin_scenario_suite();
  }
  if (scenarios.empty()) throw Error(ErrorKind::kEmptyRun, "no scenarios to simulate");

  std::vector<Group> groups;
  for (Tokens budget : cfg.budgets) {
    for (Method method : cfg.methods) {
      const EngineConfig engine = cfg.engine_config(method, budget);
      Group g{method, budget, std::vector<EpisodeRecord>(scenarios.size())};
      parallel_for(scenarios.size(), cfg.jobs, [&](std::size_t i) {
        auto source = scenario_source(scenarios[i], engine.chunk_size);
        g.records[i] = run_episode(*source, engine, scenarios[i].gold_answer,
                                   scenarios[i].scenario_id);
      });
      groups.push_back(std::move(g));
    }
  }

  if (cfg.emit_traces_dir) {
    ensure_dir(*cfg.emit_traces_dir);
    const Tokens max_budget = *std::max_element(cfg.budgets.begin(), cfg.budgets.end());
    for (const Scenario& s : scenarios) {
      auto source = scenario_source(s, cfg.chunk_size);
      TraceMetadata meta;
      meta.example_id = s.scenario_id;
      meta.gold_answer = s.gold_answer;
      meta.model = cfg.model;
      meta.served_bits = cfg.served_bits;
      meta.prompt_digest = fmt::format("scenario:{}:{}", kScenarioSuiteVersion, s.scenario_id);
      write_trace_file(capture_trace(*source, meta, max_budget, cfg.chunk_size),
                       *cfg.emit_traces_dir / (s.scenario_id + ".jsonl"));
    }
  }

  write_groups(cfg, groups, out, err);
  return kExitOk;
}

int cmd_replay(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (!cfg.traces_dir) config_fail("replay needs --traces DIR");
  require_dir(*cfg.traces_dir, "trace");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(*cfg.traces_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  bool data_error = false;
  std::vector<TraceFile> traces;
  for (const fs::path& file : files) {
    try {
      traces.push_back(read_trace_file(file));
    } catch (const Error& e) {
      err << fmt::format("error: {}\n", e.what());
      data_error = true;
    }
  }
  if (traces.empty()) {
    err << "error: no readable traces\n";
    return kExitData;
  }

  std::vector<Group> groups;
  for (Tokens budget : cfg.budgets) {
    for (Method method : cfg.methods) {
      Group g{method, budget, std::vector<EpisodeRecord>(traces.size())};
      parallel_for(traces.size(), cfg.jobs, [&](std::size_t i) {
        const TraceMetadata& meta = traces[i].metadata;
        EngineConfig engine = cfg.engine_config(method, budget);
        engine.model = meta.model;
        if (!cfg.served_bits_explicit) engine.served_bits = meta.served_bits;
        auto source = trace_source(traces[i]);
        EpisodeRecord rec = run_episode(*source, engine, meta.gold_answer, meta.example_id);
        rec.counterfactual_replay = is_counterfactual_replay(meta, method);
        g.records[i] = std::move(rec);
      });
      groups.push_back(std::move(g));
    }
  }
  write_groups(cfg, groups, out, err);
  return data_error ? kExitData : kExitOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const fs::path records_dir = cfg.records_dir.value_or(cfg.out_dir);
  require_dir(records_dir, "records");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(records_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("records_") && name.ends_with(".jsonl")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<EpisodeRecord> records;
  for (const fs::path& file : files) {
    auto part = read_records(file);
    records.insert(records.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  if (records.empty()) {
    throw Error(ErrorKind::kEmptyRun,
                fmt::format("no episode records found in {}", records_dir.string()));
  }
  std::vector<Group> as_group{{Method::kFixed, 0, records}};
  log_errored(as_group, err);

  const std::vector<RunSummary> summaries = usable_summaries(records);
  if (summaries.empty()) throw Error(ErrorKind::kEmptyRun, "every record errored");

  ensure_dir(cfg.out_dir);
  write_text_file(cfg.out_dir / "summaries.jsonl", format_summary_records(summaries));

  std::map<std::string, std::vector<RunSummary>> by_model;
  for (const RunSummary& s : summaries) by_model[s.model].push_back(s);
  for (const auto& [model, group] : by_model) {
    const fs::path dir = cfg.out_dir / sanitize_dir_name(model);
    ensure_dir(dir);
    emit_summary_table(group, dir / "summary.csv");
    write_text_file(dir / "accuracy_ci.csv", format_accuracy_series(group));
    write_text_file(dir / "premature_stop.csv", format_premature_series(group));
    write_text_file(dir / "pareto.csv", format_pareto_series(group));
    write_text_file(dir / "budget_sweep.csv", format_budget_sweep_series(group));
    out << fmt::format("{}: {} rows -> {}\n", model, group.size(),
                       (dir / "summary.csv").string());
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const int status = cfg.traces_dir ? cmd_replay(cfg, out, err) : cmd_simulate(cfg, out, err);
  if (status == kExitUsage) return status;
  RunConfig report_cfg = cfg;
  report_cfg.records_dir = cfg.out_dir;
  const int report_status = cmd_report(report_cfg, out, err);
  return std::max(status, report_status);
}

std::string help_footer() {
  std::string text = "Config keys (config file, or --set KEY=VALUE) and defaults:\n";
  for (const ConfigKey& key : config_keys()) {
    text += fmt::format("  {:<14} {:<24} {}\n", key.name, key.default_value, key.help);
  }
  text += "\nExit codes: 0 success, 1 usage or config error, 2 data error.\n";
  return text;
}

}  // namespace

EngineConfig RunConfig::engine_config(Method method, Tokens budget) const {
  EngineConfig e;
  e.budget = budget;
  e.chunk_size = chunk_size;
  e.method = method;
  e.served_bits = served_bits;
  e.calibrator = CalibratorConfig(calibrator);
  e.policy = PolicyConfig(policy);
  e.model = model;
  e.validate();
  return e;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"methods", "fixed,adaptive,bitcal", "controllers to run"},
      {"budgets", "512", "token budgets B (comma-separated)"},
      {"served_bits", "4", "served weight precision b"},
      {"chunk_size", "16", "tokens per controller step k"},
      {"h_max", "10", "entropy normalization (nats)"},
      {"w_entropy", "0.40", "entropy weight"},
      {"w_trace", "0.35", "trace-stability weight"},
      {"w_hidden", "0.25", "hidden-stability weight"},
      {"temperature", "1", "calibrator temperature"},
      {"theta_h", "2.0", "entropy-stop threshold (nats)"},
      {"theta_c", "0.75", "confidence-stop threshold"},
      {"theta_e", "4.0", "entropy-escalate threshold (nats)"},
      {"floor_tokens", "128", "minimum tokens before halting"},
      {"budget_buffer", "32", "minimum remaining budget to continue"},
      {"marker", "####", "answer delimiter"},
      {"model", "sim", "model tag written into records"},
      {"jobs", "0 (all cores)", "worker threads"},
      {"seed", "42", "reserved; nothing consumes randomness"},
      {"scenarios", "(built-in suite)", "scenario directory"},
      {"traces", "(none)", "trace directory for replay"},
      {"records", "(out)", "record directory for report"},
      {"out", "out", "output directory"},
  };
  return keys;
}

std::optional<std::string> suggest_key(std::string_view key) {
  std::optional<std::string> best;
  std::size_t best_distance = 3;
  for (const ConfigKey& k : config_keys()) {
    const std::size_t d = edit_distance(key, k.name);
    if (d < best_distance) {
      best_distance = d;
      best = std::string(k.name);
    }
  }
  return best;
}

void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "methods") {
    cfg.methods = parse_methods(value);
  } else if (key == "budgets") {
    cfg.budgets = parse_budgets(value);
  } else if (key == "served_bits") {
    cfg.served_bits = parse_number<int>(key, value);
    cfg.served_bits_explicit = true;
  } else if (key == "chunk_size") {
    cfg.chunk_size = parse_number<Tokens>(key, value);
  } else if (key == "h_max") {
    cfg.calibrator.h_max = parse_number<double>(key, value);
  } else if (key == "w_entropy") {
    cfg.calibrator.w_entropy = parse_number<double>(key, value);
  } else if (key == "w_trace") {
    cfg.calibrator.w_trace = parse_number<double>(key, value);
  } else if (key == "w_hidden") {
    cfg.calibrator.w_hidden = parse_number<double>(key, value);
  } else if (key == "temperature") {
    cfg.calibrator.temperature = parse_number<double>(key, value);
  } else if (key == "theta_h") {
    cfg.policy.theta_h = parse_number<double>(key, value);
  } else if (key == "theta_c") {
    cfg.policy.theta_c = parse_number<double>(key, value);
  } else if (key == "theta_e") {
    cfg.policy.theta_e = parse_number<double>(key, value);
  } else if (key == "floor_tokens") {
    cfg.policy.floor_tokens = parse_number<Tokens>(key, value);
  } else if (key == "budget_buffer") {
    cfg.policy.budget_buffer = parse_number<Tokens>(key, value);
  } else if (key == "marker") {
    cfg.policy.marker = std::string(value);
  } else if (key == "model") {
    if (value.empty()) config_fail("config key 'model' must be non-empty");
    cfg.model = std::string(value);
  } else if (key == "jobs") {
    cfg.jobs = parse_number<unsigned>(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "scenarios") {
    cfg.scenarios_dir = fs::path(value);
  } else if (key == "traces") {
    cfg.traces_dir = fs::path(value);
  } else if (key == "records") {
    cfg.records_dir = fs::path(value);
  } else if (key == "out") {
    cfg.out_dir = fs::path(value);
  } else {
    const auto suggestion = suggest_key(key);
    config_fail(suggestion
                    ? fmt::format("unknown config key '{}' (did you mean '{}'?)", key, *suggestion)
                    : fmt::format("unknown config key '{}'", key));
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    config_fail(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    config_fail(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!j.is_object()) config_fail(fmt::format("{}: config must be a JSON object", path.string()));
  for (const auto& [key, value] : j.items()) {
    std::string text_value;
    if (value.is_string()) {
      text_value = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& item : value) {
        if (!text_value.empty()) text_value += ",";
        text_value += item.is_string() ? item.get<std::string>() : item.dump();
      }
    } else {
      text_value = value.dump();
    }
    apply_config_value(cfg, key, text_value);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bit-calibrated halting controller: simulate, replay, report, sweep"};
  app.require_subcommand(1);
  app.footer(help_footer());

  struct Flags {
    std::string config;
    std::string methods;
    std::string budgets;
    std::optional<int> bits;
    std::string scenarios;
    std::string traces;
    std::string records;
    std::string out;
    std::string emit_traces;
    std::optional<unsigned> jobs;
    std::vector<std::string> sets;
  } flags;

  const auto add_common = [&](CLI::App* sub, bool with_sources) {
    sub->add_option("--config", flags.config, "JSON config file");
    sub->add_option("--set", flags.sets, "override one config key (KEY=VALUE), repeatable");
    sub->add_option("--out", flags.out, "output directory (default: out)");
    if (with_sources) {
      sub->add_option("--methods", flags.methods, "comma-separated: fixed,adaptive,bitcal");
      sub->add_option("--budgets", flags.budgets, "comma-separated token budgets");
      sub->add_option("--bits", flags.bits, "served weight precision");
      sub->add_option("--jobs", flags.jobs, "worker threads (0 = all cores)");
    }
    sub->footer(help_footer());
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run scripted scenarios through every controller");
  add_common(simulate, true);
  simulate->add_option("--scenarios", flags.scenarios, "scenario directory (default: built-in suite)");
  simulate->add_option("--emit-traces", flags.emit_traces, "also write fixed-decoding traces here");

  CLI::App* replay = app.add_subcommand("replay", "replay logged traces through every controller");
  add_common(replay, true);
  replay->add_option("--traces", flags.traces, "trace directory")->required();

  CLI::App* report = app.add_subcommand("report", "aggregate record files into summary tables");
  add_common(report, false);
  report->add_option("--records", flags.records, "record directory (default: --out)");

  CLI::App* sweep = app.add_subcommand("sweep", "simulate or replay over a method x budget grid, then report");
  add_common(sweep, true);
  sweep->add_option("--scenarios", flags.scenarios, "scenario directory (default: built-in suite)");
  sweep->add_option("--traces", flags.traces, "trace directory (replay instead of simulate)");

  std::vector<std::string> argv_storage{"bitcal"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  std::string command;
  try {
    if (!flags.config.empty()) apply_config_file(cfg, flags.config);
    for (const std::string& assignment : flags.sets) {
      const auto eq = assignment.find('=');
      if (eq == std::string::npos) config_fail(fmt::format("--set expects KEY=VALUE, got '{}'", assignment));
      apply_config_value(cfg, std::string_view(assignment).substr(0, eq),
                         std::string_view(assignment).substr(eq + 1));
    }
    if (!flags.methods.empty()) apply_config_value(cfg, "methods", flags.methods);
    if (!flags.budgets.empty()) apply_config_value(cfg, "budgets", flags.budgets);
    if (flags.bits) apply_config_value(cfg, "served_bits", std::to_string(*flags.bits));
    if (flags.jobs) cfg.jobs = *flags.jobs;
    if (!flags.scenarios.empty()) cfg.scenarios_dir = flags.scenarios;
    if (!flags.traces.empty()) cfg.traces_dir = flags.traces;
    if (!flags.records.empty()) cfg.records_dir = flags.records;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (!flags.emit_traces.empty()) cfg.emit_traces_dir = flags.emit_traces;
    // Surface invalid controller settings before any work starts.
    for (Tokens budget : cfg.budgets) {
      for (Method method : cfg.methods) (void)cfg.engine_config(method, budget);
    }

    if (simulate->parsed()) command = "simulate";
    if (replay->parsed()) command = "replay";
    if (report->parsed()) command = "report";
    if (sweep->parsed()) command = "sweep";
    if (cfg.traces_dir && command != "replay" && command != "sweep") {
      config_fail("--traces only applies to replay and sweep");
    }
  } catch (const Error& e) {
    err << fmt::format("error: {}\n", e.what());
    return kExitUsage;
  }

  try {
    int status = kExitOk;
    if (command == "simulate") status = cmd_simulate(cfg, out, err);
    if (command == "replay") status = cmd_replay(cfg, out, err);
    if (command == "report") status = cmd_report(cfg, out, err);
    if (command == "sweep") status = cmd_sweep(cfg, out, err);
    write_run_meta(cfg, command);
    return status;
  } catch (const Error& e) {
    err << fmt::format("error: {}\n", e.what());
    return e.kind() == ErrorKind::kInvalidConfig ? kExitUsage : kExitData;
  }
}

}  // namespace bitcal::cli
