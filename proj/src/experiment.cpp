#include "fragsim/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fragsim/sweep.hpp"

namespace fragsim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

WorkloadSpec& workload(ExperimentConfig& c) {
  if (!c.workload) c.workload.emplace();
  return *c.workload;
}

void check(const ExperimentConfig& c) {
  if (c.workload && c.trace_path) {
    throw ConfigError("set either workload.* keys or workload.trace, not both");
  }
  if (!c.workload && !c.trace_path) {
    throw ConfigError("missing workload: set workload.* keys or workload.trace");
  }
  try {
    c.allocator.validate();
    if (c.workload) c.workload->validate();
  } catch (const SimError& e) {
    throw ConfigError(e.what());
  }
}

Trace load_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file '" + path.string() + "'");
  Trace trace = parse_trace(in);
  if (trace.events.empty()) throw TraceError(0, "trace file '" + path.string() + "' has no events");
  return trace;
}

Trace load_source(const ExperimentConfig& c) {
  check(c);
  if (c.trace_path) return load_trace_file(*c.trace_path);
  return generate(*c.workload);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

void prepare_output(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

int replay_and_report(const ExperimentConfig& c, const Trace& trace, std::ostream& out,
                      std::ostream& err) {
  const FragReport report = run(trace, c.policy, c.allocator, c.capacity);
  prepare_output(c.output_dir);
  const std::string summary = export_report_string(report, ExportFormat::summary);
  if (c.format != OutputFormat::timeline) write_file(c.output_dir / "summary.json", summary);
  if (c.format != OutputFormat::summary) {
    write_file(c.output_dir / "timeline.csv", export_report_string(report, ExportFormat::timeline));
  }
  out << summary;
  if (report.oom) {
    err << "out of memory at event " << report.oom_event_index << " (request "
        << report.oom_request_bytes << " bytes); partial report written\n";
    return kExitOutOfMemory;
  }
  return kExitOk;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const SimError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitConfigError;
}

std::string mib(Bytes b) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", static_cast<double>(b) / static_cast<double>(MiB));
  return buf;
}

}  // namespace

void apply_config_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto u = [&] { return to_u64(key, value); };
  if (key == "workload.trace") {
    c.trace_path = value;
  } else if (key == "workload.rounds") {
    workload(c).rounds = u();
  } else if (key == "workload.actor_params") {
    workload(c).actor_params = u();
  } else if (key == "workload.critic_params") {
    workload(c).critic_params = u();
  } else if (key == "workload.hidden_size") {
    workload(c).hidden_size = u();
  } else if (key == "workload.layers") {
    workload(c).layers = u();
  } else if (key == "workload.batch") {
    workload(c).batch = u();
  } else if (key == "workload.train_micro_batch") {
    workload(c).train_micro_batch = u();
  } else if (key == "workload.seq_len") {
    workload(c).seq_len = u();
  } else if (key == "workload.gen_tokens") {
    workload(c).gen_tokens = u();
  } else if (key == "workload.world_size") {
    workload(c).world_size = u();
  } else if (key == "workload.zero_stage") {
    const auto z = parse_zero_stage(value);
    if (!z) throw ConfigError("key '" + key + "': expected none|1|2|3");
    workload(c).zero_stage = *z;
  } else if (key == "workload.grad_ckpt") {
    workload(c).grad_ckpt = to_bool(key, value);
  } else if (key == "workload.offload") {
    workload(c).offload = to_bool(key, value);
  } else if (key == "workload.bytes_per_element") {
    workload(c).bytes_per_element = u();
  } else if (key == "workload.seed") {
    workload(c).seed = u();
  } else if (key == "workload.ckpt_interval") {
    workload(c).ckpt_interval = u();
  } else if (key == "device.capacity_bytes") {
    c.capacity = u();
  } else if (key == "allocator.rounding_quantum") {
    c.allocator.rounding_quantum = u();
  } else if (key == "allocator.small_request_max") {
    c.allocator.small_request_max = u();
  } else if (key == "allocator.small_segment_size") {
    c.allocator.small_segment_size = u();
  } else if (key == "allocator.segment_granularity") {
    c.allocator.segment_granularity = u();
  } else if (key == "allocator.split_remainder_min") {
    c.allocator.split_remainder_min = u();
  } else if (key == "strategy.cache_policy") {
    if (value == "sweep") {
      c.sweep = true;
    } else if (auto p = parse_cache_policy(value)) {
      c.policy = *p;
      c.sweep = false;
    } else {
      throw ConfigError("key '" + key + "': unknown policy '" + value + "'");
    }
  } else if (key == "sweep.zero_stage") {
    c.sweep_zero_stage.clear();
    for (const auto& item : split_list(value)) {
      const auto z = parse_zero_stage(item);
      if (!z) throw ConfigError("key '" + key + "': bad stage '" + item + "'");
      c.sweep_zero_stage.push_back(*z);
    }
  } else if (key == "sweep.grad_ckpt") {
    c.sweep_grad_ckpt.clear();
    for (const auto& item : split_list(value)) c.sweep_grad_ckpt.push_back(to_bool(key, item));
  } else if (key == "sweep.offload") {
    c.sweep_offload.clear();
    for (const auto& item : split_list(value)) c.sweep_offload.push_back(to_bool(key, item));
  } else if (key == "output.dir") {
    c.output_dir = value;
  } else if (key == "output.format") {
    if (value == "summary") {
      c.format = OutputFormat::summary;
    } else if (value == "timeline") {
      c.format = OutputFormat::timeline;
    } else if (value == "both") {
      c.format = OutputFormat::both;
    } else {
      throw ConfigError("key '" + key + "': expected summary|timeline|both");
    }
  } else if (key == "run.parallel") {
    c.parallel = to_bool(key, value);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    }
    try {
      apply_config_key(c, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in);
}

int cmd_run(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] { return replay_and_report(config, load_source(config), out, err); });
}

int cmd_replay(const ExperimentConfig& config, const std::filesystem::path& path,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig c = config;
    c.workload.reset();
    c.trace_path = path;
    return replay_and_report(c, load_source(c), out, err);
  });
}

int cmd_gen_trace(const ExperimentConfig& config, const std::filesystem::path& path,
                  std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    check(config);
    if (!config.workload) throw ConfigError("gen-trace needs a synthetic workload");
    const Trace trace = generate(*config.workload);
    if (path.has_parent_path()) prepare_output(path.parent_path());
    write_file(path, write_trace_string(trace));
    out << "wrote " << trace.events.size() << " events to " << path.string() << '\n';
    return kExitOk;
  });
}

std::vector<CompareRow> compare_rows(const ExperimentConfig& config) {
  check(config);
  const bool grid = !config.sweep_zero_stage.empty() || !config.sweep_grad_ckpt.empty() ||
                    !config.sweep_offload.empty();
  if (grid && !config.workload) throw ConfigError("a compare grid needs a synthetic workload");

  std::vector<WorkloadSpec> specs;
  std::vector<Trace> traces;
  if (config.workload) {
    const WorkloadSpec& base = *config.workload;
    auto or_self = [](const auto& values, auto self) {
      using T = decltype(self);
      return values.empty() ? std::vector<T>{self} : std::vector<T>(values.begin(), values.end());
    };
    for (ZeroStage z : or_self(config.sweep_zero_stage, base.zero_stage)) {
      for (bool ckpt : or_self(config.sweep_grad_ckpt, base.grad_ckpt)) {
        for (bool off : or_self(config.sweep_offload, base.offload)) {
          WorkloadSpec s = base;
          s.zero_stage = z;
          s.grad_ckpt = ckpt;
          s.offload = off;
          specs.push_back(s);
        }
      }
    }
    traces = config.parallel ? generate_parallel(specs) : generate_serial(specs);
  } else {
    traces.push_back(load_trace_file(*config.trace_path));
  }

  const std::span<const CachePolicy> policies(kAllPolicies);
  const std::vector<FragReport> reports =
      config.parallel ? replay_parallel(traces, policies, config.allocator, config.capacity)
                      : replay_serial(traces, policies, config.allocator, config.capacity);

  std::vector<CompareRow> rows;
  rows.reserve(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CompareRow row;
    const std::size_t t = i / policies.size();
    if (!specs.empty()) {
      row.zero_stage = std::string(to_string(specs[t].zero_stage));
      row.grad_ckpt = specs[t].grad_ckpt ? "true" : "false";
      row.offload = specs[t].offload ? "true" : "false";
    } else {
      row.zero_stage = row.grad_ckpt = row.offload = "trace";
    }
    row.policy = policies[i % policies.size()];
    row.report = reports[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << "zero_stage,grad_ckpt,offload,policy,peak_reserved,frag_at_peak,peak_allocated,"
         "reserved_wo_frag,frag_max,empty_cache_invocations,bytes_released_total,status\n";
  for (const CompareRow& r : rows) {
    const FragReport& f = r.report;
    out << r.zero_stage << ',' << r.grad_ckpt << ',' << r.offload << ',' << to_string(r.policy)
        << ',' << f.peak_reserved << ',' << f.frag_at_peak << ',' << f.peak_allocated << ','
        << f.reserved_wo_frag << ',' << f.frag_max << ',' << f.empty_cache_invocations << ','
        << f.bytes_released_total << ',' << (f.oom ? "oom" : "ok") << '\n';
  }
}

void write_compare_table(std::ostream& out, const std::vector<CompareRow>& rows) {
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-6s %-7s %-17s %12s %10s %13s %6s\n", "zero", "ckpt",
                "offload", "policy", "Reserved", "Frag.", "Allocated", "status");
  out << line;
  out << "  (MiB)\n";
  for (const CompareRow& r : rows) {
    const FragReport& f = r.report;
    std::snprintf(line, sizeof line, "%-6s %-6s %-7s %-17s %12s %10s %13s %6s\n",
                  r.zero_stage.c_str(), r.grad_ckpt.c_str(), r.offload.c_str(),
                  std::string(to_string(r.policy)).c_str(), mib(f.peak_reserved).c_str(),
                  mib(f.frag_at_peak).c_str(), mib(f.peak_allocated).c_str(),
                  f.oom ? "OOM" : "ok");
    out << line;
  }
}

int cmd_compare(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<CompareRow> rows = compare_rows(config);
    prepare_output(config.output_dir);
    std::ostringstream csv;
    write_compare_csv(csv, rows);
    write_file(config.output_dir / "compare.csv", csv.str());
    write_compare_table(out, rows);
    return kExitOk;
  });
}

}  // namespace fragsim
