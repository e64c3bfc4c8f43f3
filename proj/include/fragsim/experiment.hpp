#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fragsim/strategy.hpp"

namespace fragsim {

enum class OutputFormat : std::uint8_t { summary, timeline, both };

struct ExperimentConfig {
  // Exactly one of these must be set before a command runs.
  std::optional<WorkloadSpec> workload;
  std::optional<std::filesystem::path> trace_path;

  Bytes capacity = 24 * GiB;
  AllocatorConfig allocator;
  CachePolicy policy = CachePolicy::never;
  bool sweep = false;

  // Optional compare grid; empty means "the workload's own value".
  std::vector<ZeroStage> sweep_zero_stage;
  std::vector<bool> sweep_grad_ckpt;
  std::vector<bool> sweep_offload;

  std::filesystem::path output_dir = ".";
  OutputFormat format = OutputFormat::both;
  bool parallel = true;
};

// Flat `key = value` text with dotted keys; `#` starts a comment.
// Throws ConfigError naming the line.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies one dotted key. Exposed so command-line flags share the parser.
void apply_config_key(ExperimentConfig& config, const std::string& key, const std::string& value);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitOutOfMemory = 2;

// Each command writes its files under config.output_dir, prints results to
// `out` and diagnostics to `err`, and returns the process exit code.
int cmd_run(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_compare(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_gen_trace(const ExperimentConfig& config, const std::filesystem::path& path,
                  std::ostream& out, std::ostream& err);
int cmd_replay(const ExperimentConfig& config, const std::filesystem::path& path,
               std::ostream& out, std::ostream& err);

// One row of the compare table.
struct CompareRow {
  std::string zero_stage;
  std::string grad_ckpt;
  std::string offload;
  CachePolicy policy = CachePolicy::never;
  FragReport report;
};

std::vector<CompareRow> compare_rows(const ExperimentConfig& config);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);
void write_compare_table(std::ostream& out, const std::vector<CompareRow>& rows);

}  // namespace fragsim
