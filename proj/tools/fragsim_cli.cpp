#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fragsim/experiment.hpp"

int main(int argc, char** argv) {
  using namespace fragsim;

  CLI::App app{"Caching-allocator fragmentation simulator for RLHF-style workloads"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> policy;
  std::optional<std::uint64_t> capacity;
  app.add_option("--config", config_path, "flat key = value experiment config");
  app.add_option("--seed", seed, "workload seed (overrides workload.seed)");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--policy", policy,
                 "never|after_all_phases|after_inference|after_training|sweep");
  app.add_option("--capacity", capacity, "device capacity in bytes");

  auto* run = app.add_subcommand("run", "simulate one workload and write its report");
  auto* compare = app.add_subcommand("compare", "all cache policies (and sweep grid) in one table");
  auto* gen = app.add_subcommand("gen-trace", "write the synthetic trace as JSON lines");
  auto* replay = app.add_subcommand("replay", "simulate a recorded trace file");

  std::string gen_path;
  gen->add_option("path", gen_path, "trace output path (default <out>/trace.jsonl)");
  std::string replay_path;
  replay->add_option("path", replay_path, "trace file (default workload.trace)");

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig config;
  try {
    if (!config_path.empty()) config = load_config(config_path);
    if (seed) apply_config_key(config, "workload.seed", std::to_string(*seed));
    if (out_dir) apply_config_key(config, "output.dir", *out_dir);
    if (policy) apply_config_key(config, "strategy.cache_policy", *policy);
    if (capacity) apply_config_key(config, "device.capacity_bytes", std::to_string(*capacity));
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  if (*run) {
    if (config.sweep) return cmd_compare(config, std::cout, std::cerr);
    return cmd_run(config, std::cout, std::cerr);
  }
  if (*compare) return cmd_compare(config, std::cout, std::cerr);
  if (*gen) {
    const std::filesystem::path path =
        gen_path.empty() ? config.output_dir / "trace.jsonl" : std::filesystem::path(gen_path);
    return cmd_gen_trace(config, path, std::cout, std::cerr);
  }
  std::filesystem::path path = replay_path;
  if (path.empty()) {
    if (!config.trace_path) {
      std::cerr << "error: replay needs a trace path or workload.trace\n";
      return kExitConfigError;
    }
    path = *config.trace_path;
  }
  return cmd_replay(config, path, std::cout, std::cerr);
}
