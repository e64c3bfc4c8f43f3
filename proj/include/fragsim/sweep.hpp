#pragma once

#include <span>
#include <vector>

#include "fragsim/strategy.hpp"

namespace fragsim {

// Cells are laid out trace-major: cell (t, p) lives at t * policies.size() + p.
// The parallel variants must produce exactly what the serial ones do; every
// cell owns its allocator, device and profiler.

std::vector<Trace> generate_serial(std::span<const WorkloadSpec> specs);
std::vector<Trace> generate_parallel(std::span<const WorkloadSpec> specs);

std::vector<FragReport> replay_serial(std::span<const Trace> traces,
                                      std::span<const CachePolicy> policies,
                                      const AllocatorConfig& config, Bytes capacity);
std::vector<FragReport> replay_parallel(std::span<const Trace> traces,
                                        std::span<const CachePolicy> policies,
                                        const AllocatorConfig& config, Bytes capacity);

}  // namespace fragsim
