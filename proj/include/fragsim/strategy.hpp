#pragma once

#include <optional>
#include <string_view>

#include "fragsim/allocator.hpp"
#include "fragsim/profiler.hpp"
#include "fragsim/workload.hpp"

namespace fragsim {

// Which phase ends trigger empty_cache().
enum class CachePolicy : std::uint8_t { never, after_all_phases, after_inference, after_training };

inline constexpr CachePolicy kAllPolicies[] = {CachePolicy::never, CachePolicy::after_all_phases,
                                               CachePolicy::after_inference,
                                               CachePolicy::after_training};

std::string_view to_string(CachePolicy policy);
std::optional<CachePolicy> parse_cache_policy(std::string_view text);

bool releases_after(CachePolicy policy, PhaseKind kind);

// Replays the trace through a fresh allocator and device. An out-of-memory
// stops the replay; the returned report then has oom set and covers the
// events up to and including the failing one.
FragReport run(const Trace& trace, CachePolicy policy, const AllocatorConfig& config = {},
               Bytes capacity = 24 * GiB);

}  // namespace fragsim
