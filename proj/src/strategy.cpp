#include "fragsim/strategy.hpp"

#include <unordered_map>

namespace fragsim {

std::string_view to_string(CachePolicy policy) {
  switch (policy) {
    case CachePolicy::never: return "never";
    case CachePolicy::after_all_phases: return "after_all_phases";
    case CachePolicy::after_inference: return "after_inference";
    case CachePolicy::after_training: return "after_training";
  }
  return "?";
}

std::optional<CachePolicy> parse_cache_policy(std::string_view text) {
  for (CachePolicy p : kAllPolicies) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

bool releases_after(CachePolicy policy, PhaseKind kind) {
  switch (policy) {
    case CachePolicy::never: return false;
    case CachePolicy::after_all_phases: return true;
    case CachePolicy::after_inference: return kind == PhaseKind::inference;
    case CachePolicy::after_training: return kind == PhaseKind::training;
  }
  return false;
}

FragReport run(const Trace& trace, CachePolicy policy, const AllocatorConfig& config,
               Bytes capacity) {
  CachingAllocator allocator(config, capacity);
  Profiler profiler;
  std::unordered_map<std::string, BlockId> live;
  live.reserve(1024);

  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& ev = trace.events[i];
    allocator.set_clock(i);
    bool stop = false;
    switch (ev.kind) {
      case EventKind::alloc:
        try {
          const BlockId id = allocator.alloc(ev.bytes);
          if (!live.emplace(ev.tensor_id, id).second) {
            throw TraceError(i + 1, "tensor '" + ev.tensor_id + "' allocated while live");
          }
        } catch (const OutOfMemory& oom) {
          profiler.note_oom(oom);
          stop = true;
        }
        break;
      case EventKind::free: {
        auto it = live.find(ev.tensor_id);
        if (it == live.end()) throw TraceError(i + 1, "free of unknown tensor '" + ev.tensor_id + "'");
        allocator.free(it->second);
        live.erase(it);
        break;
      }
      case EventKind::phase_begin:
        profiler.annotate(i, ev.phase_name, ev.phase_kind, Boundary::begin);
        break;
      case EventKind::phase_end:
        profiler.annotate(i, ev.phase_name, ev.phase_kind, Boundary::end);
        if (releases_after(policy, ev.phase_kind)) profiler.note_empty_cache(allocator.empty_cache());
        break;
    }
    profiler.drain(allocator.device().reservation_log());
    const AllocatorStats s = allocator.stats();
    profiler.record(i, s.reserved, s.allocated);
    if (stop) break;
  }
  return profiler.finalize();
}

}  // namespace fragsim
