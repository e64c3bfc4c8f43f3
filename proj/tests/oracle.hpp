#pragma once

// Brute-force reference accountant for the caching allocator. Every lookup is
// a linear scan over flat vectors, and coalescing re-merges the whole segment.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fragsim/allocator.hpp"

namespace fragsim::testing {

class OracleAccountant {
 public:
  struct Placement {
    std::uint64_t segment = 0;
    Bytes offset = 0;
    Bytes size = 0;
  };

  explicit OracleAccountant(AllocatorConfig config = {}, Bytes capacity = 24 * GiB)
      : config_(config), capacity_(capacity) {}

  // Returns the handle of the live block, or nullopt on out-of-memory.
  std::optional<int> alloc(Bytes request) {
    const Bytes rounded = (request + config_.rounding_quantum - 1) / config_.rounding_quantum *
                          config_.rounding_quantum;
    const bool small = rounded <= config_.small_request_max;

    Seg* best_seg = nullptr;
    std::size_t best_idx = 0;
    for (Seg& s : segs_) {
      if (s.small != small) continue;
      for (std::size_t i = 0; i < s.blocks.size(); ++i) {
        const Blk& b = s.blocks[i];
        if (b.live || b.size < rounded) continue;
        if (best_seg == nullptr || b.size < best_seg->blocks[best_idx].size ||
            (b.size == best_seg->blocks[best_idx].size &&
             (s.id < best_seg->id ||
              (s.id == best_seg->id && b.offset < best_seg->blocks[best_idx].offset)))) {
          best_seg = &s;
          best_idx = i;
        }
      }
    }

    if (best_seg == nullptr) {
      Bytes seg_size = small ? config_.small_segment_size
                             : (rounded + config_.segment_granularity - 1) /
                                   config_.segment_granularity * config_.segment_granularity;
      if (reserved() + seg_size > capacity_) {
        ++flushes_;
        empty_cache();
        if (reserved() + seg_size > capacity_) return std::nullopt;
      }
      segs_.push_back({next_seg_++, seg_size, small, {{0, seg_size, false, -1}}});
      best_seg = &segs_.back();
      best_idx = 0;
    }

    Blk& b = best_seg->blocks[best_idx];
    const int handle = next_handle_++;
    if (b.size - rounded >= config_.split_remainder_min) {
      Blk tail{b.offset + rounded, b.size - rounded, false, -1};
      b.size = rounded;
      b.live = true;
      b.handle = handle;
      best_seg->blocks.insert(best_seg->blocks.begin() + static_cast<long>(best_idx) + 1, tail);
    } else {
      b.live = true;
      b.handle = handle;
    }
    return handle;
  }

  void free(int handle) {
    for (Seg& s : segs_) {
      for (Blk& b : s.blocks) {
        if (b.live && b.handle == handle) {
          b.live = false;
          b.handle = -1;
          merge(s);
          return;
        }
      }
    }
  }

  Bytes empty_cache() {
    Bytes released = 0;
    std::vector<Seg> kept;
    for (Seg& s : segs_) {
      const bool any_live =
          std::any_of(s.blocks.begin(), s.blocks.end(), [](const Blk& b) { return b.live; });
      if (any_live) {
        kept.push_back(s);
      } else {
        released += s.size;
      }
    }
    segs_ = std::move(kept);
    return released;
  }

  Bytes reserved() const {
    Bytes total = 0;
    for (const Seg& s : segs_) total += s.size;
    return total;
  }

  Bytes allocated() const {
    Bytes total = 0;
    for (const Seg& s : segs_) {
      for (const Blk& b : s.blocks) {
        if (b.live) total += b.size;
      }
    }
    return total;
  }

  std::optional<Placement> placement(int handle) const {
    for (const Seg& s : segs_) {
      for (const Blk& b : s.blocks) {
        if (b.live && b.handle == handle) return Placement{s.id, b.offset, b.size};
      }
    }
    return std::nullopt;
  }

  std::uint64_t flushes() const { return flushes_; }

 private:
  struct Blk {
    Bytes offset;
    Bytes size;
    bool live;
    int handle;
  };
  struct Seg {
    std::uint64_t id;
    Bytes size;
    bool small;
    std::vector<Blk> blocks;
  };

  static void merge(Seg& s) {
    std::vector<Blk> out;
    for (const Blk& b : s.blocks) {
      if (!out.empty() && !out.back().live && !b.live) {
        out.back().size += b.size;
      } else {
        out.push_back(b);
      }
    }
    s.blocks = std::move(out);
  }

  AllocatorConfig config_;
  Bytes capacity_;
  std::vector<Seg> segs_;
  std::uint64_t next_seg_ = 0;
  int next_handle_ = 0;
  std::uint64_t flushes_ = 0;
};

}  // namespace fragsim::testing
