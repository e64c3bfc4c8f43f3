#pragma once

#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "fragsim/device.hpp"
#include "fragsim/types.hpp"

namespace fragsim {

struct AllocatorConfig {
  Bytes rounding_quantum = 512;
  Bytes small_request_max = 1 * MiB;
  Bytes small_segment_size = 2 * MiB;
  Bytes segment_granularity = 2 * MiB;
  Bytes split_remainder_min = 512;

  // Throws InvalidArgument when the constants are inconsistent.
  void validate() const;

  friend bool operator==(const AllocatorConfig&, const AllocatorConfig&) = default;
};

enum class Pool : std::uint8_t { small, large };
enum class BlockState : std::uint8_t { live, cached };

struct BlockView {
  BlockId id{};
  SegmentId segment{};
  Bytes offset = 0;
  Bytes size = 0;
  BlockState state = BlockState::live;
  StreamTag stream = 0;
};

struct SegmentView {
  SegmentId id{};
  Bytes size = 0;
  Pool pool = Pool::small;
  std::vector<BlockView> blocks;  // sorted by offset
};

/// Caching allocator over a simulated device.
///
/// Requests are rounded to the quantum and routed to the small or large pool.
/// A request is served from the pool's cached blocks by best fit (smallest
/// block that fits, ties by segment id then offset), splitting off the
/// remainder when it is at least split_remainder_min. Only when no cached
/// block fits is a new segment reserved from the device. Freed blocks stay
/// reserved and are coalesced with cached neighbours. empty_cache() returns
/// fully unused segments to the device.
///
/// On a device shortfall the allocator flushes its cache once and retries
/// before throwing OutOfMemory.
class CachingAllocator {
 public:
  explicit CachingAllocator(AllocatorConfig config = {}, Bytes capacity = 24 * GiB);

  BlockId alloc(Bytes request, StreamTag stream = 0);
  void free(BlockId block);
  Bytes empty_cache();
  // Returns one fully cached segment to the device.
  void release_segment(SegmentId segment);

  AllocatorStats stats() const noexcept { return stats_; }

  // Event index stamped on device reservation records.
  void set_clock(std::size_t event_index) noexcept { clock_ = event_index; }
  std::size_t clock() const noexcept { return clock_; }

  Bytes round_size(Bytes request) const;
  Pool pool_for(Bytes rounded) const noexcept;

  std::optional<BlockView> block(BlockId id) const;
  std::vector<SegmentView> segments() const;

  const Device& device() const noexcept { return device_; }
  const AllocatorConfig& config() const noexcept { return config_; }
  // Number of times a shortfall forced a cache flush before a retry.
  std::uint64_t retry_flushes() const noexcept { return retry_flushes_; }

 private:
  struct Block {
    SegmentId segment;
    Bytes offset;
    Bytes size;
    BlockState state;
    StreamTag stream;
  };
  struct Segment {
    Bytes size;
    Pool pool;
    std::size_t live_count = 0;
    std::map<Bytes, BlockId> by_offset;
  };
  // Ordering gives best fit, then lowest segment id, then lowest offset.
  using FreeKey = std::tuple<Bytes, SegmentId, Bytes, BlockId>;

  BlockId new_id() noexcept { return BlockId{next_block_++}; }
  std::set<FreeKey>& free_list(Pool pool) { return free_[static_cast<int>(pool)]; }
  void cache_insert(BlockId id, const Block& b);
  void cache_erase(BlockId id, const Block& b);
  SegmentId reserve(Bytes segment_size, Pool pool, Bytes request);
  BlockId carve(BlockId cached, Bytes rounded, StreamTag stream);
  void drop_segment(SegmentId segment);

  AllocatorConfig config_;
  Device device_;
  AllocatorStats stats_;
  std::size_t clock_ = 0;
  std::uint64_t next_block_ = 0;
  std::uint64_t retry_flushes_ = 0;
  std::unordered_map<BlockId, Block> blocks_;
  std::map<SegmentId, Segment> segments_;
  std::set<FreeKey> free_[2];
};

}  // namespace fragsim
