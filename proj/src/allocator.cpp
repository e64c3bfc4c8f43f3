#include "fragsim/allocator.hpp"

#include <string>

namespace fragsim {

namespace {

std::string id_str(BlockId id) { return std::to_string(static_cast<std::uint64_t>(id)); }

}  // namespace

void AllocatorConfig::validate() const {
  const Bytes q = rounding_quantum;
  if (q == 0 || small_request_max == 0 || small_segment_size == 0 ||
      segment_granularity == 0 || split_remainder_min == 0) {
    throw InvalidArgument("allocator constants must be positive");
  }
  if (small_segment_size < small_request_max) {
    throw InvalidArgument("small_segment_size must be >= small_request_max");
  }
  if (small_request_max % q || small_segment_size % q || segment_granularity % q ||
      split_remainder_min % q) {
    throw InvalidArgument("rounding_quantum must divide every other allocator constant");
  }
  if (small_segment_size % segment_granularity) {
    throw InvalidArgument("small_segment_size must be a multiple of segment_granularity");
  }
}

CachingAllocator::CachingAllocator(AllocatorConfig config, Bytes capacity)
    : config_(config), device_(capacity, config.segment_granularity) {
  config_.validate();
}

Bytes CachingAllocator::round_size(Bytes request) const {
  if (request == 0) throw InvalidArgument("zero-size allocation request");
  if (request > ~Bytes{0} - config_.rounding_quantum) {
    throw InvalidArgument("allocation request overflows rounding");
  }
  return round_up(request, config_.rounding_quantum);
}

Pool CachingAllocator::pool_for(Bytes rounded) const noexcept {
  return rounded <= config_.small_request_max ? Pool::small : Pool::large;
}

void CachingAllocator::cache_insert(BlockId id, const Block& b) {
  free_list(segments_.at(b.segment).pool).emplace(b.size, b.segment, b.offset, id);
}

void CachingAllocator::cache_erase(BlockId id, const Block& b) {
  free_list(segments_.at(b.segment).pool).erase({b.size, b.segment, b.offset, id});
}

SegmentId CachingAllocator::reserve(Bytes segment_size, Pool pool, Bytes request) {
  auto seg = device_.reserve_segment(segment_size, clock_, stats_.allocated);
  if (!seg) {
    ++retry_flushes_;
    empty_cache();
    seg = device_.reserve_segment(segment_size, clock_, stats_.allocated);
  }
  if (!seg) throw OutOfMemory(request, segment_size, stats_, clock_);

  const BlockId id = new_id();
  Segment& s = segments_[*seg];
  s.size = segment_size;
  s.pool = pool;
  s.by_offset.emplace(0, id);
  Block b{*seg, 0, segment_size, BlockState::cached, 0};
  blocks_.emplace(id, b);
  cache_insert(id, b);

  stats_.reserved += segment_size;
  stats_.cached += segment_size;
  ++stats_.segment_count;
  return *seg;
}

// Turns the cached block into a live one of the rounded size, splitting off
// the tail as a new cached block when it is large enough.
BlockId CachingAllocator::carve(BlockId cached, Bytes rounded, StreamTag stream) {
  const Block src = blocks_.at(cached);
  cache_erase(cached, src);
  blocks_.erase(cached);
  Segment& seg = segments_.at(src.segment);

  const Bytes remainder = src.size - rounded;
  const bool split = remainder >= config_.split_remainder_min;
  const Bytes live_size = split ? rounded : src.size;

  const BlockId live = new_id();
  blocks_.emplace(live, Block{src.segment, src.offset, live_size, BlockState::live, stream});
  seg.by_offset[src.offset] = live;
  ++seg.live_count;

  if (split) {
    const BlockId tail = new_id();
    const Block t{src.segment, src.offset + rounded, remainder, BlockState::cached, 0};
    blocks_.emplace(tail, t);
    seg.by_offset.emplace(t.offset, tail);
    cache_insert(tail, t);
  }

  stats_.allocated += live_size;
  stats_.cached -= live_size;
  return live;
}

BlockId CachingAllocator::alloc(Bytes request, StreamTag stream) {
  const Bytes rounded = round_size(request);
  const Pool pool = pool_for(rounded);

  auto& list = free_list(pool);
  auto it = list.lower_bound({rounded, SegmentId{0}, 0, BlockId{0}});
  if (it != list.end()) return carve(std::get<3>(*it), rounded, stream);

  const Bytes seg_size = pool == Pool::small
                             ? config_.small_segment_size
                             : round_up(rounded, config_.segment_granularity);
  const SegmentId seg = reserve(seg_size, pool, request);
  return carve(segments_.at(seg).by_offset.begin()->second, rounded, stream);
}

void CachingAllocator::free(BlockId id) {
  auto it = blocks_.find(id);
  if (it == blocks_.end() || it->second.state != BlockState::live) {
    throw DoubleFree("free of unknown or already cached block " + id_str(id));
  }
  Block& b = it->second;
  Segment& seg = segments_.at(b.segment);
  b.state = BlockState::cached;
  b.stream = 0;
  --seg.live_count;
  stats_.allocated -= b.size;
  stats_.cached += b.size;

  auto pos = seg.by_offset.find(b.offset);
  if (pos != seg.by_offset.begin()) {
    auto prev = std::prev(pos);
    const BlockId prev_id = prev->second;
    const Block& p = blocks_.at(prev_id);
    if (p.state == BlockState::cached) {
      cache_erase(prev_id, p);
      b.offset = p.offset;
      b.size += p.size;
      blocks_.erase(prev_id);
      seg.by_offset.erase(pos);
      prev->second = id;
      pos = prev;
    }
  }
  auto next = std::next(pos);
  if (next != seg.by_offset.end()) {
    const BlockId next_id = next->second;
    const Block& n = blocks_.at(next_id);
    if (n.state == BlockState::cached) {
      cache_erase(next_id, n);
      b.size += n.size;
      blocks_.erase(next_id);
      seg.by_offset.erase(next);
    }
  }
  cache_insert(id, b);
}

void CachingAllocator::drop_segment(SegmentId id) {
  Segment& seg = segments_.at(id);
  for (const auto& [offset, block] : seg.by_offset) {
    cache_erase(block, blocks_.at(block));
    blocks_.erase(block);
  }
  stats_.reserved -= seg.size;
  stats_.cached -= seg.size;
  --stats_.segment_count;
  segments_.erase(id);
  device_.release_segment(id);
}

Bytes CachingAllocator::empty_cache() {
  Bytes released = 0;
  for (auto it = segments_.begin(); it != segments_.end();) {
    auto cur = it++;
    if (cur->second.live_count == 0) {
      released += cur->second.size;
      drop_segment(cur->first);
    }
  }
  return released;
}

void CachingAllocator::release_segment(SegmentId id) {
  auto it = segments_.find(id);
  if (it == segments_.end()) {
    throw UnknownSegment("unknown segment " + std::to_string(static_cast<std::uint64_t>(id)));
  }
  if (it->second.live_count != 0) {
    throw IllegalRelease("segment " + std::to_string(static_cast<std::uint64_t>(id)) +
                         " still holds " + std::to_string(it->second.live_count) +
                         " live block(s)");
  }
  drop_segment(id);
}

std::optional<BlockView> CachingAllocator::block(BlockId id) const {
  auto it = blocks_.find(id);
  if (it == blocks_.end()) return std::nullopt;
  const Block& b = it->second;
  return BlockView{id, b.segment, b.offset, b.size, b.state, b.stream};
}

std::vector<SegmentView> CachingAllocator::segments() const {
  std::vector<SegmentView> out;
  out.reserve(segments_.size());
  for (const auto& [id, seg] : segments_) {
    SegmentView v{id, seg.size, seg.pool, {}};
    v.blocks.reserve(seg.by_offset.size());
    for (const auto& [offset, block] : seg.by_offset) {
      const Block& b = blocks_.at(block);
      v.blocks.push_back({block, id, b.offset, b.size, b.state, b.stream});
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace fragsim
