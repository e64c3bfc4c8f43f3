#include "fragsim/device.hpp"

#include <string>

namespace fragsim {

OutOfMemory::OutOfMemory(Bytes requested, Bytes segment_size, AllocatorStats stats,
                         std::size_t event_index)
    : SimError("out of memory: request of " + std::to_string(requested) +
               " bytes needs a " + std::to_string(segment_size) + "-byte segment; reserved=" +
               std::to_string(stats.reserved) + " allocated=" + std::to_string(stats.allocated)),
      requested_(requested),
      segment_size_(segment_size),
      stats_(stats),
      event_index_(event_index) {}

TraceError::TraceError(std::size_t line, const std::string& what)
    : SimError(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

Device::Device(Bytes capacity, Bytes granularity)
    : capacity_(capacity), granularity_(granularity) {
  if (granularity_ == 0) throw InvalidArgument("device granularity must be positive");
}

std::optional<SegmentId> Device::reserve_segment(Bytes size, std::size_t event_index,
                                                 Bytes allocated_before) {
  if (size == 0 || size % granularity_ != 0) {
    throw InvalidArgument("segment size " + std::to_string(size) +
                          " is not a positive multiple of the granularity");
  }
  if (size > capacity_ - reserved_total_) return std::nullopt;

  const SegmentId id{next_segment_++};
  log_.push_back({event_index, id, size, reserved_total_, allocated_before});
  segments_.emplace(id, size);
  reserved_total_ += size;
  return id;
}

void Device::release_segment(SegmentId segment) {
  auto it = segments_.find(segment);
  if (it == segments_.end()) {
    throw UnknownSegment("unknown segment " +
                         std::to_string(static_cast<std::uint64_t>(segment)));
  }
  reserved_total_ -= it->second;
  released_total_ += it->second;
  segments_.erase(it);
}

bool Device::has_segment(SegmentId segment) const { return segments_.contains(segment); }

Bytes Device::segment_size(SegmentId segment) const {
  auto it = segments_.find(segment);
  if (it == segments_.end()) {
    throw UnknownSegment("unknown segment " +
                         std::to_string(static_cast<std::uint64_t>(segment)));
  }
  return it->second;
}

}  // namespace fragsim
