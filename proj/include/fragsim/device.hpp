#pragma once

#include <map>
#include <optional>
#include <vector>

#include "fragsim/types.hpp"

namespace fragsim {

// One successful segment reservation. reserved_before/allocated_before are
// the accounting immediately before the reservation; their difference is the
// fragmentation sample the profiler records.
struct ReservationRecord {
  std::size_t event_index = 0;
  SegmentId segment{};
  Bytes requested = 0;
  Bytes reserved_before = 0;
  Bytes allocated_before = 0;

  friend bool operator==(const ReservationRecord&, const ReservationRecord&) = default;
};

// Finite-capacity simulated device. Hands out segments and logs every
// reservation; it knows nothing about blocks inside a segment.
class Device {
 public:
  Device(Bytes capacity, Bytes granularity);

  // Returns nullopt on capacity shortfall. The caller decides whether to
  // flush and retry. Throws InvalidArgument for a misaligned size.
  std::optional<SegmentId> reserve_segment(Bytes size, std::size_t event_index,
                                           Bytes allocated_before);

  // Throws UnknownSegment if the id is not currently reserved.
  void release_segment(SegmentId segment);

  bool has_segment(SegmentId segment) const;
  Bytes segment_size(SegmentId segment) const;

  Bytes capacity() const noexcept { return capacity_; }
  Bytes granularity() const noexcept { return granularity_; }
  Bytes reserved_total() const noexcept { return reserved_total_; }
  Bytes released_total() const noexcept { return released_total_; }
  const std::vector<ReservationRecord>& reservation_log() const noexcept { return log_; }

 private:
  Bytes capacity_;
  Bytes granularity_;
  Bytes reserved_total_ = 0;
  Bytes released_total_ = 0;
  std::uint64_t next_segment_ = 0;
  std::map<SegmentId, Bytes> segments_;
  std::vector<ReservationRecord> log_;
};

}  // namespace fragsim
