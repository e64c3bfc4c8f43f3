#include <gtest/gtest.h>

#include "fragsim/allocator.hpp"
#include "fragsim/device.hpp"

namespace fragsim {
namespace {

TEST(DeviceTest, FirstReservationLogsZeroState) {
  Device d(24 * GiB, 2 * MiB);
  const auto seg = d.reserve_segment(2 * MiB, 0, 0);
  ASSERT_TRUE(seg);
  EXPECT_EQ(d.reserved_total(), 2 * MiB);
  ASSERT_EQ(d.reservation_log().size(), 1u);
  const ReservationRecord& r = d.reservation_log()[0];
  EXPECT_EQ(r.event_index, 0u);
  EXPECT_EQ(r.segment, *seg);
  EXPECT_EQ(r.requested, 2 * MiB);
  EXPECT_EQ(r.reserved_before, 0u);
  EXPECT_EQ(r.allocated_before, 0u);
}

TEST(DeviceTest, MisalignedSizeIsRejected) {
  Device d(24 * GiB, 2 * MiB);
  EXPECT_THROW(d.reserve_segment(3 * MiB, 0, 0), InvalidArgument);
  EXPECT_THROW(d.reserve_segment(0, 0, 0), InvalidArgument);
  EXPECT_THROW(Device(1 * MiB, 0), InvalidArgument);
}

TEST(DeviceTest, ShortfallReturnsNothing) {
  Device d(4 * MiB, 2 * MiB);
  ASSERT_TRUE(d.reserve_segment(4 * MiB, 0, 0));
  EXPECT_FALSE(d.reserve_segment(2 * MiB, 1, 4 * MiB));
  EXPECT_EQ(d.reservation_log().size(), 1u);
}

TEST(DeviceTest, ReleaseAndDoubleRelease) {
  Device d(24 * GiB, 2 * MiB);
  const auto a = d.reserve_segment(2 * MiB, 0, 0);
  const auto b = d.reserve_segment(4 * MiB, 1, 0);
  d.release_segment(*a);
  EXPECT_EQ(d.reserved_total(), 4 * MiB);
  EXPECT_EQ(d.released_total(), 2 * MiB);
  EXPECT_FALSE(d.has_segment(*a));
  EXPECT_EQ(d.segment_size(*b), 4 * MiB);
  EXPECT_THROW(d.release_segment(*a), UnknownSegment);
  EXPECT_THROW(d.segment_size(*a), UnknownSegment);
}

TEST(DeviceTest, CachedShortfallIsRecoveredByFlush) {
  CachingAllocator a({}, 4 * MiB);
  const BlockId x = a.alloc(4 * MiB);
  a.free(x);
  // A small-pool request cannot use the cached large segment.
  a.alloc(1024);
  EXPECT_EQ(a.retry_flushes(), 1u);
  EXPECT_EQ(a.stats().reserved, 2 * MiB);

  CachingAllocator b({}, 6 * MiB);
  b.alloc(1024);
  const BlockId y = b.alloc(2 * MiB);
  b.free(y);
  // 4 of 6 MiB are reserved and the large segment is fully cached, so the
  // 4 MiB reservation only fits after the flush.
  b.alloc(2 * MiB + 1);
  EXPECT_EQ(b.retry_flushes(), 1u);
  EXPECT_EQ(b.stats().reserved, 6 * MiB);
}

TEST(DeviceTest, AllLiveShortfallIsOutOfMemory) {
  CachingAllocator a({}, 4 * MiB);
  a.alloc(2 * MiB);
  a.alloc(2 * MiB);
  EXPECT_THROW(a.alloc(2 * MiB), OutOfMemory);
}

TEST(DeviceTest, ReservedTotalTracksAllocatorAndLog) {
  CachingAllocator a;
  std::vector<BlockId> ids;
  for (int i = 0; i < 20; ++i) {
    a.set_clock(static_cast<std::size_t>(i));
    ids.push_back(a.alloc((static_cast<Bytes>(i) + 1) * 300 * KiB));
  }
  for (std::size_t i = 0; i < ids.size(); i += 2) a.free(ids[i]);
  a.empty_cache();

  const Device& d = a.device();
  EXPECT_EQ(d.reserved_total(), a.stats().reserved);
  Bytes logged = 0;
  std::size_t last = 0;
  for (const ReservationRecord& r : d.reservation_log()) {
    logged += r.requested;
    EXPECT_GE(r.event_index, last);
    last = r.event_index;
  }
  EXPECT_EQ(logged - d.released_total(), d.reserved_total());
}

}  // namespace
}  // namespace fragsim
