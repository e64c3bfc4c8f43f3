#include <sstream>
#include <unordered_map>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fragsim/profiler.hpp"
#include "fragsim/strategy.hpp"
#include "oracle.hpp"

namespace fragsim {
namespace {

TEST(ProfilerTest, SampleIsReservedMinusAllocated) {
  Profiler p;
  EXPECT_EQ(p.sample_fragmentation(0, 10 * MiB, 7 * MiB), 3 * MiB);
  EXPECT_EQ(p.sample_fragmentation(1, 0, 0), 0u);
  EXPECT_EQ(p.sample_fragmentation(2, 2 * MiB, 2 * MiB), 0u);
  EXPECT_THROW(p.sample_fragmentation(3, 1 * MiB, 2 * MiB), InvalidArgument);
  const FragReport r = p.finalize();
  ASSERT_EQ(r.frag_series.size(), 3u);
  EXPECT_EQ(r.frag_series[0], (SeriesPoint{0, 3 * MiB}));
}

TEST(ProfilerTest, SingleSmallAlloc) {
  Trace t;
  t.events = {TraceEvent::alloc("a", 1000)};
  const FragReport r = run(t, CachePolicy::never);
  EXPECT_EQ(r.peak_reserved, 2 * MiB);
  EXPECT_EQ(r.peak_allocated, 1024u);
  EXPECT_EQ(r.frag_at_peak, 0u);
  EXPECT_EQ(r.reserved_wo_frag, 2 * MiB);
  EXPECT_EQ(r.peak_event_index, 0);
}

// a: 2 MiB segment. It is fully cached when c needs a second, 4 MiB segment.
Trace two_segment_trace() {
  Trace t;
  t.events = {TraceEvent::alloc("a", 2 * MiB), TraceEvent::free("a"),
              TraceEvent::alloc("c", 4 * MiB), TraceEvent::free("c"),
              TraceEvent::alloc("d", 4 * MiB)};
  return t;
}

TEST(ProfilerTest, TwoSegmentScenarioMatchesOracle) {
  testing::OracleAccountant o;
  const auto a = o.alloc(2 * MiB);
  o.free(*a);
  const Bytes cached_before_c = o.reserved() - o.allocated();
  const auto c = o.alloc(4 * MiB);
  const Bytes peak = o.reserved();
  o.free(*c);
  o.alloc(4 * MiB);
  ASSERT_EQ(o.reserved(), peak);

  const FragReport r = run(two_segment_trace(), CachePolicy::never);
  EXPECT_EQ(r.peak_reserved, peak);
  EXPECT_EQ(r.frag_at_peak, cached_before_c);
  // Frozen from the hand replay: the whole first segment is cached.
  EXPECT_EQ(r.frag_at_peak, 2 * MiB);
  EXPECT_EQ(r.peak_reserved, 6 * MiB);
  EXPECT_EQ(r.reserved_wo_frag, 4 * MiB);
  EXPECT_EQ(r.peak_event_index, 2);
  EXPECT_EQ(r.peak_allocated, 4 * MiB);
  ASSERT_EQ(r.frag_series.size(), 2u);
  EXPECT_EQ(r.frag_series[0], (SeriesPoint{0, 0}));
  EXPECT_EQ(r.frag_series[1], (SeriesPoint{2, 2 * MiB}));
}

TEST(ProfilerTest, FragAtPeakUsesLastSampleBeforeFirstPeak) {
  Profiler p;
  p.sample_fragmentation(0, 0, 0);
  p.record(0, 2 * MiB, 2 * MiB);
  p.sample_fragmentation(1, 2 * MiB, 1 * MiB);
  p.record(1, 4 * MiB, 3 * MiB);
  p.record(2, 4 * MiB, 1 * MiB);
  p.sample_fragmentation(3, 4 * MiB, 1 * MiB);
  p.record(3, 4 * MiB, 2 * MiB);
  const FragReport r = p.finalize();
  EXPECT_EQ(r.peak_reserved, 4 * MiB);
  EXPECT_EQ(r.peak_event_index, 1);
  EXPECT_EQ(r.frag_at_peak, 1 * MiB);
  EXPECT_EQ(r.frag_max, 3 * MiB);
  EXPECT_EQ(r.reserved_wo_frag + r.frag_at_peak, r.peak_reserved);
}

TEST(ProfilerTest, EmptyRunIsAllZero) {
  const FragReport r = run(Trace{}, CachePolicy::after_all_phases);
  EXPECT_EQ(r, FragReport{});
  EXPECT_EQ(r.peak_event_index, -1);
}

TEST(ProfilerTest, SummaryOfEmptyReportHasEveryField) {
  const auto j = nlohmann::json::parse(export_report_string(FragReport{}, ExportFormat::summary));
  const char* keys[] = {"peak_reserved",     "peak_allocated",          "frag_at_peak",
                        "reserved_wo_frag",  "frag_max",                "peak_event_index",
                        "empty_cache_invocations", "bytes_released_total", "events_recorded",
                        "oom",               "oom_event_index",         "oom_request_bytes",
                        "oom_frag_sample"};
  EXPECT_EQ(j.size(), std::size(keys));
  for (const char* k : keys) ASSERT_TRUE(j.contains(k)) << k;
  for (const char* k : {"peak_reserved", "peak_allocated", "frag_at_peak", "reserved_wo_frag",
                        "frag_max", "empty_cache_invocations", "bytes_released_total",
                        "events_recorded", "oom_request_bytes", "oom_frag_sample"}) {
    EXPECT_EQ(j[k].get<std::uint64_t>(), 0u) << k;
  }
  EXPECT_FALSE(j["oom"].get<bool>());
}

Trace phased_trace() {
  Trace t;
  t.events = {TraceEvent::alloc("w", 3 * MiB),
              TraceEvent::begin("generation", PhaseKind::inference),
              TraceEvent::alloc("kv", 5 * MiB),
              TraceEvent::free("kv"),
              TraceEvent::end("generation", PhaseKind::inference),
              TraceEvent::begin("train_actor", PhaseKind::training),
              TraceEvent::alloc("act", 7 * MiB),
              TraceEvent::free("act"),
              TraceEvent::end("train_actor", PhaseKind::training)};
  return t;
}

TEST(ProfilerTest, TimelineHasOneRowPerEventAndPhaseColumn) {
  const FragReport r = run(phased_trace(), CachePolicy::never);
  std::istringstream in(export_report_string(r, ExportFormat::timeline));
  const auto rows = parse_timeline(in);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows.size(), r.events_recorded);
  EXPECT_EQ(rows[0].phase, "");
  EXPECT_EQ(rows[1].phase, "generation");
  EXPECT_EQ(rows[4].phase, "generation");
  EXPECT_EQ(rows[5].phase, "train_actor");
  EXPECT_TRUE(rows[0].frag);
  EXPECT_FALSE(rows[1].frag);
  EXPECT_TRUE(rows[2].frag);
  ASSERT_TRUE(rows[6].frag);
  // 4 + 6 MiB reserved, only w live.
  EXPECT_EQ(*rows[6].frag, 7 * MiB);
}

TEST(ProfilerTest, TimelineRoundTripsSeries) {
  WorkloadSpec s;
  s.rounds = 1;
  s.layers = 3;
  s.batch = 4;
  s.gen_tokens = 8;
  const FragReport r = run(generate(s), CachePolicy::after_inference);
  std::istringstream in(export_report_string(r, ExportFormat::timeline));
  const auto rows = parse_timeline(in);
  ASSERT_EQ(rows.size(), r.reserved_series.size());
  std::vector<SeriesPoint> frag;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].event_index, r.reserved_series[i].event_index);
    EXPECT_EQ(rows[i].reserved, r.reserved_series[i].bytes);
    EXPECT_EQ(rows[i].allocated, r.allocated_series[i].bytes);
    if (rows[i].frag) frag.push_back({rows[i].event_index, *rows[i].frag});
  }
  EXPECT_EQ(frag, r.frag_series);
}

TEST(ProfilerTest, ParseTimelineRejectsGarbage) {
  std::istringstream bad_header("a,b,c\n");
  EXPECT_THROW(parse_timeline(bad_header), TraceError);
  std::istringstream bad_row("event_index,reserved_bytes,allocated_bytes,frag_bytes,phase\n1,2\n");
  EXPECT_THROW(parse_timeline(bad_row), TraceError);
  std::istringstream bad_num(
      "event_index,reserved_bytes,allocated_bytes,frag_bytes,phase\n1,x,3,,p\n");
  EXPECT_THROW(parse_timeline(bad_num), TraceError);
}

TEST(ProfilerTest, FragSeriesReproducibleFromReservationLog) {
  WorkloadSpec s;
  s.rounds = 1;
  s.layers = 4;
  s.batch = 4;
  s.gen_tokens = 16;
  const Trace t = generate(s);
  const FragReport r = run(t, CachePolicy::never);

  CachingAllocator a;
  std::unordered_map<std::string, BlockId> live;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& ev = t.events[i];
    a.set_clock(i);
    if (ev.kind == EventKind::alloc) live[ev.tensor_id] = a.alloc(ev.bytes);
    if (ev.kind == EventKind::free) a.free(live.at(ev.tensor_id));
  }
  const auto& log = a.device().reservation_log();
  ASSERT_EQ(log.size(), r.frag_series.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(r.frag_series[i].event_index, log[i].event_index);
    EXPECT_EQ(r.frag_series[i].bytes, log[i].reserved_before - log[i].allocated_before);
  }
  for (std::size_t i = 0; i < r.reserved_series.size(); ++i) {
    EXPECT_LE(r.allocated_series[i].bytes, r.reserved_series[i].bytes);
  }
}

TEST(ProfilerTest, PhaseAtFindsEnclosingPhase) {
  const FragReport r = run(phased_trace(), CachePolicy::never);
  EXPECT_FALSE(phase_at(r, 0));
  EXPECT_EQ(phase_at(r, 1)->phase_name, "generation");
  EXPECT_EQ(phase_at(r, 4)->phase_name, "generation");
  EXPECT_EQ(phase_at(r, 6)->phase_name, "train_actor");
  EXPECT_EQ(phase_at(r, 6)->phase_kind, PhaseKind::training);
}

TEST(ProfilerTest, OomIsRecorded) {
  Profiler p;
  AllocatorStats st{4 * MiB, 1 * MiB, 3 * MiB, 2};
  p.note_oom(OutOfMemory(8 * MiB, 8 * MiB, st, 12));
  const FragReport r = p.finalize();
  EXPECT_TRUE(r.oom);
  EXPECT_EQ(r.oom_event_index, 12);
  EXPECT_EQ(r.oom_request_bytes, 8 * MiB);
  EXPECT_EQ(r.oom_frag_sample, 3 * MiB);
}

}  // namespace
}  // namespace fragsim
