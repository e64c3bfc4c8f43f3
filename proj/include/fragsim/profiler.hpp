#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fragsim/device.hpp"
#include "fragsim/types.hpp"
#include "fragsim/workload.hpp"

namespace fragsim {

struct SeriesPoint {
  std::size_t event_index = 0;
  Bytes bytes = 0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

enum class Boundary : std::uint8_t { begin, end };

struct PhaseAnnotation {
  std::size_t event_index = 0;
  std::string phase_name;
  PhaseKind phase_kind = PhaseKind::inference;
  Boundary boundary = Boundary::begin;

  friend bool operator==(const PhaseAnnotation&, const PhaseAnnotation&) = default;
};

// Peak and fragmentation summary of one replay.
struct FragReport {
  Bytes peak_reserved = 0;
  Bytes peak_allocated = 0;
  // Fragmentation sample in force when peak_reserved is first reached.
  Bytes frag_at_peak = 0;
  Bytes reserved_wo_frag = 0;
  Bytes frag_max = 0;
  std::int64_t peak_event_index = -1;
  std::uint64_t empty_cache_invocations = 0;
  Bytes bytes_released_total = 0;
  std::uint64_t events_recorded = 0;
  bool oom = false;
  std::int64_t oom_event_index = -1;
  Bytes oom_request_bytes = 0;
  Bytes oom_frag_sample = 0;

  std::vector<SeriesPoint> frag_series;
  std::vector<SeriesPoint> reserved_series;
  std::vector<SeriesPoint> allocated_series;
  std::vector<PhaseAnnotation> phase_annotations;

  friend bool operator==(const FragReport&, const FragReport&) = default;
};

/// Collects the reserved/allocated series of a replay and the fragmentation
/// samples taken at every segment reservation.
class Profiler {
 public:
  // Appends reserved_before - allocated_before to the fragmentation series.
  Bytes sample_fragmentation(std::size_t event_index, Bytes reserved_before,
                             Bytes allocated_before);
  // Feeds every reservation-log entry not yet seen.
  void drain(const std::vector<ReservationRecord>& log);

  void record(std::size_t event_index, Bytes reserved, Bytes allocated);
  void annotate(std::size_t event_index, const std::string& phase_name, PhaseKind kind,
                Boundary boundary);
  void note_empty_cache(Bytes released);
  void note_oom(const OutOfMemory& error);

  FragReport finalize() const;

 private:
  FragReport report_;
  std::size_t drained_ = 0;
};

enum class ExportFormat : std::uint8_t { summary, timeline };

// summary: one JSON object of the scalar fields.
// timeline: CSV rows event_index,reserved_bytes,allocated_bytes,frag_bytes,phase.
// frag_bytes is empty for events without a reservation.
void export_report(std::ostream& out, const FragReport& report, ExportFormat format);
std::string export_report_string(const FragReport& report, ExportFormat format);

struct TimelineRow {
  std::size_t event_index = 0;
  Bytes reserved = 0;
  Bytes allocated = 0;
  std::optional<Bytes> frag;
  std::string phase;

  friend bool operator==(const TimelineRow&, const TimelineRow&) = default;
};

// Throws TraceError on malformed input.
std::vector<TimelineRow> parse_timeline(std::istream& in);

// Begin annotation of the phase containing the event, nullopt outside phases.
std::optional<PhaseAnnotation> phase_at(const FragReport& report, std::size_t event_index);

}  // namespace fragsim
