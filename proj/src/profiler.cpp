#include "fragsim/profiler.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace fragsim {

Bytes Profiler::sample_fragmentation(std::size_t event_index, Bytes reserved_before,
                                     Bytes allocated_before) {
  if (allocated_before > reserved_before) {
    throw InvalidArgument("fragmentation sample with allocated > reserved");
  }
  const Bytes frag = reserved_before - allocated_before;
  report_.frag_series.push_back({event_index, frag});
  return frag;
}

void Profiler::drain(const std::vector<ReservationRecord>& log) {
  for (; drained_ < log.size(); ++drained_) {
    const ReservationRecord& r = log[drained_];
    sample_fragmentation(r.event_index, r.reserved_before, r.allocated_before);
  }
}

void Profiler::record(std::size_t event_index, Bytes reserved, Bytes allocated) {
  report_.reserved_series.push_back({event_index, reserved});
  report_.allocated_series.push_back({event_index, allocated});
}

void Profiler::annotate(std::size_t event_index, const std::string& phase_name, PhaseKind kind,
                        Boundary boundary) {
  report_.phase_annotations.push_back({event_index, phase_name, kind, boundary});
}

void Profiler::note_empty_cache(Bytes released) {
  ++report_.empty_cache_invocations;
  report_.bytes_released_total += released;
}

void Profiler::note_oom(const OutOfMemory& error) {
  report_.oom = true;
  report_.oom_event_index = static_cast<std::int64_t>(error.event_index());
  report_.oom_request_bytes = error.requested();
  report_.oom_frag_sample = error.frag_sample();
}

FragReport Profiler::finalize() const {
  FragReport r = report_;
  r.events_recorded = r.reserved_series.size();

  std::size_t peak_pos = 0;
  for (std::size_t i = 0; i < r.reserved_series.size(); ++i) {
    if (r.reserved_series[i].bytes > r.reserved_series[peak_pos].bytes) peak_pos = i;
  }
  if (!r.reserved_series.empty() && r.reserved_series[peak_pos].bytes > 0) {
    r.peak_reserved = r.reserved_series[peak_pos].bytes;
    const std::size_t peak_event = r.reserved_series[peak_pos].event_index;
    r.peak_event_index = static_cast<std::int64_t>(peak_event);
    // Piecewise-constant between reservations: last sample at or before the peak.
    auto it = std::upper_bound(
        r.frag_series.begin(), r.frag_series.end(), peak_event,
        [](std::size_t idx, const SeriesPoint& p) { return idx < p.event_index; });
    r.frag_at_peak = it == r.frag_series.begin() ? 0 : std::prev(it)->bytes;
  }
  for (const SeriesPoint& p : r.allocated_series) r.peak_allocated = std::max(r.peak_allocated, p.bytes);
  for (const SeriesPoint& p : r.frag_series) r.frag_max = std::max(r.frag_max, p.bytes);
  r.reserved_wo_frag = r.peak_reserved - r.frag_at_peak;
  return r;
}

std::optional<PhaseAnnotation> phase_at(const FragReport& report, std::size_t event_index) {
  std::optional<PhaseAnnotation> open;
  for (const PhaseAnnotation& a : report.phase_annotations) {
    if (a.event_index > event_index) break;
    if (a.boundary == Boundary::begin) {
      open = a;
    } else if (a.event_index < event_index) {
      open.reset();
    }
  }
  return open;
}

namespace {

void export_summary(std::ostream& out, const FragReport& r) {
  nlohmann::ordered_json j;
  j["peak_reserved"] = r.peak_reserved;
  j["peak_allocated"] = r.peak_allocated;
  j["frag_at_peak"] = r.frag_at_peak;
  j["reserved_wo_frag"] = r.reserved_wo_frag;
  j["frag_max"] = r.frag_max;
  j["peak_event_index"] = r.peak_event_index;
  j["empty_cache_invocations"] = r.empty_cache_invocations;
  j["bytes_released_total"] = r.bytes_released_total;
  j["events_recorded"] = r.events_recorded;
  j["oom"] = r.oom;
  j["oom_event_index"] = r.oom_event_index;
  j["oom_request_bytes"] = r.oom_request_bytes;
  j["oom_frag_sample"] = r.oom_frag_sample;
  out << j.dump() << '\n';
}

void export_timeline(std::ostream& out, const FragReport& r) {
  out << "event_index,reserved_bytes,allocated_bytes,frag_bytes,phase\n";
  auto frag = r.frag_series.begin();
  auto ann = r.phase_annotations.begin();
  std::string phase;
  bool closing = false;
  for (std::size_t i = 0; i < r.reserved_series.size(); ++i) {
    const std::size_t idx = r.reserved_series[i].event_index;
    if (closing) {
      phase.clear();
      closing = false;
    }
    for (; ann != r.phase_annotations.end() && ann->event_index <= idx; ++ann) {
      phase = ann->phase_name;
      closing = ann->boundary == Boundary::end;
    }
    out << idx << ',' << r.reserved_series[i].bytes << ',' << r.allocated_series[i].bytes << ',';
    while (frag != r.frag_series.end() && frag->event_index < idx) ++frag;
    if (frag != r.frag_series.end() && frag->event_index == idx) out << frag->bytes;
    out << ',' << phase << '\n';
  }
}

Bytes parse_bytes(const std::string& field, std::size_t line) {
  if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos) {
    throw TraceError(line, "bad numeric field '" + field + "'");
  }
  try {
    return std::stoull(field);
  } catch (const std::exception&) {
    throw TraceError(line, "numeric field out of range '" + field + "'");
  }
}

}  // namespace

void export_report(std::ostream& out, const FragReport& report, ExportFormat format) {
  if (format == ExportFormat::summary) {
    export_summary(out, report);
  } else {
    export_timeline(out, report);
  }
}

std::string export_report_string(const FragReport& report, ExportFormat format) {
  std::ostringstream out;
  export_report(out, report, format);
  return out.str();
}

std::vector<TimelineRow> parse_timeline(std::istream& in) {
  std::vector<TimelineRow> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (line == 1) {
      if (text != "event_index,reserved_bytes,allocated_bytes,frag_bytes,phase") {
        throw TraceError(line, "unexpected timeline header");
      }
      continue;
    }
    if (text.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!text.empty() && text.back() == ',') fields.emplace_back();
    if (fields.size() != 5) throw TraceError(line, "expected 5 fields");
    TimelineRow row;
    row.event_index = parse_bytes(fields[0], line);
    row.reserved = parse_bytes(fields[1], line);
    row.allocated = parse_bytes(fields[2], line);
    if (!fields[3].empty()) row.frag = parse_bytes(fields[3], line);
    row.phase = fields[4];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fragsim
