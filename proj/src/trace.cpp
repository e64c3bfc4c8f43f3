#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fragsim/workload.hpp"

namespace fragsim {

namespace {

using nlohmann::json;

bool valid_phase_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  });
}

// Incremental well-formedness check shared by the parser and validate_trace.
class TraceChecker {
 public:
  void feed(const TraceEvent& ev, std::size_t line) {
    switch (ev.kind) {
      case EventKind::alloc:
        if (ev.tensor_id.empty()) throw TraceError(line, "alloc without tensor_id");
        if (ev.bytes == 0) throw TraceError(line, "alloc of zero bytes");
        if (!live_.insert(ev.tensor_id).second) {
          throw TraceError(line, "tensor '" + ev.tensor_id + "' allocated while still live");
        }
        break;
      case EventKind::free:
        if (live_.erase(ev.tensor_id) == 0) {
          throw TraceError(line, "free of tensor '" + ev.tensor_id + "' which is not live");
        }
        break;
      case EventKind::phase_begin:
        if (!valid_phase_name(ev.phase_name)) throw TraceError(line, "invalid phase_name");
        if (open_) {
          throw TraceError(line, "phase '" + ev.phase_name + "' begins inside open phase '" +
                                     open_name_ + "'");
        }
        open_ = true;
        open_name_ = ev.phase_name;
        open_kind_ = ev.phase_kind;
        break;
      case EventKind::phase_end:
        if (!open_) throw TraceError(line, "phase_end without phase_begin");
        if (ev.phase_name != open_name_ || ev.phase_kind != open_kind_) {
          throw TraceError(line, "phase_end '" + ev.phase_name + "' does not match open phase '" +
                                     open_name_ + "'");
        }
        open_ = false;
        break;
    }
  }

  void finish(std::size_t line) const {
    if (open_) throw TraceError(line, "unbalanced phases: '" + open_name_ + "' never ends");
  }

 private:
  std::unordered_set<std::string> live_;
  bool open_ = false;
  std::string open_name_;
  PhaseKind open_kind_ = PhaseKind::inference;
};

const json& require(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw TraceError(line, std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  const json& v = require(obj, key, line);
  if (!v.is_string()) throw TraceError(line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

TraceEvent decode(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw TraceError(line, "record is not an object");
  const auto kind = parse_event_kind(require_string(obj, "kind", line));
  if (!kind) throw TraceError(line, "unknown kind");

  TraceEvent ev;
  ev.kind = *kind;
  std::size_t expected = 0;
  switch (ev.kind) {
    case EventKind::alloc: {
      ev.tensor_id = require_string(obj, "tensor_id", line);
      const json& b = require(obj, "bytes", line);
      if (!b.is_number_integer() || (b.is_number_integer() && !b.is_number_unsigned() &&
                                     b.get<std::int64_t>() <= 0)) {
        throw TraceError(line, "field 'bytes' must be a positive integer");
      }
      ev.bytes = b.get<Bytes>();
      expected = 3;
      break;
    }
    case EventKind::free:
      ev.tensor_id = require_string(obj, "tensor_id", line);
      expected = 2;
      break;
    case EventKind::phase_begin:
    case EventKind::phase_end: {
      ev.phase_name = require_string(obj, "phase_name", line);
      const auto pk = parse_phase_kind(require_string(obj, "phase_kind", line));
      if (!pk) throw TraceError(line, "unknown phase_kind");
      ev.phase_kind = *pk;
      expected = 3;
      break;
    }
  }
  if (obj.size() != expected) throw TraceError(line, "unexpected extra fields");
  return ev;
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::alloc: return "alloc";
    case EventKind::free: return "free";
    case EventKind::phase_begin: return "phase_begin";
    case EventKind::phase_end: return "phase_end";
  }
  return "?";
}

std::string_view to_string(PhaseKind kind) {
  return kind == PhaseKind::training ? "training" : "inference";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  if (text == "alloc") return EventKind::alloc;
  if (text == "free") return EventKind::free;
  if (text == "phase_begin") return EventKind::phase_begin;
  if (text == "phase_end") return EventKind::phase_end;
  return std::nullopt;
}

std::optional<PhaseKind> parse_phase_kind(std::string_view text) {
  if (text == "inference") return PhaseKind::inference;
  if (text == "training") return PhaseKind::training;
  return std::nullopt;
}

TraceEvent TraceEvent::alloc(std::string id, Bytes bytes) {
  TraceEvent ev;
  ev.kind = EventKind::alloc;
  ev.tensor_id = std::move(id);
  ev.bytes = bytes;
  return ev;
}

TraceEvent TraceEvent::free(std::string id) {
  TraceEvent ev;
  ev.kind = EventKind::free;
  ev.tensor_id = std::move(id);
  return ev;
}

TraceEvent TraceEvent::begin(std::string name, PhaseKind kind) {
  TraceEvent ev;
  ev.kind = EventKind::phase_begin;
  ev.phase_name = std::move(name);
  ev.phase_kind = kind;
  return ev;
}

TraceEvent TraceEvent::end(std::string name, PhaseKind kind) {
  TraceEvent ev = begin(std::move(name), kind);
  ev.kind = EventKind::phase_end;
  return ev;
}

void validate_trace(const std::vector<TraceEvent>& events) {
  TraceChecker checker;
  for (std::size_t i = 0; i < events.size(); ++i) checker.feed(events[i], i + 1);
  checker.finish(events.size());
}

Trace parse_trace(std::istream& in) {
  Trace trace;
  TraceChecker checker;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw TraceError(line, std::string("malformed record: ") + e.what());
    }
    TraceEvent ev = decode(obj, line);
    checker.feed(ev, line);
    trace.events.push_back(std::move(ev));
  }
  checker.finish(line);
  return trace;
}

Trace parse_trace_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_trace(in);
}

void write_trace(std::ostream& out, const Trace& trace) {
  for (const TraceEvent& ev : trace.events) {
    out << R"({"kind":")" << to_string(ev.kind) << '"';
    switch (ev.kind) {
      case EventKind::alloc:
        out << R"(,"tensor_id":)" << json(ev.tensor_id).dump() << R"(,"bytes":)" << ev.bytes;
        break;
      case EventKind::free:
        out << R"(,"tensor_id":)" << json(ev.tensor_id).dump();
        break;
      case EventKind::phase_begin:
      case EventKind::phase_end:
        out << R"(,"phase_name":)" << json(ev.phase_name).dump() << R"(,"phase_kind":")"
            << to_string(ev.phase_kind) << '"';
        break;
    }
    out << "}\n";
  }
}

std::string write_trace_string(const Trace& trace) {
  std::ostringstream out;
  write_trace(out, trace);
  return out.str();
}

Trace slice_training_only(const Trace& trace) {
  const auto& events = trace.events;
  const bool has_training = std::any_of(events.begin(), events.end(), [](const TraceEvent& ev) {
    return ev.kind == EventKind::phase_begin && ev.phase_kind == PhaseKind::training;
  });
  if (!has_training) throw EmptyResult("trace has no training phase");

  // For every alloc: was it made inside an inference phase, and was its
  // matching free also inside one?
  std::vector<bool> drop(events.size(), false);
  std::unordered_map<std::string, std::size_t> open_alloc;
  std::vector<bool> alloc_in_inference(events.size(), false);
  std::optional<PhaseKind> phase;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& ev = events[i];
    const bool in_inference = phase == PhaseKind::inference;
    switch (ev.kind) {
      case EventKind::phase_begin:
        phase = ev.phase_kind;
        drop[i] = ev.phase_kind == PhaseKind::inference;
        break;
      case EventKind::phase_end:
        drop[i] = ev.phase_kind == PhaseKind::inference;
        phase.reset();
        break;
      case EventKind::alloc:
        open_alloc[ev.tensor_id] = i;
        alloc_in_inference[i] = in_inference;
        break;
      case EventKind::free: {
        auto it = open_alloc.find(ev.tensor_id);
        if (it == open_alloc.end()) throw TraceError(i + 1, "free before alloc");
        if (in_inference && alloc_in_inference[it->second]) {
          drop[it->second] = true;
          drop[i] = true;
        }
        open_alloc.erase(it);
        break;
      }
    }
  }

  Trace out;
  out.spec = trace.spec;
  out.events.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!drop[i]) out.events.push_back(events[i]);
  }
  return out;
}

std::vector<std::string> unfreed_tensors(const Trace& trace) {
  std::map<std::string, bool> live;
  for (const TraceEvent& ev : trace.events) {
    if (ev.kind == EventKind::alloc) live[ev.tensor_id] = true;
    if (ev.kind == EventKind::free) live.erase(ev.tensor_id);
  }
  std::vector<std::string> out;
  out.reserve(live.size());
  for (const auto& [id, _] : live) out.push_back(id);
  return out;
}

Bytes live_peak(const Trace& trace, PhaseKind kind) {
  std::unordered_map<std::string, Bytes> sizes;
  Bytes live = 0;
  Bytes peak = 0;
  std::optional<PhaseKind> phase;
  for (const TraceEvent& ev : trace.events) {
    switch (ev.kind) {
      case EventKind::alloc:
        sizes[ev.tensor_id] = ev.bytes;
        live += ev.bytes;
        break;
      case EventKind::free: {
        auto it = sizes.find(ev.tensor_id);
        if (it != sizes.end()) {
          live -= it->second;
          sizes.erase(it);
        }
        break;
      }
      case EventKind::phase_begin:
        phase = ev.phase_kind;
        break;
      case EventKind::phase_end:
        phase.reset();
        break;
    }
    if (phase == kind) peak = std::max(peak, live);
  }
  return peak;
}

}  // namespace fragsim
