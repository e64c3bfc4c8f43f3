#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fragsim {

using Bytes = std::uint64_t;
using StreamTag = std::uint32_t;

enum class BlockId : std::uint64_t {};
enum class SegmentId : std::uint64_t {};

inline constexpr Bytes KiB = 1024;
inline constexpr Bytes MiB = 1024 * KiB;
inline constexpr Bytes GiB = 1024 * MiB;

constexpr Bytes round_up(Bytes value, Bytes quantum) {
  return (value + quantum - 1) / quantum * quantum;
}

struct AllocatorStats {
  Bytes reserved = 0;
  Bytes allocated = 0;
  Bytes cached = 0;
  std::size_t segment_count = 0;

  friend bool operator==(const AllocatorStats&, const AllocatorStats&) = default;
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public SimError {
 public:
  using SimError::SimError;
};

class DoubleFree : public SimError {
 public:
  using SimError::SimError;
};

class IllegalRelease : public SimError {
 public:
  using SimError::SimError;
};

class UnknownSegment : public SimError {
 public:
  using SimError::SimError;
};

class InvalidSpec : public SimError {
 public:
  using SimError::SimError;
};

class EmptyResult : public SimError {
 public:
  using SimError::SimError;
};

class ConfigError : public SimError {
 public:
  using SimError::SimError;
};

// A device reservation failed even after flushing the cache once.
class OutOfMemory : public SimError {
 public:
  OutOfMemory(Bytes requested, Bytes segment_size, AllocatorStats stats,
              std::size_t event_index);

  Bytes requested() const noexcept { return requested_; }
  Bytes segment_size() const noexcept { return segment_size_; }
  const AllocatorStats& stats() const noexcept { return stats_; }
  std::size_t event_index() const noexcept { return event_index_; }
  // reserved - allocated at the failed reservation.
  Bytes frag_sample() const noexcept { return stats_.reserved - stats_.allocated; }

 private:
  Bytes requested_;
  Bytes segment_size_;
  AllocatorStats stats_;
  std::size_t event_index_;
};

// Trace ingestion failure; line is 1-based, 0 when not tied to a line.
class TraceError : public SimError {
 public:
  TraceError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fragsim
