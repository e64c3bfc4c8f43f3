#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fragsim/types.hpp"

namespace fragsim {

enum class EventKind : std::uint8_t { alloc, free, phase_begin, phase_end };
enum class PhaseKind : std::uint8_t { inference, training };

std::string_view to_string(EventKind kind);
std::string_view to_string(PhaseKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);
std::optional<PhaseKind> parse_phase_kind(std::string_view text);

struct TraceEvent {
  EventKind kind = EventKind::alloc;
  std::string tensor_id;   // alloc/free
  Bytes bytes = 0;         // alloc
  std::string phase_name;  // phase events
  PhaseKind phase_kind = PhaseKind::inference;

  static TraceEvent alloc(std::string id, Bytes bytes);
  static TraceEvent free(std::string id);
  static TraceEvent begin(std::string name, PhaseKind kind);
  static TraceEvent end(std::string name, PhaseKind kind);

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

enum class ZeroStage : std::uint8_t { none = 0, one = 1, two = 2, three = 3 };

std::string_view to_string(ZeroStage stage);
std::optional<ZeroStage> parse_zero_stage(std::string_view text);

struct WorkloadSpec {
  std::uint64_t rounds = 2;
  std::uint64_t actor_params = 16 * 1024 * 1024;
  std::uint64_t critic_params = 8 * 1024 * 1024;
  std::uint64_t hidden_size = 512;
  std::uint64_t layers = 16;
  std::uint64_t batch = 32;
  // Training micro-batch; 0 means the full batch.
  std::uint64_t train_micro_batch = 0;
  std::uint64_t seq_len = 128;
  std::uint64_t gen_tokens = 128;
  std::uint64_t world_size = 4;
  ZeroStage zero_stage = ZeroStage::none;
  bool grad_ckpt = false;
  bool offload = false;
  std::uint64_t bytes_per_element = 2;
  std::uint64_t seed = 42;
  // Gradient-checkpoint interval; 0 means ceil(sqrt(layers)).
  std::uint64_t ckpt_interval = 0;

  // Throws InvalidSpec.
  void validate() const;

  friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

struct Trace {
  std::vector<TraceEvent> events;
  // Set for generated traces; empty for ingested ones.
  std::optional<WorkloadSpec> spec;
};

// Checks free-after-alloc, no double-live ids and depth-1 phase nesting.
// Throws TraceError naming the offending 1-based event position.
void validate_trace(const std::vector<TraceEvent>& events);

// Line-delimited JSON records, one TraceEvent per line.
Trace parse_trace(std::istream& in);
Trace parse_trace_string(std::string_view text);
void write_trace(std::ostream& out, const Trace& trace);
std::string write_trace_string(const Trace& trace);

// Drops inference-phase markers and every tensor whose whole lifetime lies in
// inference phases. Tensors that outlive an inference phase are kept.
// Throws EmptyResult when the trace has no training phase.
Trace slice_training_only(const Trace& trace);

// Synthetic RLHF round trace: generation, four inferences, actor and critic
// training, with ZeRO partitioning, checkpointing and offload applied.
Trace generate(const WorkloadSpec& spec);

// Tensors still live at trace end.
std::vector<std::string> unfreed_tensors(const Trace& trace);

// Peak of unrounded live bytes observed inside phases of the given kind.
Bytes live_peak(const Trace& trace, PhaseKind kind);

// Bytes the generator keeps for the trainable models' weights, gradients and
// optimizer state under the spec's ZeRO stage.
Bytes persistent_training_bytes(const WorkloadSpec& spec);

std::uint64_t checkpoint_interval(const WorkloadSpec& spec);

// Phase names emitted by the generator, in round order.
inline constexpr std::string_view kPhaseGeneration = "generation";
inline constexpr std::string_view kPhaseInferActor = "infer_actor";
inline constexpr std::string_view kPhaseInferRef = "infer_ref";
inline constexpr std::string_view kPhaseInferCritic = "infer_critic";
inline constexpr std::string_view kPhaseInferReward = "infer_reward";
inline constexpr std::string_view kPhaseTrainActor = "train_actor";
inline constexpr std::string_view kPhaseTrainCritic = "train_critic";

}  // namespace fragsim
