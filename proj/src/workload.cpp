#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <unordered_map>

#include "fragsim/workload.hpp"

namespace fragsim {

namespace {

Bytes mul(Bytes a, Bytes b) {
  Bytes out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw InvalidSpec("byte arithmetic overflow");
  return out;
}

Bytes add(Bytes a, Bytes b) {
  Bytes out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw InvalidSpec("byte arithmetic overflow");
  return out;
}

Bytes ceil_div(Bytes a, Bytes b) { return a / b + (a % b != 0); }

struct ModelShape {
  std::string name;
  Bytes layer_params = 0;
  std::uint64_t hidden = 0;
  std::uint64_t heads = 0;
  bool trainable = false;
};

// Stage actually in force; partitioning over a single device is the identity.
ZeroStage effective_stage(const WorkloadSpec& spec) {
  return spec.world_size > 1 ? spec.zero_stage : ZeroStage::none;
}

bool at_least(ZeroStage s, ZeroStage min) {
  return static_cast<int>(s) >= static_cast<int>(min);
}

std::uint64_t scaled_hidden(const WorkloadSpec& spec, std::uint64_t params) {
  const double ratio = std::sqrt(static_cast<double>(params) /
                                 static_cast<double>(spec.actor_params));
  const std::uint64_t quantum = std::min<std::uint64_t>(64, spec.hidden_size);
  const auto raw = static_cast<std::uint64_t>(
      std::llround(static_cast<double>(spec.hidden_size) * ratio / static_cast<double>(quantum)));
  return std::max<std::uint64_t>(1, raw) * quantum;
}

std::array<ModelShape, 4> model_shapes(const WorkloadSpec& spec) {
  const Bytes actor_layer = ceil_div(spec.actor_params, spec.layers);
  const Bytes critic_layer = ceil_div(spec.critic_params, spec.layers);
  const std::uint64_t ha = spec.hidden_size;
  const std::uint64_t hc = scaled_hidden(spec, spec.critic_params);
  auto heads = [](std::uint64_t h) { return std::max<std::uint64_t>(1, h / 64); };
  return {{
      {"actor", actor_layer, ha, heads(ha), true},
      {"ref", actor_layer, ha, heads(ha), false},
      {"critic", critic_layer, hc, heads(hc), true},
      {"reward", critic_layer, hc, heads(hc), false},
  }};
}

struct StateSizes {
  Bytes weight = 0;
  Bytes grad = 0;
  Bytes optim = 0;
};

StateSizes state_sizes(const WorkloadSpec& spec, const ModelShape& m) {
  const ZeroStage stage = m.trainable ? effective_stage(spec) : ZeroStage::none;
  const Bytes bpe = spec.bytes_per_element;
  const Bytes shard = ceil_div(m.layer_params, spec.world_size);
  StateSizes s;
  s.weight = mul(at_least(stage, ZeroStage::three) ? shard : m.layer_params, bpe);
  if (m.trainable) {
    s.grad = mul(at_least(stage, ZeroStage::two) ? shard : m.layer_params, bpe);
    // Adam moment + variance in fp32.
    s.optim = mul(mul(at_least(stage, ZeroStage::one) ? shard : m.layer_params, 4), 2);
  }
  return s;
}

class Emitter {
 public:
  explicit Emitter(std::vector<TraceEvent>& out) : out_(out) {}

  void alloc(const std::string& id, Bytes bytes) {
    out_.push_back(TraceEvent::alloc(id, bytes));
  }
  void free(const std::string& id) { out_.push_back(TraceEvent::free(id)); }
  void begin(std::string_view name, PhaseKind kind) {
    out_.push_back(TraceEvent::begin(std::string(name), kind));
  }
  void end(std::string_view name, PhaseKind kind) {
    out_.push_back(TraceEvent::end(std::string(name), kind));
  }

  // Fresh id for a short-lived tensor.
  std::string temp(std::string_view tag) {
    std::string id(tag);
    id += '#';
    id += std::to_string(next_++);
    return id;
  }

 private:
  std::vector<TraceEvent>& out_;
  std::uint64_t next_ = 0;
};

// Activations for one transformer layer over `tokens` positions.
struct LayerGeometry {
  Bytes act = 0;     // batch x tokens x hidden
  Bytes probs = 0;   // batch x heads x tokens x context
};

LayerGeometry geometry(const WorkloadSpec& spec, const ModelShape& m, std::uint64_t batch,
                       std::uint64_t tokens, std::uint64_t context) {
  const Bytes bpe = spec.bytes_per_element;
  LayerGeometry g;
  g.act = mul(mul(mul(batch, tokens), m.hidden), bpe);
  g.probs = mul(mul(mul(mul(batch, m.heads), tokens), context), bpe);
  return g;
}

// Tensors one layer keeps for its backward pass.
struct Stash {
  std::vector<std::string> ids;
};

class Generator {
 public:
  explicit Generator(const WorkloadSpec& spec)
      : spec_(spec), stage_(effective_stage(spec)), models_(model_shapes(spec)), rng_(spec.seed),
        emit_(trace_.events) {
    trace_.spec = spec;
  }

  Trace run() {
    setup();
    for (std::uint64_t r = 0; r < spec_.rounds; ++r) round(r);
    return std::move(trace_);
  }

 private:
  const ModelShape& model(std::size_t i) const { return models_[i]; }

  std::string state_id(const ModelShape& m, std::uint64_t layer, std::string_view what) const {
    return m.name + ".L" + std::to_string(layer) + "." + std::string(what);
  }

  std::string weight_id(const ModelShape& m, std::uint64_t layer) const {
    auto it = weight_generation_.find(m.name);
    std::string id = state_id(m, layer, "weight");
    if (it != weight_generation_.end() && it->second > 0) id += "@" + std::to_string(it->second);
    return id;
  }

  std::string grad_id(const ModelShape& m) const { return m.name + ".grad"; }

  bool gathers(const ModelShape& m) const {
    return m.trainable && stage_ == ZeroStage::three;
  }

  void setup() {
    for (const ModelShape& m : models_) {
      const StateSizes s = state_sizes(spec_, m);
      for (std::uint64_t l = 0; l < spec_.layers; ++l) emit_.alloc(weight_id(m, l), s.weight);
      if (m.trainable) {
        for (std::uint64_t l = 0; l < spec_.layers; ++l) emit_.alloc(state_id(m, l, "optim"), s.optim);
        // Gradients live in one contiguous buffer per model.
        emit_.alloc(grad_id(m), mul(s.grad, spec_.layers));
      }
    }
  }

  void round(std::uint64_t r) {
    const std::uint64_t jitter = rng_() % (spec_.seq_len / 4 + 1);
    const std::uint64_t prompt = std::max<std::uint64_t>(1, spec_.seq_len - jitter);
    const std::string tag = "r" + std::to_string(r);

    std::vector<std::string> experience;
    experience.push_back(generation(tag, prompt));
    // Experience is padded to the full length before scoring and training.
    const std::uint64_t total = spec_.seq_len + spec_.gen_tokens;

    const std::array<std::pair<std::string_view, std::size_t>, 4> inferences{{
        {kPhaseInferActor, 0}, {kPhaseInferRef, 1}, {kPhaseInferCritic, 2}, {kPhaseInferReward, 3}}};
    for (const auto& [phase, idx] : inferences) {
      emit_.begin(phase, PhaseKind::inference);
      experience.push_back(inference(tag, model(idx), total));
      emit_.end(phase, PhaseKind::inference);
    }

    emit_.begin(kPhaseTrainActor, PhaseKind::training);
    if (spec_.offload) offload(true);
    train(tag, model(0), total);
    emit_.end(kPhaseTrainActor, PhaseKind::training);

    emit_.begin(kPhaseTrainCritic, PhaseKind::training);
    train(tag, model(2), total);
    for (const std::string& id : experience) emit_.free(id);
    if (spec_.offload) offload(false);
    emit_.end(kPhaseTrainCritic, PhaseKind::training);
  }

  // Frozen models leave the device for the training phases.
  void offload(bool leave) {
    for (std::size_t idx : {std::size_t{1}, std::size_t{3}}) {
      const ModelShape& m = model(idx);
      const StateSizes s = state_sizes(spec_, m);
      if (!leave) ++weight_generation_[m.name];
      for (std::uint64_t l = 0; l < spec_.layers; ++l) {
        if (leave) {
          emit_.free(weight_id(m, l));
        } else {
          emit_.alloc(weight_id(m, l), s.weight);
        }
      }
    }
  }

  void gather(const ModelShape& m, std::uint64_t layer, std::string& id) {
    if (!gathers(m)) return;
    id = emit_.temp(m.name + ".L" + std::to_string(layer) + ".gather");
    emit_.alloc(id, mul(m.layer_params, spec_.bytes_per_element));
  }

  void release_gather(std::string& id) {
    if (id.empty()) return;
    emit_.free(id);
    id.clear();
  }

  // One layer forward. The layer input `x` is replaced by the output. When
  // `stash` is given, tensors needed by backward are kept there instead of
  // being freed.
  void layer_forward(const ModelShape& m, std::uint64_t layer, const LayerGeometry& g,
                     std::string& x, Stash* stash, bool keep_input = false) {
    std::string gathered;
    gather(m, layer, gathered);
    const std::string base = m.name + ".L" + std::to_string(layer);
    auto keep_or_free = [&](const std::string& id) {
      if (stash) {
        stash->ids.push_back(id);
      } else {
        emit_.free(id);
      }
    };

    const std::string qkv = emit_.temp(base + ".qkv");
    emit_.alloc(qkv, mul(g.act, 3));
    const std::string probs = emit_.temp(base + ".probs");
    emit_.alloc(probs, g.probs);
    const std::string ctx = emit_.temp(base + ".ctx");
    emit_.alloc(ctx, g.act);
    keep_or_free(probs);
    keep_or_free(qkv);
    const std::string proj = emit_.temp(base + ".proj");
    emit_.alloc(proj, g.act);
    keep_or_free(ctx);
    const std::string mlp_in = emit_.temp(base + ".mlp_in");
    emit_.alloc(mlp_in, mul(g.act, 4));
    const std::string mlp_act = emit_.temp(base + ".mlp_act");
    emit_.alloc(mlp_act, mul(g.act, 4));
    keep_or_free(mlp_in);
    const std::string out = emit_.temp(base + ".out");
    emit_.alloc(out, g.act);
    keep_or_free(mlp_act);
    keep_or_free(proj);
    if (!keep_input || stash) keep_or_free(x);
    x = out;
    release_gather(gathered);
  }

  // Returns the id of the generated sequence, which outlives the phase.
  std::string generation(const std::string& tag, std::uint64_t prompt) {
    const ModelShape& actor = model(0);
    const Bytes bpe = spec_.bytes_per_element;
    emit_.begin(kPhaseGeneration, PhaseKind::inference);

    std::vector<std::string> kv(spec_.layers);
    std::string seq;
    for (std::uint64_t step = 0; step < spec_.gen_tokens; ++step) {
      // Step 0 is the prefill over the whole prompt; later steps decode one token.
      const std::uint64_t tokens = step == 0 ? prompt : 1;
      const std::uint64_t context = prompt + step;
      const LayerGeometry g = geometry(spec_, actor, spec_.batch, tokens, context);

      std::string x = emit_.temp(tag + ".gen.embed");
      emit_.alloc(x, g.act);
      for (std::uint64_t l = 0; l < spec_.layers; ++l) {
        std::string gathered;
        gather(actor, l, gathered);
        const std::string base = tag + ".gen.L" + std::to_string(l);
        const std::string qkv = emit_.temp(base + ".qkv");
        emit_.alloc(qkv, mul(g.act, 3));
        // The cache is re-materialised one position longer every step.
        const std::string next_kv = emit_.temp(base + ".kv");
        emit_.alloc(next_kv, mul(mul(mul(mul(2, actor.hidden), bpe), spec_.batch), context));
        if (!kv[l].empty()) emit_.free(kv[l]);
        kv[l] = next_kv;
        const std::string probs = emit_.temp(base + ".probs");
        emit_.alloc(probs, g.probs);
        const std::string ctx = emit_.temp(base + ".ctx");
        emit_.alloc(ctx, g.act);
        emit_.free(probs);
        emit_.free(qkv);
        const std::string mlp = emit_.temp(base + ".mlp");
        emit_.alloc(mlp, mul(g.act, 4));
        const std::string out = emit_.temp(base + ".out");
        emit_.alloc(out, g.act);
        emit_.free(mlp);
        emit_.free(ctx);
        emit_.free(x);
        x = out;
        release_gather(gathered);
      }
      emit_.free(x);

      const std::string next_seq = emit_.temp(tag + ".seq");
      emit_.alloc(next_seq, mul(mul(spec_.batch, context + 1), 8));
      if (!seq.empty()) emit_.free(seq);
      seq = next_seq;
    }
    for (const std::string& id : kv) {
      if (!id.empty()) emit_.free(id);
    }
    emit_.end(kPhaseGeneration, PhaseKind::inference);
    return seq;
  }

  // Full-sequence forward without grad; returns the experience tensor id.
  std::string inference(const std::string& tag, const ModelShape& m, std::uint64_t total) {
    const LayerGeometry g = geometry(spec_, m, spec_.batch, total, total);
    std::string x = emit_.temp(tag + "." + m.name + ".embed");
    emit_.alloc(x, g.act);
    for (std::uint64_t l = 0; l < spec_.layers; ++l) layer_forward(m, l, g, x, nullptr);
    const std::string result = tag + ".exp." + m.name;
    emit_.alloc(result, mul(mul(spec_.batch, total), 4));
    emit_.free(x);
    return result;
  }

  void layer_backward(const ModelShape& m, std::uint64_t layer, const LayerGeometry& g,
                      Stash& stash, std::string& dy) {
    std::string gathered;
    gather(m, layer, gathered);
    const std::string base = m.name + ".L" + std::to_string(layer);

    const std::string dmlp = emit_.temp(base + ".dmlp");
    emit_.alloc(dmlp, mul(g.act, 4));
    const std::string dqkv = emit_.temp(base + ".dqkv");
    emit_.alloc(dqkv, mul(g.act, 3));
    emit_.free(dmlp);

    if (at_least(stage_, ZeroStage::two)) {
      // The full layer gradient is reduce-scattered into the owned shard.
      const std::string full = emit_.temp(base + ".grad_full");
      emit_.alloc(full, mul(m.layer_params, spec_.bytes_per_element));
      emit_.free(full);
    }

    const std::string dx = emit_.temp(base + ".dx");
    emit_.alloc(dx, g.act);
    emit_.free(dqkv);
    for (auto it = stash.ids.rbegin(); it != stash.ids.rend(); ++it) emit_.free(*it);
    stash.ids.clear();
    emit_.free(dy);
    dy = dx;
    release_gather(gathered);
  }

  void train(const std::string& tag, const ModelShape& m, std::uint64_t total) {
    const std::uint64_t micro = spec_.train_micro_batch == 0
                                    ? spec_.batch
                                    : std::min(spec_.train_micro_batch, spec_.batch);
    const std::uint64_t steps = ceil_div(spec_.batch, micro);
    const std::uint64_t k = spec_.grad_ckpt ? checkpoint_interval(spec_) : 1;
    const std::uint64_t layers = spec_.layers;

    for (std::uint64_t mb = 0; mb < steps; ++mb) {
      const std::uint64_t rows = std::min(micro, spec_.batch - mb * micro);
      const LayerGeometry g = geometry(spec_, m, rows, total, total);
      const std::string prefix = tag + "." + m.name + ".train";

      // Forward. Without checkpointing every layer keeps its stash; with it
      // only each segment's input survives.
      std::vector<Stash> stash(layers);
      std::vector<std::string> checkpoint(layers);
      std::string x = emit_.temp(prefix + ".embed");
      emit_.alloc(x, g.act);
      for (std::uint64_t l = 0; l < layers; ++l) {
        if (spec_.grad_ckpt) {
          const bool boundary = l % k == 0;
          if (boundary) checkpoint[l] = x;
          layer_forward(m, l, g, x, nullptr, boundary);
        } else {
          layer_forward(m, l, g, x, &stash[l]);
        }
      }

      const std::string loss = emit_.temp(prefix + ".loss");
      emit_.alloc(loss, mul(rows, 4));
      std::string dy = emit_.temp(prefix + ".dlogits");
      emit_.alloc(dy, g.act);
      emit_.free(x);
      emit_.free(loss);

      if (!spec_.grad_ckpt) {
        for (std::uint64_t l = layers; l-- > 0;) layer_backward(m, l, g, stash[l], dy);
      } else {
        for (std::uint64_t seg_begin = (layers - 1) / k * k;; seg_begin -= k) {
          const std::uint64_t seg_end = std::min(layers, seg_begin + k);
          // Recompute the segment from its checkpoint, keeping stashes. The
          // checkpoint joins the first layer's stash and dies in its backward.
          std::string rx = checkpoint[seg_begin];
          for (std::uint64_t l = seg_begin; l < seg_end; ++l) layer_forward(m, l, g, rx, &stash[l]);
          emit_.free(rx);
          for (std::uint64_t l = seg_end; l-- > seg_begin;) {
            layer_backward(m, l, g, stash[l], dy);
          }
          if (seg_begin == 0) break;
        }
      }
      emit_.free(dy);
    }

  }

  WorkloadSpec spec_;
  ZeroStage stage_;
  std::array<ModelShape, 4> models_;
  std::mt19937_64 rng_;
  Trace trace_;
  Emitter emit_;
  std::unordered_map<std::string, std::uint64_t> weight_generation_;
};

}  // namespace

std::string_view to_string(ZeroStage stage) {
  switch (stage) {
    case ZeroStage::none: return "none";
    case ZeroStage::one: return "1";
    case ZeroStage::two: return "2";
    case ZeroStage::three: return "3";
  }
  return "?";
}

std::optional<ZeroStage> parse_zero_stage(std::string_view text) {
  if (text == "none" || text == "0") return ZeroStage::none;
  if (text == "1") return ZeroStage::one;
  if (text == "2") return ZeroStage::two;
  if (text == "3") return ZeroStage::three;
  return std::nullopt;
}

void WorkloadSpec::validate() const {
  if (rounds == 0 || actor_params == 0 || critic_params == 0 || hidden_size == 0 || layers == 0 ||
      batch == 0 || seq_len == 0 || gen_tokens == 0 || world_size == 0) {
    throw InvalidSpec("workload counts must be positive");
  }
  if (bytes_per_element != 2 && bytes_per_element != 4) {
    throw InvalidSpec("bytes_per_element must be 2 or 4");
  }
  // Largest single tensors must be representable.
  const std::uint64_t total = add(seq_len, gen_tokens);
  const Bytes hidden_bytes = mul(mul(mul(batch, total), hidden_size), bytes_per_element);
  mul(hidden_bytes, 4);
  mul(mul(mul(mul(batch, std::max<std::uint64_t>(1, hidden_size / 64)), total), total),
      bytes_per_element);
  mul(mul(actor_params, 4), 2);
  mul(mul(critic_params, 4), 2);
}

std::uint64_t checkpoint_interval(const WorkloadSpec& spec) {
  if (spec.ckpt_interval != 0) return spec.ckpt_interval;
  auto k = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(spec.layers)));
  while (k * k < spec.layers) ++k;
  while (k > 1 && (k - 1) * (k - 1) >= spec.layers) --k;
  return std::max<std::uint64_t>(1, k);
}

Bytes persistent_training_bytes(const WorkloadSpec& spec) {
  spec.validate();
  Bytes total = 0;
  for (const ModelShape& m : model_shapes(spec)) {
    if (!m.trainable) continue;
    const StateSizes s = state_sizes(spec, m);
    total = add(total, mul(add(add(s.weight, s.grad), s.optim), spec.layers));
  }
  return total;
}

Trace generate(const WorkloadSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

}  // namespace fragsim
