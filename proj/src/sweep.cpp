#include "fragsim/sweep.hpp"

#include <exception>

#include <omp.h>

namespace fragsim {

namespace {

// Exceptions must not escape an OpenMP region; keep the first by index.
class FirstError {
 public:
  void capture(std::size_t index) {
#pragma omp critical(fragsim_first_error)
    {
      if (!error_ || index < index_) {
        error_ = std::current_exception();
        index_ = index;
      }
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
  std::size_t index_ = 0;
};

}  // namespace

std::vector<Trace> generate_serial(std::span<const WorkloadSpec> specs) {
  std::vector<Trace> out;
  out.reserve(specs.size());
  for (const WorkloadSpec& s : specs) out.push_back(generate(s));
  return out;
}

std::vector<Trace> generate_parallel(std::span<const WorkloadSpec> specs) {
  std::vector<Trace> out(specs.size());
  FirstError error;
  const auto n = static_cast<std::int64_t>(specs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = generate(specs[i]);
    } catch (...) {
      error.capture(static_cast<std::size_t>(i));
    }
  }
  error.rethrow();
  return out;
}

std::vector<FragReport> replay_serial(std::span<const Trace> traces,
                                      std::span<const CachePolicy> policies,
                                      const AllocatorConfig& config, Bytes capacity) {
  std::vector<FragReport> out;
  out.reserve(traces.size() * policies.size());
  for (const Trace& t : traces) {
    for (CachePolicy p : policies) out.push_back(run(t, p, config, capacity));
  }
  return out;
}

std::vector<FragReport> replay_parallel(std::span<const Trace> traces,
                                        std::span<const CachePolicy> policies,
                                        const AllocatorConfig& config, Bytes capacity) {
  const std::size_t np = policies.size();
  std::vector<FragReport> out(traces.size() * np);
  FirstError error;
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto cell = static_cast<std::size_t>(i);
    try {
      out[cell] = run(traces[cell / np], policies[cell % np], config, capacity);
    } catch (...) {
      error.capture(cell);
    }
  }
  error.rethrow();
  return out;
}

}  // namespace fragsim
