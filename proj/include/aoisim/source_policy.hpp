#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include "aoisim/model.hpp"

namespace aoisim {

// Same-slot snapshot of everything a source policy may look at.
struct SourceSelectionInput {
  std::int64_t slot = 1;
  std::span<const std::int64_t> aoi;
  std::span<const std::int64_t> queue_gen;           // -1 marks an empty queue
  std::span<const std::int64_t> last_delivery_gen;

  static SourceSelectionInput from(const SystemState& s) {
    return {s.slot, s.aoi, s.queue_gen, s.last_delivery_gen};
  }
};

// Age-Based Max-Weight: pick the source whose queued packet would cut its
// AoI the most on success, i.e. argmax of (generation - last delivery
// generation) over sources holding a packet. When every queue is empty the
// slot carries a dummy probe; the source with the largest AoI is reported.
// All ties break toward the lowest index so replications are reproducible.
inline int abmw_select(const SourceSelectionInput& in) {
  const int num_sources = static_cast<int>(in.aoi.size());
  int best = -1;
  std::int64_t best_weight = -1;
  for (int m = 0; m < num_sources; ++m) {
    if (in.queue_gen[m] < 0) continue;
    const std::int64_t w = in.queue_gen[m] - in.last_delivery_gen[m];
    if (w > best_weight) {
      best = m;
      best_weight = w;
    }
  }
  if (best >= 0) return best;
  int oldest = 0;
  for (int m = 1; m < num_sources; ++m) {
    if (in.aoi[m] > in.aoi[oldest]) oldest = m;
  }
  return oldest;
}

// Cycles through sources regardless of queue contents. cursor holds the
// last selected source (-1 before the first call).
inline int roundrobin_select(const SourceSelectionInput& in, int& cursor) {
  const int num_sources = static_cast<int>(in.aoi.size());
  cursor = (cursor + 1) % num_sources;
  return cursor;
}

class SourcePolicy {
 public:
  virtual ~SourcePolicy() = default;
  virtual int select(const SourceSelectionInput& in) = 0;
};

class AgeBasedMaxWeight final : public SourcePolicy {
 public:
  int select(const SourceSelectionInput& in) override {
    return abmw_select(in);
  }
};

class RoundRobin final : public SourcePolicy {
 public:
  int select(const SourceSelectionInput& in) override {
    return roundrobin_select(in, cursor_);
  }

 private:
  int cursor_ = -1;
};

struct SourcePolicySpec {
  std::string name = "abmw";  // "abmw" | "roundrobin"
};

inline bool source_policy_known(const std::string& name) {
  return name == "abmw" || name == "roundrobin";
}

inline std::unique_ptr<SourcePolicy> make_source_policy(
    const SourcePolicySpec& spec) {
  if (spec.name == "abmw") return std::make_unique<AgeBasedMaxWeight>();
  if (spec.name == "roundrobin") return std::make_unique<RoundRobin>();
  throw std::invalid_argument("unknown source policy: " + spec.name);
}

}  // namespace aoisim
