#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoisim/rng.hpp"

namespace aoisim {

// Thrown when a step would break a model invariant (e.g. delivering a
// packet that is staler than the last delivery). Always a scheduler or
// trace bug, never a recoverable runtime condition.
struct invariant_violation : std::logic_error {
  using std::logic_error::logic_error;
};

// Immutable experiment parameters for one network.
struct NetworkConfig {
  int num_sources = 1;                 // M
  int num_channels = 1;                // N
  double arrival_rate = 0.5;           // per-source Bernoulli rate, must be in (0,1)
  std::vector<double> reliabilities;   // mu_n in (0,1], unique maximum
  std::int64_t horizon = 1;            // T slots
  std::uint64_t base_seed = 1;
  int replications = 1;

  // index of the most reliable channel (0-based); assumes validated config
  int best_channel() const {
    int best = 0;
    for (int n = 1; n < static_cast<int>(reliabilities.size()); ++n) {
      if (reliabilities[n] > reliabilities[best]) best = n;
    }
    return best;
  }

  double best_reliability() const { return reliabilities[best_channel()]; }

  // suboptimality gap of channel n
  double gap(int n) const { return best_reliability() - reliabilities[n]; }

  // smallest gap among suboptimal channels; +inf when N == 1
  double min_gap() const {
    const int star = best_channel();
    double g = std::numeric_limits<double>::infinity();
    for (int n = 0; n < static_cast<int>(reliabilities.size()); ++n) {
      if (n != star) g = std::min(g, gap(n));
    }
    return g;
  }

  bool operator==(const NetworkConfig&) const = default;
};

// Returns human-readable problems; empty when the config is usable.
inline std::vector<std::string> validate(const NetworkConfig& c) {
  std::vector<std::string> errors;
  if (c.num_sources < 1) errors.push_back("num_sources must be >= 1");
  if (c.num_channels < 1) errors.push_back("num_channels must be >= 1");
  if (c.horizon < 1) errors.push_back("horizon must be >= 1");
  if (c.replications < 1) errors.push_back("replications must be >= 1");
  if (!(c.arrival_rate > 0.0 && c.arrival_rate < 1.0)) {
    errors.push_back(
        "arrival_rate must lie strictly inside (0,1); the model requires "
        "slots in which the system can be empty");
  }
  if (static_cast<int>(c.reliabilities.size()) != c.num_channels) {
    errors.push_back("reliabilities must list exactly num_channels values");
    return errors;  // remaining checks index into the vector
  }
  for (int n = 0; n < c.num_channels; ++n) {
    const double mu = c.reliabilities[n];
    if (!(mu > 0.0 && mu <= 1.0)) {
      errors.push_back("reliability of channel " + std::to_string(n + 1) +
                       " must be in (0,1]");
    }
  }
  if (errors.empty()) {
    const double best = *std::max_element(c.reliabilities.begin(),
                                          c.reliabilities.end());
    const auto ties = std::count(c.reliabilities.begin(),
                                 c.reliabilities.end(), best);
    if (ties != 1) {
      errors.push_back(
          "the most reliable channel must be unique; found a tied maximum");
    }
  }
  return errors;
}

inline void require_valid(const NetworkConfig& c) {
  const auto errors = validate(c);
  if (errors.empty()) return;
  std::ostringstream msg;
  msg << "invalid network config:";
  for (const auto& e : errors) msg << "\n  - " << e;
  throw std::invalid_argument(msg.str());
}

// Per-slot mutable state of one simulated system. All vectors are indexed
// by source. Invariant: aoi[m] == slot - last_delivery_gen[m].
struct SystemState {
  std::int64_t slot = 1;                        // t
  std::vector<std::int64_t> aoi;                // h_m(t)
  std::vector<std::int64_t> last_delivery_gen;  // tau_m(t); 0 before first delivery
  std::vector<std::int64_t> queue_gen;          // freshest waiting packet's generation time, -1 if none
  bool empty_flag = true;                       // E(t): no data packet in any queue

  // slot 1 with no deliveries yet: tau = 0 forces h = 1
  static SystemState initial(int num_sources) {
    SystemState s;
    s.slot = 1;
    s.aoi.assign(num_sources, 1);
    s.last_delivery_gen.assign(num_sources, 0);
    s.queue_gen.assign(num_sources, -1);
    s.empty_flag = true;
    return s;
  }

  int num_sources() const { return static_cast<int>(aoi.size()); }
  bool has_packet(int m) const { return queue_gen[m] >= 0; }

  void recompute_empty() {
    for (std::int64_t g : queue_gen) {
      if (g >= 0) {
        empty_flag = false;
        return;
      }
    }
    empty_flag = true;
  }
};

// One slot's coupled channel realization: a single uniform u drives all N
// channels, so a less reliable channel is never ON when a more reliable
// one is OFF.
struct ChannelDraw {
  double u = 0.0;
  std::vector<std::uint8_t> states;  // states[n] = (u <= mu_n)
};

inline bool channel_on(double u, double mu) { return u <= mu; }

// The (source, channel) pair picked for one slot. is_dummy mirrors the
// system-empty flag at selection time: an empty system can only probe.
struct Decision {
  int source = 0;
  int channel = 0;
  bool is_dummy = false;
};

// Draws one Bernoulli(lambda) arrival per source. Consumes exactly
// num_sources uniforms in source-index order regardless of outcomes.
inline void draw_arrivals(Rng& rng, int num_sources, double lambda,
                          std::vector<std::uint8_t>& out) {
  out.resize(num_sources);
  for (int m = 0; m < num_sources; ++m) {
    out[m] = rng.bernoulli(lambda) ? 1 : 0;
  }
}

inline std::vector<std::uint8_t> draw_arrivals(Rng& rng,
                                               const NetworkConfig& cfg) {
  std::vector<std::uint8_t> out;
  draw_arrivals(rng, cfg.num_sources, cfg.arrival_rate, out);
  return out;
}

// Applies slot-t arrivals: an arriving packet replaces whatever the
// source had queued (only the freshest packet is kept) and can be
// transmitted in the same slot.
inline void apply_arrivals(SystemState& s,
                           const std::vector<std::uint8_t>& arrivals) {
  for (int m = 0; m < s.num_sources(); ++m) {
    if (arrivals[m]) s.queue_gen[m] = s.slot;
  }
  s.recompute_empty();
}

// One shared uniform per slot, thresholded against every reliability.
inline ChannelDraw realize_channels(Rng& rng, const std::vector<double>& mu) {
  ChannelDraw d;
  d.u = rng.uniform();
  d.states.resize(mu.size());
  for (std::size_t n = 0; n < mu.size(); ++n) {
    d.states[n] = channel_on(d.u, mu[n]) ? 1 : 0;
  }
  return d;
}

struct DeliveredPacket {
  int source = -1;
  std::int64_t generation = 0;
};

// Advances the state from slot t to t+1. On delivery the source's AoI
// resets to (t+1) - generation and its queue empties; everyone else ages
// by one slot. Rejects deliveries that are stale (generation <= tau) or
// from the future: those signal a scheduler bug upstream.
inline void advance_aoi(SystemState& s,
                        const std::optional<DeliveredPacket>& delivered) {
  if (delivered) {
    const int m = delivered->source;
    const std::int64_t g = delivered->generation;
    if (m < 0 || m >= s.num_sources()) {
      throw invariant_violation("advance_aoi: delivered source out of range");
    }
    if (g <= s.last_delivery_gen[m]) {
      throw invariant_violation(
          "advance_aoi: delivered packet is not fresher than the last "
          "delivery (stale generation " + std::to_string(g) + ")");
    }
    if (g > s.slot) {
      throw invariant_violation(
          "advance_aoi: delivered packet generated in the future");
    }
    s.last_delivery_gen[m] = g;
    s.queue_gen[m] = -1;
  }
  s.slot += 1;
  for (int m = 0; m < s.num_sources(); ++m) {
    s.aoi[m] = s.slot - s.last_delivery_gen[m];
  }
  s.recompute_empty();
}

}  // namespace aoisim
