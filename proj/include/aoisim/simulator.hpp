#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoisim/channel_policy.hpp"
#include "aoisim/model.hpp"
#include "aoisim/rng.hpp"
#include "aoisim/source_policy.hpp"

namespace aoisim {

// How the genie benchmark system chooses its sources. The genie always
// transmits on the most reliable channel; in mirrored mode it copies the
// learner's source choice every slot (transmitting a dummy when it has no
// packet for that source), which is the construction that makes the
// per-slot AoI comparison between the two systems meaningful.
enum class RunMode { independent_genie, mirrored_genie };

inline std::string to_string(RunMode m) {
  return m == RunMode::independent_genie ? "independent" : "mirrored";
}

// Columnar per-slot record of one simulated system; slot t lives at index
// t-1. aoi is horizon x num_sources, row-major.
struct SystemTrace {
  std::vector<std::uint8_t> empty_flag;       // E(t)
  std::vector<std::int32_t> source;           // m(t), 0-based
  std::vector<std::int32_t> channel;          // n(t), 0-based
  std::vector<std::uint8_t> dummy;            // no data packet was carried
  std::vector<std::uint8_t> success;          // state of the selected channel
  std::vector<std::int32_t> delivered_source; // -1 when nothing was delivered
  std::vector<std::int64_t> delivered_gen;
  std::vector<std::int64_t> aoi;              // h_m(t), flattened

  void reset(std::int64_t horizon, int num_sources) {
    empty_flag.clear();
    source.clear();
    channel.clear();
    dummy.clear();
    success.clear();
    delivered_source.clear();
    delivered_gen.clear();
    aoi.clear();
    empty_flag.reserve(horizon);
    source.reserve(horizon);
    channel.reserve(horizon);
    dummy.reserve(horizon);
    success.reserve(horizon);
    delivered_source.reserve(horizon);
    delivered_gen.reserve(horizon);
    aoi.reserve(horizon * num_sources);
  }
};

// Full per-replication record. The learner and the genie rows share the
// arrival and channel-uniform columns by construction: the environment is
// drawn once per slot and fed to both systems.
struct ReplicationTrace {
  NetworkConfig config;
  RunMode mode = RunMode::independent_genie;
  std::uint64_t seed = 0;

  std::vector<std::uint8_t> arrivals;  // horizon x num_sources
  std::vector<double> channel_u;       // one coupled uniform per slot
  SystemTrace learner, genie;

  std::int64_t horizon() const { return config.horizon; }
  int num_sources() const { return config.num_sources; }

  bool arrival(std::int64_t t, int m) const {
    return arrivals[(t - 1) * num_sources() + m] != 0;
  }
  std::int64_t learner_aoi(std::int64_t t, int m) const {
    return learner.aoi[(t - 1) * num_sources() + m];
  }
  std::int64_t genie_aoi(std::int64_t t, int m) const {
    return genie.aoi[(t - 1) * num_sources() + m];
  }
};

// Environment randomness for one replication: per slot, the per-source
// arrival indicators followed by the single uniform that drives the
// coupled channels. Exactly num_sources + 1 draws per slot, in that order.
class RngEnvStream {
 public:
  RngEnvStream(int num_sources, double lambda, Rng rng)
      : num_sources_(num_sources), lambda_(lambda), rng_(rng) {}

  void next(std::vector<std::uint8_t>& arrivals, double& u) {
    draw_arrivals(rng_, num_sources_, lambda_, arrivals);
    u = rng_.uniform();
  }

 private:
  int num_sources_;
  double lambda_;
  Rng rng_;
};

// Replays scripted arrivals and channel uniforms; used to drive the
// engine over exhaustively enumerated outcome sequences.
class ScriptedEnvStream {
 public:
  ScriptedEnvStream(std::vector<std::uint8_t> arrivals,
                    std::vector<double> channel_u, int num_sources)
      : arrivals_(std::move(arrivals)),
        channel_u_(std::move(channel_u)),
        num_sources_(num_sources) {}

  void next(std::vector<std::uint8_t>& arrivals, double& u) {
    arrivals.assign(arrivals_.begin() + cursor_ * num_sources_,
                    arrivals_.begin() + (cursor_ + 1) * num_sources_);
    u = channel_u_[cursor_];
    ++cursor_;
  }

 private:
  std::vector<std::uint8_t> arrivals_;
  std::vector<double> channel_u_;
  int num_sources_;
  std::ptrdiff_t cursor_ = 0;
};

namespace detail {

inline void apply_slot_arrivals(SystemState& state,
                                std::span<const std::uint8_t> arrivals) {
  for (int m = 0; m < state.num_sources(); ++m) {
    if (arrivals[m]) state.queue_gen[m] = state.slot;
  }
  state.recompute_empty();
}

// Transmits the already-selected pair and advances the state. Records
// h(t) before advancing, so the trace holds the slot-t snapshot.
inline void finish_slot(SystemState& state, int source, int channel, bool on,
                        bool empty, SystemTrace& out) {
  const bool has_data = state.has_packet(source);
  std::optional<DeliveredPacket> delivered;
  if (on && has_data) {
    delivered = DeliveredPacket{source, state.queue_gen[source]};
  }

  out.empty_flag.push_back(empty ? 1 : 0);
  out.source.push_back(source);
  out.channel.push_back(channel);
  out.dummy.push_back(has_data ? 0 : 1);
  out.success.push_back(on ? 1 : 0);
  out.delivered_source.push_back(delivered ? source : -1);
  out.delivered_gen.push_back(delivered ? delivered->generation : 0);
  out.aoi.insert(out.aoi.end(), state.aoi.begin(), state.aoi.end());

  advance_aoi(state, delivered);
}

}  // namespace detail

// Core slot loop: runs the learner system and the genie benchmark system
// over a shared environment stream. genie_env, when non-null, gives the
// genie its own independent environment draws (kept for estimator
// verification; the default common-randomness form is the variance-reduced
// estimator of the same regret).
template <class Env>
void run_replication_into(const NetworkConfig& cfg,
                          SourcePolicy& learner_source,
                          ChannelPolicy& learner_channel,
                          SourcePolicy* genie_source, RunMode mode, Env& env,
                          Env* genie_env, ReplicationTrace& out) {
  const std::int64_t horizon = cfg.horizon;
  const int num_sources = cfg.num_sources;
  const int n_star = cfg.best_channel();

  if (mode == RunMode::independent_genie && genie_source == nullptr) {
    throw std::invalid_argument(
        "independent-genie mode needs its own source policy instance");
  }
  // mirrored mode never consults the genie's source policy
  SourcePolicy* genie_source_or_unused =
      genie_source ? genie_source : &learner_source;

  out.config = cfg;
  out.mode = mode;
  out.arrivals.clear();
  out.arrivals.reserve(horizon * num_sources);
  out.channel_u.clear();
  out.channel_u.reserve(horizon);
  out.learner.reset(horizon, num_sources);
  out.genie.reset(horizon, num_sources);

  SystemState learner_state = SystemState::initial(num_sources);
  SystemState genie_state = SystemState::initial(num_sources);

  std::vector<std::uint8_t> arrivals;
  std::vector<std::uint8_t> genie_arrivals;
  double u = 0.0;
  double genie_u = 0.0;

  for (std::int64_t t = 1; t <= horizon; ++t) {
    env.next(arrivals, u);
    out.arrivals.insert(out.arrivals.end(), arrivals.begin(), arrivals.end());
    out.channel_u.push_back(u);

    // learner system: slot order is arrivals, E(t), source, channel,
    // channel realization, delivery, AoI advance, then the outcome reveal
    detail::apply_slot_arrivals(learner_state, arrivals);
    const bool learner_empty = learner_state.empty_flag;
    const int m_l =
        learner_source.select(SourceSelectionInput::from(learner_state));
    const int n_l = learner_channel.select(t, learner_empty);
    const bool b_l = channel_on(u, cfg.reliabilities[n_l]);
    detail::finish_slot(learner_state, m_l, n_l, b_l, learner_empty,
                        out.learner);
    learner_channel.observe(n_l, b_l, learner_empty);

    // genie system: same environment draws unless explicitly decoupled
    std::span<const std::uint8_t> genie_view(arrivals.data(), num_sources);
    double gu = u;
    if (genie_env) {
      genie_env->next(genie_arrivals, genie_u);
      genie_view = std::span<const std::uint8_t>(genie_arrivals.data(),
                                                 num_sources);
      gu = genie_u;
    }
    detail::apply_slot_arrivals(genie_state, genie_view);
    const bool genie_empty = genie_state.empty_flag;
    const int m_g = mode == RunMode::mirrored_genie
                        ? m_l
                        : genie_source_or_unused->select(
                              SourceSelectionInput::from(genie_state));
    const bool b_g = channel_on(gu, cfg.reliabilities[n_star]);
    detail::finish_slot(genie_state, m_g, n_star, b_g, genie_empty,
                        out.genie);
  }
}

template <class Env>
void run_replication_into(const NetworkConfig& cfg,
                          SourcePolicy& learner_source,
                          ChannelPolicy& learner_channel,
                          SourcePolicy* genie_source, RunMode mode, Env& env,
                          ReplicationTrace& out) {
  run_replication_into(cfg, learner_source, learner_channel, genie_source,
                       mode, env, static_cast<Env*>(nullptr), out);
}

// Builds policies and streams from specs and runs one replication.
// Replication r of an experiment uses seed = base_seed + r; the
// environment and the learner's policy-internal randomness are derived
// from that seed as independent substreams.
inline ReplicationTrace run_replication(const NetworkConfig& cfg,
                                        const SourcePolicySpec& source_spec,
                                        const ChannelPolicySpec& channel_spec,
                                        RunMode mode, std::uint64_t seed,
                                        bool decouple_genie_randomness = false) {
  require_valid(cfg);
  if (decouple_genie_randomness && mode == RunMode::mirrored_genie) {
    throw std::invalid_argument(
        "mirrored mode requires the shared environment stream");
  }

  auto learner_source = make_source_policy(source_spec);
  auto learner_channel = make_channel_policy(
      channel_spec, cfg, Rng::stream(seed, kLearnerPolicyStream));
  auto genie_source = make_source_policy(source_spec);

  RngEnvStream env(cfg.num_sources, cfg.arrival_rate,
                   Rng::stream(seed, kEnvStream));
  RngEnvStream genie_env(cfg.num_sources, cfg.arrival_rate,
                         Rng::stream(seed, kGenieEnvStream));

  ReplicationTrace trace;
  trace.seed = seed;
  run_replication_into(cfg, *learner_source, *learner_channel,
                       genie_source.get(), mode, env,
                       decouple_genie_randomness ? &genie_env : nullptr,
                       trace);
  return trace;
}

// ---------------------------------------------------------------------------
// Period segmentation
//
// A period starts at a slot where the system becomes empty (E(t)=1 with
// E(t-1)=0, or t=1 when the run begins empty) and ends the slot before the
// next such transition. Slots before the first boundary are preamble; the
// stretch from the last boundary to the horizon is an incomplete tail.
// Both are excluded from period statistics.
// ---------------------------------------------------------------------------

struct Period {
  std::int64_t start = 0;  // s_p, inclusive
  std::int64_t end = 0;    // f_p, inclusive
  int frozen_channel = -1; // channel used through the nonempty phase; -1 if not unique
  bool frozen_unique = false;
  std::vector<std::int64_t> cum_aoi;  // per-source AoI summed over the period
};

struct PeriodSegmentation {
  std::int64_t preamble_end = 0;  // slots [1, preamble_end] precede the first period
  std::int64_t tail_start = 0;    // slots [tail_start, T] form the incomplete tail; T+1 if none
  std::vector<Period> periods;
};

// Splits a trace into periods using the learner system's empty flags.
// require_frozen demands a single channel choice per nonempty phase, the
// defining property of the empty-slot-probing policy; a violation there
// means the policy implementation is broken.
inline PeriodSegmentation segment_periods(const ReplicationTrace& trace,
                                          bool require_frozen = false) {
  const std::int64_t horizon = trace.horizon();
  const int num_sources = trace.num_sources();
  const auto& empty = trace.learner.empty_flag;

  std::vector<std::int64_t> boundaries;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    if (empty[t - 1] && (t == 1 || !empty[t - 2])) boundaries.push_back(t);
  }

  PeriodSegmentation seg;
  if (boundaries.empty()) {
    seg.preamble_end = horizon;
    seg.tail_start = horizon + 1;
    return seg;
  }
  seg.preamble_end = boundaries.front() - 1;
  seg.tail_start = boundaries.back();

  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    Period p;
    p.start = boundaries[i];
    p.end = boundaries[i + 1] - 1;
    p.cum_aoi.assign(num_sources, 0);
    p.frozen_channel = -1;
    p.frozen_unique = true;
    for (std::int64_t t = p.start; t <= p.end; ++t) {
      for (int m = 0; m < num_sources; ++m) {
        p.cum_aoi[m] += trace.learner_aoi(t, m);
      }
      if (!empty[t - 1]) {
        const int n = trace.learner.channel[t - 1];
        if (p.frozen_channel == -1) {
          p.frozen_channel = n;
        } else if (p.frozen_channel != n) {
          p.frozen_unique = false;
        }
      }
    }
    if (!p.frozen_unique) {
      if (require_frozen) {
        throw invariant_violation(
            "nonempty phase of period " + std::to_string(i + 1) +
            " used more than one channel; estimates must freeze between "
            "empty slots");
      }
      p.frozen_channel = -1;
    }
    seg.periods.push_back(std::move(p));
  }
  return seg;
}

// True iff the learner's AoI dominates the genie's for every source and
// slot. Exact in mirrored mode on the shared environment stream: a learner
// delivery implies a genie delivery of an at-least-as-fresh packet.
inline bool aoi_dominates(const ReplicationTrace& trace) {
  const std::int64_t total =
      trace.horizon() * static_cast<std::int64_t>(trace.num_sources());
  for (std::int64_t i = 0; i < total; ++i) {
    if (trace.learner.aoi[i] < trace.genie.aoi[i]) return false;
  }
  return true;
}

// Total learner-minus-genie AoI accumulated inside periods whose frozen
// channel is the best one. Zero, exactly, for the empty-slot-probing
// policy in mirrored mode: such periods replay the genie's decisions.
inline std::int64_t optimal_period_aoi_gap(const ReplicationTrace& trace,
                                           const PeriodSegmentation& seg) {
  const int n_star = trace.config.best_channel();
  const int num_sources = trace.num_sources();
  std::int64_t gap = 0;
  for (const Period& p : seg.periods) {
    if (p.frozen_channel != n_star) continue;
    for (std::int64_t t = p.start; t <= p.end; ++t) {
      for (int m = 0; m < num_sources; ++m) {
        gap += trace.learner_aoi(t, m) - trace.genie_aoi(t, m);
      }
    }
  }
  return gap;
}

}  // namespace aoisim
