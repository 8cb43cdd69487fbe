#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoisim/model.hpp"
#include "aoisim/rng.hpp"

namespace aoisim {

// argmax with deterministic tie-break toward the lowest index
inline int argmax_lowest_index(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// Runtime parameters for a channel policy instance.
struct ChannelPolicySpec {
  std::string name;                      // eps-greedy | ucb | ts | optimal | hybrid | genie
  double epsilon_c = 0.0;                // eps-greedy numerator; 0 means default 10*N
  double ucb_constant = 2.0;             // constant inside the UCB radical
  std::int64_t hybrid_switch_slot = 10000;
  bool observe_dummy_slots = true;       // queue-independent policies learn from empty-slot probes

  double resolved_epsilon_c(int num_channels) const {
    return epsilon_c > 0.0 ? epsilon_c : 10.0 * num_channels;
  }
};

inline bool channel_policy_known(const std::string& name) {
  return name == "eps-greedy" || name == "ucb" || name == "ts" ||
         name == "optimal" || name == "hybrid" || name == "genie";
}

// Common interface: select a channel for slot t, then get the observed
// outcome of that slot. The simulator calls select() and observe() exactly
// once per slot, in that order, with the slot's system-empty flag. Every
// policy keeps exact integer success/observation counters, so the running
// estimate successes/observations is the exact arithmetic mean of the
// outcomes the policy chose to incorporate.
class ChannelPolicy {
 public:
  explicit ChannelPolicy(int num_channels)
      : num_channels_(num_channels),
        succ_(num_channels, 0),
        obs_(num_channels, 0) {}
  virtual ~ChannelPolicy() = default;

  virtual int select(std::int64_t t, bool system_empty) = 0;
  virtual void observe(int channel, bool on, bool system_empty) = 0;

  int num_channels() const { return num_channels_; }
  std::int64_t observations(int n) const { return obs_[n]; }
  std::int64_t successes(int n) const { return succ_[n]; }
  double estimate(int n) const {
    return obs_[n] > 0 ? static_cast<double>(succ_[n]) /
                             static_cast<double>(obs_[n])
                       : 0.0;
  }
  std::vector<double> estimates() const {
    std::vector<double> e(num_channels_);
    for (int n = 0; n < num_channels_; ++n) e[n] = estimate(n);
    return e;
  }

 protected:
  void record(int n, bool on) {
    succ_[n] += on ? 1 : 0;
    obs_[n] += 1;
  }

  // argmax of the estimates, ties toward the lowest index
  int greedy_choice() const {
    int best = 0;
    // compare s_i/o_i > s_b/o_b as cross products to stay exact
    for (int n = 1; n < num_channels_; ++n) {
      const std::int64_t lhs = succ_[n] * std::max<std::int64_t>(obs_[best], 1);
      const std::int64_t rhs = succ_[best] * std::max<std::int64_t>(obs_[n], 1);
      if (lhs > rhs) best = n;
    }
    return best;
  }

  int num_channels_;
  std::vector<std::int64_t> succ_, obs_;
};

// Annealed epsilon-greedy: explore uniformly with probability
// min{1, C/t}, otherwise exploit the empirical best channel.
class EpsilonGreedy final : public ChannelPolicy {
 public:
  EpsilonGreedy(int num_channels, double c, bool observe_dummy, Rng rng)
      : ChannelPolicy(num_channels),
        c_(c),
        observe_dummy_(observe_dummy),
        rng_(rng) {}

  int select(std::int64_t t, bool) override {
    const double eps = std::min(1.0, c_ / static_cast<double>(t));
    if (rng_.uniform() < eps) return rng_.uniform_int(num_channels_);
    return greedy_choice();
  }

  void observe(int channel, bool on, bool system_empty) override {
    if (system_empty && !observe_dummy_) return;
    record(channel, on);
  }

 private:
  double c_;
  bool observe_dummy_;
  Rng rng_;
};

// UCB1-style index policy: pull each channel once, then maximize
// muhat_n + sqrt(c * ln t / T_n).
class Ucb final : public ChannelPolicy {
 public:
  Ucb(int num_channels, double c, bool observe_dummy)
      : ChannelPolicy(num_channels), c_(c), observe_dummy_(observe_dummy) {}

  int select(std::int64_t t, bool) override {
    for (int n = 0; n < num_channels_; ++n) {
      if (obs_[n] == 0) return n;
    }
    int best = 0;
    double best_index = index(0, t);
    for (int n = 1; n < num_channels_; ++n) {
      const double idx = index(n, t);
      if (idx > best_index) {
        best = n;
        best_index = idx;
      }
    }
    return best;
  }

  void observe(int channel, bool on, bool system_empty) override {
    if (system_empty && !observe_dummy_) return;
    record(channel, on);
  }

  double index(int n, std::int64_t t) const {
    return estimate(n) + std::sqrt(c_ * std::log(static_cast<double>(t)) /
                                   static_cast<double>(obs_[n]));
  }

 private:
  double c_;
  bool observe_dummy_;
};

// Thompson Sampling with Beta(1,1) priors: sample one posterior draw per
// channel, play the argmax, and update the posterior with the outcome.
// alpha-1 and beta-1 always equal the incorporated successes and failures.
class ThompsonSampling final : public ChannelPolicy {
 public:
  ThompsonSampling(int num_channels, bool observe_dummy, Rng rng)
      : ChannelPolicy(num_channels),
        alpha_(num_channels, 1),
        beta_(num_channels, 1),
        observe_dummy_(observe_dummy),
        rng_(rng) {}

  int select(std::int64_t, bool) override {
    int best = 0;
    double best_theta = -1.0;
    for (int n = 0; n < num_channels_; ++n) {
      const double theta = rng_.beta(static_cast<double>(alpha_[n]),
                                     static_cast<double>(beta_[n]));
      if (theta > best_theta) {
        best = n;
        best_theta = theta;
      }
    }
    return best;
  }

  void observe(int channel, bool on, bool system_empty) override {
    if (system_empty && !observe_dummy_) return;
    if (on) {
      alpha_[channel] += 1;
    } else {
      beta_[channel] += 1;
    }
    record(channel, on);
  }

  std::int64_t alpha(int n) const { return alpha_[n]; }
  std::int64_t beta_param(int n) const { return beta_[n]; }

 private:
  std::vector<std::int64_t> alpha_, beta_;
  bool observe_dummy_;
  Rng rng_;
};

// Queue-dependent policy with bounded regret: probe a uniformly random
// channel whenever the system is empty and fold that outcome into the
// estimates; when the system holds data, play the empirical best channel
// and discard the outcome. Estimates therefore freeze for the whole
// nonempty phase of a period, which pins the phase's channel choice.
class OptimalPolicy final : public ChannelPolicy {
 public:
  OptimalPolicy(int num_channels, Rng rng)
      : ChannelPolicy(num_channels), rng_(rng) {}

  int select(std::int64_t, bool system_empty) override {
    if (system_empty) return rng_.uniform_int(num_channels_);
    return greedy_choice();
  }

  void observe(int channel, bool on, bool system_empty) override {
    if (!system_empty) return;
    record(channel, on);
  }

 private:
  Rng rng_;
};

// TS for the first switch_slot slots, then the empty-slot-probing policy,
// keeping the success/observation counters accumulated during the TS
// phase as the starting estimates of the second phase.
class HybridPolicy final : public ChannelPolicy {
 public:
  HybridPolicy(int num_channels, std::int64_t switch_slot, bool observe_dummy,
               Rng rng)
      : ChannelPolicy(num_channels),
        alpha_(num_channels, 1),
        beta_(num_channels, 1),
        switch_slot_(switch_slot),
        observe_dummy_(observe_dummy),
        rng_(rng) {}

  int select(std::int64_t t, bool system_empty) override {
    current_slot_ = t;
    if (t <= switch_slot_) {
      int best = 0;
      double best_theta = -1.0;
      for (int n = 0; n < num_channels_; ++n) {
        const double theta = rng_.beta(static_cast<double>(alpha_[n]),
                                       static_cast<double>(beta_[n]));
        if (theta > best_theta) {
          best = n;
          best_theta = theta;
        }
      }
      return best;
    }
    if (system_empty) return rng_.uniform_int(num_channels_);
    return greedy_choice();
  }

  void observe(int channel, bool on, bool system_empty) override {
    if (current_slot_ <= switch_slot_) {
      if (system_empty && !observe_dummy_) return;
      if (on) {
        alpha_[channel] += 1;
      } else {
        beta_[channel] += 1;
      }
      record(channel, on);
      return;
    }
    if (!system_empty) return;
    record(channel, on);
  }

  std::int64_t switch_slot() const { return switch_slot_; }

 private:
  std::vector<std::int64_t> alpha_, beta_;
  std::int64_t switch_slot_;
  bool observe_dummy_;
  Rng rng_;
  std::int64_t current_slot_ = 1;
};

// Benchmark policy: always the most reliable channel, ignores feedback.
class GeniePolicy final : public ChannelPolicy {
 public:
  GeniePolicy(int num_channels, int best_channel)
      : ChannelPolicy(num_channels), best_(best_channel) {}

  int select(std::int64_t, bool) override { return best_; }
  void observe(int, bool, bool) override {}

 private:
  int best_;
};

inline std::unique_ptr<ChannelPolicy> make_channel_policy(
    const ChannelPolicySpec& spec, const NetworkConfig& cfg, Rng rng) {
  const int n = cfg.num_channels;
  if (spec.name == "eps-greedy") {
    return std::make_unique<EpsilonGreedy>(n, spec.resolved_epsilon_c(n),
                                           spec.observe_dummy_slots, rng);
  }
  if (spec.name == "ucb") {
    return std::make_unique<Ucb>(n, spec.ucb_constant,
                                 spec.observe_dummy_slots);
  }
  if (spec.name == "ts") {
    return std::make_unique<ThompsonSampling>(n, spec.observe_dummy_slots,
                                              rng);
  }
  if (spec.name == "optimal") {
    return std::make_unique<OptimalPolicy>(n, rng);
  }
  if (spec.name == "hybrid") {
    return std::make_unique<HybridPolicy>(n, spec.hybrid_switch_slot,
                                          spec.observe_dummy_slots, rng);
  }
  if (spec.name == "genie") {
    return std::make_unique<GeniePolicy>(n, cfg.best_channel());
  }
  throw std::invalid_argument("unknown channel policy: " + spec.name);
}

}  // namespace aoisim
