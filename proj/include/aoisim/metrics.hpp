#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoisim/channel_policy.hpp"
#include "aoisim/simulator.hpp"

namespace aoisim {

// ---------------------------------------------------------------------------
// Closed-form bound expressions
// ---------------------------------------------------------------------------

struct BoundInputs {
  int num_channels = 1;
  std::vector<double> gaps;  // mu* - mu_n for each suboptimal channel
  double min_gap = 0.0;
};

inline BoundInputs bound_inputs(const NetworkConfig& cfg) {
  BoundInputs b;
  b.num_channels = cfg.num_channels;
  const int star = cfg.best_channel();
  for (int n = 0; n < cfg.num_channels; ++n) {
    if (n != star) b.gaps.push_back(cfg.gap(n));
  }
  b.min_gap = cfg.min_gap();
  return b;
}

// Hoeffding tail bound on the probability that the empty-slot-probing
// policy still prefers a channel with gap delta in period p:
// 2 exp(-p / (2N^2)) + 2 exp(-delta^2 p / (4N)). Exceeds one for small p.
inline double hoeffding_bound_raw(std::int64_t p, int num_channels,
                                  double delta) {
  if (p < 1) throw std::invalid_argument("period index must be >= 1");
  if (!(delta > 0.0)) {
    throw std::invalid_argument("suboptimality gap must be positive");
  }
  const double n = static_cast<double>(num_channels);
  const double pd = static_cast<double>(p);
  return 2.0 * std::exp(-pd / (2.0 * n * n)) +
         2.0 * std::exp(-delta * delta * pd / (4.0 * n));
}

// Clamped to [0,1]; the raw expression carries no information above one.
inline double hoeffding_bound(std::int64_t p, int num_channels, double delta) {
  return std::min(1.0, hoeffding_bound_raw(p, num_channels, delta));
}

// Constant upper bound on the expected number of suboptimal periods,
// obtained by summing the per-period tail bound over all p:
// 2(N-1)/(exp(1/(2N^2))-1) + 2(N-1)/(exp(Dmin^2/(4N))-1).
inline double cp_constant(const BoundInputs& in) {
  if (in.gaps.empty()) return 0.0;  // no suboptimal channel exists
  if (!(in.min_gap > 0.0)) {
    throw std::invalid_argument("min gap must be positive");
  }
  const double n = static_cast<double>(in.num_channels);
  const double lead = 2.0 * (n - 1.0);
  return lead / std::expm1(1.0 / (2.0 * n * n)) +
         lead / std::expm1(in.min_gap * in.min_gap / (4.0 * n));
}

// ---------------------------------------------------------------------------
// Slot grids
// ---------------------------------------------------------------------------

// Logarithmically spaced slots in [1, horizon], deduplicated, always
// containing the horizon itself.
inline std::vector<std::int64_t> log_slot_grid(std::int64_t horizon,
                                               int points) {
  std::vector<std::int64_t> grid;
  if (points < 1 || horizon < 1) return grid;
  if (points == 1 || horizon == 1) return {horizon};
  const double log_max = std::log(static_cast<double>(horizon));
  for (int i = 0; i < points; ++i) {
    const double f = static_cast<double>(i) / (points - 1);
    auto t = static_cast<std::int64_t>(std::llround(std::exp(f * log_max)));
    grid.push_back(std::clamp<std::int64_t>(t, 1, horizon));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline std::vector<std::int64_t> merge_grid(std::vector<std::int64_t> grid,
                                            std::vector<std::int64_t> extra) {
  grid.insert(grid.end(), extra.begin(), extra.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

// ---------------------------------------------------------------------------
// Which slot outcomes a policy folds into its reliability estimates. Used
// to reconstruct estimate trajectories from a trace without entangling the
// metrics with live policy state.
// ---------------------------------------------------------------------------

struct ObservationRule {
  enum class Kind { every_slot, empty_only, switch_then_empty_only, never };
  Kind kind = Kind::every_slot;
  std::int64_t switch_slot = 0;
  bool observe_dummy = true;

  static ObservationRule for_policy(const ChannelPolicySpec& spec) {
    ObservationRule r;
    r.observe_dummy = spec.observe_dummy_slots;
    if (spec.name == "optimal") {
      r.kind = Kind::empty_only;
    } else if (spec.name == "hybrid") {
      r.kind = Kind::switch_then_empty_only;
      r.switch_slot = spec.hybrid_switch_slot;
    } else if (spec.name == "genie") {
      r.kind = Kind::never;
    } else {
      r.kind = Kind::every_slot;
    }
    return r;
  }

  bool counts(std::int64_t t, bool system_empty) const {
    switch (kind) {
      case Kind::every_slot:
        return observe_dummy || !system_empty;
      case Kind::empty_only:
        return system_empty;
      case Kind::switch_then_empty_only:
        return t <= switch_slot ? (observe_dummy || !system_empty)
                                : system_empty;
      case Kind::never:
        return false;
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Per-replication reduction and cross-replication aggregation
// ---------------------------------------------------------------------------

// Everything the aggregator needs from one replication, extracted so the
// full trace can be dropped immediately.
struct PerRepSummary {
  std::vector<double> regret_at_grid;    // cumulative total-AoI gap
  std::vector<std::int64_t> k_at_grid;   // cumulative suboptimal selections
  std::vector<std::int64_t> pulls_at_grid;      // grid x N, cumulative selections
  std::vector<double> estimates_at_grid;        // grid x N
  std::vector<std::uint8_t> suboptimal_by_index;  // one flag per complete period
  std::vector<std::int64_t> y_suboptimal_per_source;  // AoI mass in suboptimal periods
  std::int64_t period_count = 0;
  std::int64_t suboptimal_period_count = 0;
  bool dominance_ok = true;              // mirrored-mode per-slot dominance
  std::int64_t optimal_period_gap = 0;   // mirrored-mode zero-contribution check
  std::vector<double> final_estimates;   // policy estimates at the horizon
  std::vector<std::int64_t> final_observations;
};

inline PerRepSummary summarize_replication(const ReplicationTrace& trace,
                                           const ChannelPolicySpec& policy,
                                           const std::vector<std::int64_t>& grid) {
  const std::int64_t horizon = trace.horizon();
  const int num_sources = trace.num_sources();
  const int num_channels = trace.config.num_channels;
  const int n_star = trace.config.best_channel();
  const ObservationRule rule = ObservationRule::for_policy(policy);

  if (grid.empty() || grid.front() < 1 || grid.back() > horizon ||
      !std::is_sorted(grid.begin(), grid.end())) {
    throw std::invalid_argument(
        "metrics grid must be sorted and lie within [1, horizon]");
  }

  PerRepSummary s;
  s.regret_at_grid.reserve(grid.size());
  s.k_at_grid.reserve(grid.size());
  s.pulls_at_grid.reserve(grid.size() * num_channels);
  s.estimates_at_grid.reserve(grid.size() * num_channels);

  std::int64_t cum_gap = 0;
  std::int64_t cum_subopt = 0;
  std::vector<std::int64_t> pulls(num_channels, 0);
  std::vector<std::int64_t> succ(num_channels, 0), obs(num_channels, 0);

  std::size_t gi = 0;
  for (std::int64_t t = 1; t <= horizon && gi < grid.size(); ++t) {
    const std::int64_t base = (t - 1) * num_sources;
    for (int m = 0; m < num_sources; ++m) {
      cum_gap += trace.learner.aoi[base + m] - trace.genie.aoi[base + m];
    }
    const int n = trace.learner.channel[t - 1];
    pulls[n] += 1;
    if (n != n_star) cum_subopt += 1;
    const bool empty = trace.learner.empty_flag[t - 1] != 0;
    if (rule.counts(t, empty)) {
      succ[n] += trace.learner.success[t - 1] ? 1 : 0;
      obs[n] += 1;
    }
    if (t == grid[gi]) {
      s.regret_at_grid.push_back(static_cast<double>(cum_gap));
      s.k_at_grid.push_back(cum_subopt);
      for (int c = 0; c < num_channels; ++c) {
        s.pulls_at_grid.push_back(pulls[c]);
        s.estimates_at_grid.push_back(
            obs[c] > 0 ? static_cast<double>(succ[c]) /
                             static_cast<double>(obs[c])
                       : 0.0);
      }
      ++gi;
    }
  }

  s.final_estimates.assign(num_channels, 0.0);
  s.final_observations.assign(num_channels, 0);
  for (int c = 0; c < num_channels; ++c) {
    s.final_observations[c] = obs[c];
    if (obs[c] > 0) {
      s.final_estimates[c] =
          static_cast<double>(succ[c]) / static_cast<double>(obs[c]);
    }
  }

  const PeriodSegmentation seg = segment_periods(trace);
  s.period_count = static_cast<std::int64_t>(seg.periods.size());
  s.suboptimal_by_index.reserve(seg.periods.size());
  s.y_suboptimal_per_source.assign(num_sources, 0);
  for (const Period& p : seg.periods) {
    const bool subopt = p.frozen_channel != n_star;
    s.suboptimal_by_index.push_back(subopt ? 1 : 0);
    if (subopt) {
      s.suboptimal_period_count += 1;
      for (int m = 0; m < num_sources; ++m) {
        s.y_suboptimal_per_source[m] += p.cum_aoi[m];
      }
    }
  }
  if (trace.mode == RunMode::mirrored_genie) {
    s.dominance_ok = aoi_dominates(trace);
    s.optimal_period_gap = optimal_period_aoi_gap(trace, seg);
  }
  return s;
}

// Empirical per-period-index suboptimal-choice statistics.
struct PeriodStats {
  std::int64_t replications = 0;
  std::int64_t total_periods = 0;
  std::int64_t suboptimal_periods = 0;
  std::vector<std::int64_t> samples_by_index;      // reps covering index p
  std::vector<std::int64_t> suboptimal_by_index;
  std::vector<double> y_suboptimal_mean_per_source;  // conditional on suboptimal
  std::int64_t dominance_violations = 0;
  std::int64_t optimal_period_gap_violations = 0;

  double rate(std::size_t p) const {
    return samples_by_index[p] > 0
               ? static_cast<double>(suboptimal_by_index[p]) /
                     static_cast<double>(samples_by_index[p])
               : 0.0;
  }
  double rate_stderr(std::size_t p) const {
    if (samples_by_index[p] < 1) return 0.0;
    const double r = rate(p);
    return std::sqrt(r * (1.0 - r) /
                     static_cast<double>(samples_by_index[p]));
  }
  // empirical counterpart of the summed tail bound
  double empirical_rate_sum() const {
    double sum = 0.0;
    for (std::size_t p = 0; p < samples_by_index.size(); ++p) sum += rate(p);
    return sum;
  }
};

// Aggregated curves and diagnostics for one (config, policy, mode) batch.
struct MetricsRecord {
  NetworkConfig config;
  ChannelPolicySpec policy;
  RunMode mode = RunMode::independent_genie;
  std::vector<std::int64_t> grid;
  int replication_count = 0;

  std::vector<double> regret_mean, regret_stderr;   // per grid slot
  std::vector<double> k_mean;                        // per grid slot
  std::vector<double> pulls_mean;                    // grid x N
  std::vector<double> estimate_mean;                 // grid x N
  PeriodStats periods;
  // replications whose final estimate of the best channel sits within
  // three binomial standard deviations of the truth
  std::int64_t estimator_within_3sigma = 0;

  double regret_at(std::int64_t t) const {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] == t) return regret_mean[i];
    }
    throw std::invalid_argument("slot " + std::to_string(t) +
                                " is not on the metrics grid");
  }
  double estimate_at(std::int64_t t, int channel) const {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] == t) {
        return estimate_mean[i * config.num_channels + channel];
      }
    }
    throw std::invalid_argument("slot " + std::to_string(t) +
                                " is not on the metrics grid");
  }
};

// Merges per-replication summaries in replication order, so results do not
// depend on which thread produced which summary.
class MetricsAccumulator {
 public:
  MetricsAccumulator(const NetworkConfig& cfg, const ChannelPolicySpec& policy,
                     RunMode mode, std::vector<std::int64_t> grid)
      : cfg_(cfg), policy_(policy), mode_(mode), grid_(std::move(grid)) {
    const std::size_t cells = grid_.size() * cfg.num_channels;
    regret_sum_.assign(grid_.size(), 0.0);
    regret_sumsq_.assign(grid_.size(), 0.0);
    k_sum_.assign(grid_.size(), 0.0);
    pulls_sum_.assign(cells, 0.0);
    estimates_sum_.assign(cells, 0.0);
    y_subopt_sum_.assign(cfg.num_sources, 0.0);
  }

  void add(const PerRepSummary& s) {
    reps_ += 1;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      regret_sum_[i] += s.regret_at_grid[i];
      regret_sumsq_[i] += s.regret_at_grid[i] * s.regret_at_grid[i];
      k_sum_[i] += static_cast<double>(s.k_at_grid[i]);
    }
    for (std::size_t i = 0; i < pulls_sum_.size(); ++i) {
      pulls_sum_[i] += static_cast<double>(s.pulls_at_grid[i]);
      estimates_sum_[i] += s.estimates_at_grid[i];
    }
    stats_.total_periods += s.period_count;
    stats_.suboptimal_periods += s.suboptimal_period_count;
    if (s.suboptimal_by_index.size() > stats_.samples_by_index.size()) {
      stats_.samples_by_index.resize(s.suboptimal_by_index.size(), 0);
      stats_.suboptimal_by_index.resize(s.suboptimal_by_index.size(), 0);
    }
    for (std::size_t p = 0; p < s.suboptimal_by_index.size(); ++p) {
      stats_.samples_by_index[p] += 1;
      stats_.suboptimal_by_index[p] += s.suboptimal_by_index[p];
    }
    for (int m = 0; m < cfg_.num_sources; ++m) {
      y_subopt_sum_[m] += static_cast<double>(s.y_suboptimal_per_source[m]);
    }
    if (!s.dominance_ok) stats_.dominance_violations += 1;
    if (s.optimal_period_gap != 0) stats_.optimal_period_gap_violations += 1;
    const int star = cfg_.best_channel();
    if (s.final_observations[star] > 0) {
      const double mu = cfg_.reliabilities[star];
      const double tol =
          3.0 * std::sqrt(mu * (1.0 - mu) /
                          static_cast<double>(s.final_observations[star]));
      if (std::abs(s.final_estimates[star] - mu) <= tol) e3_ok_ += 1;
    }
  }

  MetricsRecord finish() const {
    MetricsRecord r;
    r.config = cfg_;
    r.policy = policy_;
    r.mode = mode_;
    r.grid = grid_;
    r.replication_count = reps_;
    const double n = static_cast<double>(std::max(reps_, 1));
    r.regret_mean.resize(grid_.size());
    r.regret_stderr.resize(grid_.size());
    r.k_mean.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      r.regret_mean[i] = regret_sum_[i] / n;
      r.k_mean[i] = k_sum_[i] / n;
      if (reps_ > 1) {
        const double var = std::max(
            0.0, (regret_sumsq_[i] - regret_sum_[i] * regret_sum_[i] / n) /
                     (n - 1.0));
        r.regret_stderr[i] = std::sqrt(var / n);
      } else {
        r.regret_stderr[i] = 0.0;
      }
    }
    r.pulls_mean.resize(pulls_sum_.size());
    r.estimate_mean.resize(estimates_sum_.size());
    for (std::size_t i = 0; i < pulls_sum_.size(); ++i) {
      r.pulls_mean[i] = pulls_sum_[i] / n;
      r.estimate_mean[i] = estimates_sum_[i] / n;
    }
    r.estimator_within_3sigma = e3_ok_;
    r.periods = stats_;
    r.periods.replications = reps_;
    r.periods.y_suboptimal_mean_per_source.assign(cfg_.num_sources, 0.0);
    if (stats_.suboptimal_periods > 0) {
      for (int m = 0; m < cfg_.num_sources; ++m) {
        r.periods.y_suboptimal_mean_per_source[m] =
            y_subopt_sum_[m] / static_cast<double>(stats_.suboptimal_periods);
      }
    }
    return r;
  }

  const std::vector<std::int64_t>& grid() const { return grid_; }

 private:
  NetworkConfig cfg_;
  ChannelPolicySpec policy_;
  RunMode mode_;
  std::vector<std::int64_t> grid_;
  int reps_ = 0;
  std::vector<double> regret_sum_, regret_sumsq_, k_sum_;
  std::vector<double> pulls_sum_, estimates_sum_;
  std::vector<double> y_subopt_sum_;
  PeriodStats stats_;
  std::int64_t e3_ok_ = 0;
};

// Batch form over materialized traces. Mixed configs are a caller bug.
inline MetricsRecord regret_curve(const std::vector<ReplicationTrace>& traces,
                                  const ChannelPolicySpec& policy,
                                  const std::vector<std::int64_t>& grid) {
  if (traces.empty()) throw std::invalid_argument("no traces to aggregate");
  MetricsAccumulator acc(traces.front().config, policy, traces.front().mode,
                         grid);
  for (const auto& t : traces) {
    if (!(t.config == traces.front().config) ||
        t.mode != traces.front().mode) {
      throw std::invalid_argument(
          "traces from different configs cannot be aggregated");
    }
    acc.add(summarize_replication(t, policy, grid));
  }
  return acc.finish();
}

// Empirical per-index suboptimal-period frequencies with the matching
// clamped tail bounds; rows are period indices with at least one sample.
struct SuboptimalRateRow {
  std::int64_t period_index = 0;  // 1-based
  std::int64_t samples = 0;
  std::int64_t suboptimal = 0;
  double rate = 0.0;
  double stderr_ = 0.0;
  double bound = 1.0;  // clamped worst-gap Hoeffding bound
};

inline std::vector<SuboptimalRateRow> suboptimal_period_rate(
    const PeriodStats& stats, const BoundInputs& inputs) {
  std::vector<SuboptimalRateRow> rows;
  rows.reserve(stats.samples_by_index.size());
  for (std::size_t p = 0; p < stats.samples_by_index.size(); ++p) {
    if (stats.samples_by_index[p] == 0) continue;
    SuboptimalRateRow row;
    row.period_index = static_cast<std::int64_t>(p + 1);
    row.samples = stats.samples_by_index[p];
    row.suboptimal = stats.suboptimal_by_index[p];
    row.rate = stats.rate(p);
    row.stderr_ = stats.rate_stderr(p);
    // the event {nbar(p) != n*} is the union over suboptimal channels; sum
    // the per-channel bounds, then clamp
    double total = 0.0;
    for (double g : inputs.gaps) {
      total += hoeffding_bound_raw(row.period_index, inputs.num_channels, g);
    }
    row.bound = inputs.gaps.empty() ? 0.0 : std::min(1.0, total);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace aoisim
