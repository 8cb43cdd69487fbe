#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "aoisim/metrics.hpp"
#include "aoisim/simulator.hpp"

using namespace aoisim;

namespace {

NetworkConfig small_config(double lambda = 0.1, std::int64_t horizon = 20000) {
  NetworkConfig cfg;
  cfg.num_sources = 3;
  cfg.num_channels = 5;
  cfg.arrival_rate = lambda;
  cfg.reliabilities = {0.4, 0.45, 0.5, 0.55, 0.6};
  cfg.horizon = horizon;
  cfg.base_seed = 1;
  cfg.replications = 1;
  return cfg;
}

bool traces_equal(const ReplicationTrace& a, const ReplicationTrace& b) {
  return a.arrivals == b.arrivals && a.channel_u == b.channel_u &&
         a.learner.channel == b.learner.channel &&
         a.learner.source == b.learner.source &&
         a.learner.success == b.learner.success &&
         a.learner.aoi == b.learner.aoi && a.genie.aoi == b.genie.aoi;
}

}  // namespace

TEST_CASE("rejected configs never reach slot one") {
  auto cfg = small_config();
  cfg.arrival_rate = 1.0;
  REQUIRE_THROWS_AS(run_replication(cfg, {"abmw"}, {.name = "ts"},
                                    RunMode::independent_genie, 1),
                    std::invalid_argument);
  cfg = small_config();
  cfg.reliabilities = {0.6, 0.45, 0.5, 0.55, 0.6};
  REQUIRE_THROWS_AS(run_replication(cfg, {"abmw"}, {.name = "ts"},
                                    RunMode::independent_genie, 1),
                    std::invalid_argument);
}

TEST_CASE("identical inputs produce bit-identical traces") {
  const auto cfg = small_config(0.1, 5000);
  const auto a = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                 RunMode::independent_genie, 99);
  const auto b = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                 RunMode::independent_genie, 99);
  REQUIRE(traces_equal(a, b));
}

TEST_CASE("environment stream does not depend on the channel policy") {
  const auto cfg = small_config(0.1, 5000);
  const auto ts = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                  RunMode::independent_genie, 7);
  const auto ucb = run_replication(cfg, {"abmw"}, {.name = "ucb"},
                                   RunMode::independent_genie, 7);
  REQUIRE(ts.arrivals == ucb.arrivals);
  REQUIRE(ts.channel_u == ucb.channel_u);
  // and both systems inside one run share them by construction
  REQUIRE(ts.genie.aoi.size() == ts.learner.aoi.size());
}

TEST_CASE("a genie learner matches the genie system slot for slot") {
  const auto cfg = small_config(0.1, 10000);
  const auto trace = run_replication(cfg, {"abmw"}, {.name = "genie"},
                                     RunMode::independent_genie, 3);
  REQUIRE(trace.learner.aoi == trace.genie.aoi);
  REQUIRE(trace.learner.channel == trace.genie.channel);
  std::int64_t integrand = 0;
  for (std::size_t i = 0; i < trace.learner.aoi.size(); ++i) {
    integrand += trace.learner.aoi[i] - trace.genie.aoi[i];
  }
  REQUIRE(integrand == 0);
}

TEST_CASE("mirrored mode dominance holds for every policy and seed tried") {
  const auto cfg = small_config(0.2, 4000);
  for (const char* policy : {"ts", "eps-greedy", "ucb", "optimal"}) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 10ULL}) {
      const auto trace = run_replication(cfg, {"abmw"}, {.name = policy},
                                         RunMode::mirrored_genie, seed);
      INFO(policy << " seed " << seed);
      REQUIRE(aoi_dominates(trace));
    }
  }
}

TEST_CASE("empty slots carry dummy probes and never update tau") {
  const auto cfg = small_config(0.1, 10000);
  const auto trace = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                     RunMode::independent_genie, 5);
  for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
    const bool empty = trace.learner.empty_flag[t - 1] != 0;
    const bool dummy = trace.learner.dummy[t - 1] != 0;
    REQUIRE(empty == dummy);  // work-conserving source
    if (empty) REQUIRE(trace.learner.delivered_source[t - 1] == -1);
  }
}

TEST_CASE("scripted environment reproduces a hand-checked episode") {
  NetworkConfig cfg;
  cfg.num_sources = 1;
  cfg.num_channels = 2;
  cfg.arrival_rate = 0.5;
  cfg.reliabilities = {0.25, 0.75};
  cfg.horizon = 4;
  // arrivals: t=1 yes, t=2 no, t=3 no, t=4 yes
  // u:        0.5 (ch2 ON), 0.9 (all OFF), 0.1 (all ON), 0.5 (ch2 ON)
  ScriptedEnvStream env({1, 0, 0, 1}, {0.5, 0.9, 0.1, 0.5}, 1);
  AgeBasedMaxWeight source;
  GeniePolicy channel(2, 1);
  ReplicationTrace trace;
  run_replication_into(cfg, source, channel, nullptr,
                       RunMode::mirrored_genie, env, trace);

  REQUIRE(trace.learner.empty_flag ==
          std::vector<std::uint8_t>{0, 1, 1, 0});
  REQUIRE(trace.learner.dummy == std::vector<std::uint8_t>{0, 1, 1, 0});
  REQUIRE(trace.learner.success == std::vector<std::uint8_t>{1, 0, 1, 1});
  REQUIRE(trace.learner.delivered_source ==
          std::vector<std::int32_t>{0, -1, -1, 0});
  // h(1)=1; delivery of gen 1 at t=1 -> h(2)=1; then 2; delivery of gen 4 -> h(4)=3
  REQUIRE(trace.learner.aoi == std::vector<std::int64_t>{1, 1, 2, 3});
  std::int64_t total = std::accumulate(trace.learner.aoi.begin(),
                                       trace.learner.aoi.end(),
                                       std::int64_t{0});
  REQUIRE(total == 7);

  const auto seg = segment_periods(trace);
  REQUIRE(seg.periods.empty());   // single boundary at t=2 starts the tail
  REQUIRE(seg.preamble_end == 1);
  REQUIRE(seg.tail_start == 2);
}

TEST_CASE("a trace with no empty slot is all preamble") {
  ReplicationTrace trace;
  trace.config = small_config(0.5, 6);
  trace.config.num_sources = 1;
  trace.config.num_channels = 2;
  trace.config.reliabilities = {0.3, 0.7};
  trace.learner.empty_flag = {0, 0, 0, 0, 0, 0};
  trace.learner.channel = {0, 0, 1, 1, 0, 1};
  trace.learner.aoi = {1, 2, 3, 4, 5, 6};
  trace.genie.aoi = trace.learner.aoi;
  const auto seg = segment_periods(trace);
  REQUIRE(seg.periods.empty());
  REQUIRE(seg.preamble_end == 6);
  REQUIRE(seg.tail_start == 7);
}

TEST_CASE("period cumulative aoi sums a staircase exactly") {
  // one complete period over slots [1,5] with h = 1,2,3,4,5, then a new
  // boundary at slot 6 opens the (excluded) tail
  ReplicationTrace trace;
  trace.config = small_config(0.5, 6);
  trace.config.num_sources = 1;
  trace.config.num_channels = 2;
  trace.config.reliabilities = {0.3, 0.7};
  trace.learner.empty_flag = {1, 1, 0, 0, 0, 1};
  trace.learner.channel = {0, 0, 1, 1, 1, 0};
  trace.learner.aoi = {1, 2, 3, 4, 5, 1};
  trace.genie.aoi = trace.learner.aoi;
  const auto seg = segment_periods(trace);
  REQUIRE(seg.preamble_end == 0);
  REQUIRE(seg.periods.size() == 1);
  const Period& p = seg.periods.front();
  REQUIRE(p.start == 1);
  REQUIRE(p.end == 5);
  REQUIRE(p.cum_aoi[0] == 15);  // arithmetic series 1..5
  REQUIRE(p.frozen_unique);
  REQUIRE(p.frozen_channel == 1);
  REQUIRE(seg.tail_start == 6);
}

TEST_CASE("segmentation flags a thawing channel choice when asked to") {
  ReplicationTrace trace;
  trace.config = small_config(0.5, 6);
  trace.config.num_sources = 1;
  trace.config.num_channels = 2;
  trace.config.reliabilities = {0.3, 0.7};
  trace.learner.empty_flag = {1, 0, 0, 0, 0, 1};
  trace.learner.channel = {0, 1, 0, 1, 1, 0};  // nonempty phase switches
  trace.learner.aoi = {1, 2, 3, 4, 5, 1};
  trace.genie.aoi = trace.learner.aoi;
  const auto lax = segment_periods(trace, false);
  REQUIRE(lax.periods.size() == 1);
  REQUIRE_FALSE(lax.periods.front().frozen_unique);
  REQUIRE(lax.periods.front().frozen_channel == -1);
  REQUIRE_THROWS_AS(segment_periods(trace, true), invariant_violation);
}

TEST_CASE("the empty-slot-probing policy freezes its choice every period") {
  const auto cfg = small_config(0.1, 20000);
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const auto trace = run_replication(cfg, {"abmw"}, {.name = "optimal"},
                                       RunMode::independent_genie, seed);
    REQUIRE_NOTHROW(segment_periods(trace, /*require_frozen=*/true));
  }
}

TEST_CASE("empty-phase lengths follow the first-arrival geometric law") {
  // brute-force oracle: P(some source generates) over 2^M patterns
  const auto cfg = small_config(0.1, 20000);
  double q = 0.0;
  for (int pattern = 0; pattern < (1 << cfg.num_sources); ++pattern) {
    if (pattern == 0) continue;
    double prob = 1.0;
    for (int m = 0; m < cfg.num_sources; ++m) {
      prob *= (pattern >> m) & 1 ? cfg.arrival_rate : 1.0 - cfg.arrival_rate;
    }
    q += prob;
  }
  REQUIRE(q == Catch::Approx(0.271).epsilon(1e-12));
  const double oracle_mean = 1.0 / q;  // 3.690036900369...

  std::int64_t phase_sum = 0, phase_count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto trace = run_replication(cfg, {"abmw"}, {.name = "optimal"},
                                       RunMode::independent_genie, 100 + seed);
    for (const Period& p : segment_periods(trace).periods) {
      std::int64_t len = 0;
      for (std::int64_t t = p.start; t <= p.end; ++t) {
        if (!trace.learner.empty_flag[t - 1]) break;
        ++len;
      }
      phase_sum += len;
      phase_count += 1;
    }
  }
  const double mean = static_cast<double>(phase_sum) /
                      static_cast<double>(phase_count);
  REQUIRE(phase_count > 5000);
  REQUIRE(mean == Catch::Approx(oracle_mean).epsilon(0.05));
}

TEST_CASE("optimal periods contribute zero aoi gap in mirrored runs") {
  const auto cfg = small_config(0.1, 20000);
  for (std::uint64_t seed : {21ULL, 22ULL, 23ULL, 24ULL}) {
    const auto trace = run_replication(cfg, {"abmw"}, {.name = "optimal"},
                                       RunMode::mirrored_genie, seed);
    const auto seg = segment_periods(trace, true);
    REQUIRE(optimal_period_aoi_gap(trace, seg) == 0);
  }
}

TEST_CASE("hybrid replays ts exactly through the switch slot") {
  auto cfg = small_config(0.75, 4000);
  ChannelPolicySpec hybrid{.name = "hybrid", .hybrid_switch_slot = 2000};
  const auto h = run_replication(cfg, {"abmw"}, hybrid,
                                 RunMode::independent_genie, 31);
  const auto ts = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                  RunMode::independent_genie, 31);
  for (std::int64_t t = 1; t <= 2000; ++t) {
    REQUIRE(h.learner.channel[t - 1] == ts.learner.channel[t - 1]);
    REQUIRE(h.learner.source[t - 1] == ts.learner.source[t - 1]);
  }
  for (std::int64_t t = 1; t <= 2000; ++t) {
    for (int m = 0; m < cfg.num_sources; ++m) {
      REQUIRE(h.learner_aoi(t, m) == ts.learner_aoi(t, m));
    }
  }
  // the two runs diverge somewhere after the handover
  REQUIRE(h.learner.channel != ts.learner.channel);
}

TEST_CASE("decoupled genie randomness stays unbiased for the genie learner") {
  auto cfg = small_config(0.3, 2000);
  double sum = 0.0, sumsq = 0.0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const auto trace =
        run_replication(cfg, {"abmw"}, {.name = "genie"},
                        RunMode::independent_genie, 1000 + r,
                        /*decouple_genie_randomness=*/true);
    std::int64_t gap = 0;
    for (std::size_t i = 0; i < trace.learner.aoi.size(); ++i) {
      gap += trace.learner.aoi[i] - trace.genie.aoi[i];
    }
    sum += static_cast<double>(gap);
    sumsq += static_cast<double>(gap) * static_cast<double>(gap);
  }
  const double mean = sum / reps;
  const double var = (sumsq - sum * sum / reps) / (reps - 1);
  const double stderr_ = std::sqrt(var / reps);
  REQUIRE(stderr_ > 0.0);  // genuinely decoupled: per-rep gaps fluctuate
  REQUIRE(std::abs(mean) <= 4.0 * stderr_);
}

TEST_CASE("mirrored mode cannot run with decoupled randomness") {
  const auto cfg = small_config(0.1, 100);
  REQUIRE_THROWS_AS(run_replication(cfg, {"abmw"}, {.name = "ts"},
                                    RunMode::mirrored_genie, 1, true),
                    std::invalid_argument);
}

TEST_CASE("delivered slots reset aoi by exactly the selection weight") {
  // weight = queued generation - last delivery generation; on success the
  // next-slot AoI must equal (t+1) - generation, i.e. the full reduction
  const auto cfg = small_config(0.3, 8000);
  const auto trace = run_replication(cfg, {"abmw"}, {.name = "ts"},
                                     RunMode::independent_genie, 123);
  std::int64_t deliveries = 0;
  for (std::int64_t t = 1; t < cfg.horizon; ++t) {
    const int m = trace.learner.delivered_source[t - 1];
    if (m < 0) continue;
    ++deliveries;
    const std::int64_t g = trace.learner.delivered_gen[t - 1];
    REQUIRE(trace.learner_aoi(t + 1, m) == t + 1 - g);
    REQUIRE(g > 0);
    REQUIRE(g <= t);
  }
  REQUIRE(deliveries > 1000);
}

TEST_CASE("mirrored regret is monotone and positive once K is positive") {
  const auto cfg = small_config(0.2, 5000);
  std::vector<ReplicationTrace> traces;
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    traces.push_back(run_replication(cfg, {"abmw"}, {.name = "ts"},
                                     RunMode::mirrored_genie, seed));
  }
  const auto grid = log_slot_grid(cfg.horizon, 30);
  const auto record = regret_curve(traces, {.name = "ts"}, grid);
  REQUIRE(record.k_mean.back() > 0.0);
  REQUIRE(record.regret_mean.back() > 0.0);
  for (std::size_t i = 1; i < record.regret_mean.size(); ++i) {
    REQUIRE(record.regret_mean[i] >= record.regret_mean[i - 1]);
  }
}
