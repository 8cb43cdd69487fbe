#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <vector>

#include "aoisim/model.hpp"

using namespace aoisim;

namespace {

NetworkConfig section5_config() {
  NetworkConfig cfg;
  cfg.num_sources = 3;
  cfg.num_channels = 5;
  cfg.arrival_rate = 0.1;
  cfg.reliabilities = {0.4, 0.45, 0.5, 0.55, 0.6};
  cfg.horizon = 100000;
  cfg.base_seed = 1;
  cfg.replications = 1;
  return cfg;
}

}  // namespace

TEST_CASE("config validation accepts the reference network") {
  REQUIRE(validate(section5_config()).empty());
  REQUIRE(section5_config().best_channel() == 4);
  REQUIRE(section5_config().best_reliability() == 0.6);
  REQUIRE(section5_config().min_gap() == Catch::Approx(0.05));
}

TEST_CASE("config validation rejects degenerate rates and tied maxima") {
  auto cfg = section5_config();
  cfg.arrival_rate = 1.0;
  REQUIRE_FALSE(validate(cfg).empty());
  cfg.arrival_rate = 0.0;
  REQUIRE_FALSE(validate(cfg).empty());

  cfg = section5_config();
  cfg.reliabilities = {0.4, 0.6, 0.5, 0.55, 0.6};  // tied max
  REQUIRE_FALSE(validate(cfg).empty());

  cfg = section5_config();
  cfg.reliabilities[0] = 0.0;  // mu must be in (0,1]
  REQUIRE_FALSE(validate(cfg).empty());
  cfg.reliabilities[0] = 1.1;
  REQUIRE_FALSE(validate(cfg).empty());

  cfg = section5_config();
  cfg.horizon = 0;
  REQUIRE_FALSE(validate(cfg).empty());
  REQUIRE_THROWS_AS(require_valid(cfg), std::invalid_argument);
}

TEST_CASE("zero arrival rate draws an all-false vector") {
  Rng rng(1);
  std::vector<std::uint8_t> a;
  draw_arrivals(rng, 4, 0.0, a);
  REQUIRE(a == std::vector<std::uint8_t>{0, 0, 0, 0});
}

TEST_CASE("near-one arrival rate almost never yields an empty slot") {
  Rng rng(2);
  std::vector<std::uint8_t> a;
  int all_false = 0;
  const int slots = 1000000;
  for (int i = 0; i < slots; ++i) {
    draw_arrivals(rng, 1, 0.999999, a);
    if (!a[0]) ++all_false;
  }
  // P(all false) = 1e-6 per slot; expect ~1 hit, allow generous slack
  REQUIRE(all_false <= 20);
}

TEST_CASE("arrival count matches the Binomial(3, 0.1) mean") {
  Rng rng(3);
  std::vector<std::uint8_t> a;
  std::int64_t total = 0;
  const int slots = 1000000;
  for (int i = 0; i < slots; ++i) {
    draw_arrivals(rng, 3, 0.1, a);
    total += a[0] + a[1] + a[2];
  }
  const double mean = static_cast<double>(total) / slots;
  REQUIRE(mean == Catch::Approx(0.3).margin(0.01));
}

TEST_CASE("arrivals consume exactly M draws in source order") {
  // Two generators from the same seed: drawing arrivals for M sources must
  // advance the stream exactly M steps, regardless of lambda.
  Rng a(42), b(42);
  std::vector<std::uint8_t> out;
  draw_arrivals(a, 5, 0.0, out);
  for (int i = 0; i < 5; ++i) b.next_u64();
  REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("arrivals replace the queued packet with the fresher one") {
  SystemState s = SystemState::initial(1);
  s.slot = 9;
  s.queue_gen[0] = 5;
  apply_arrivals(s, {1});
  REQUIRE(s.queue_gen[0] == 9);
  REQUIRE_FALSE(s.empty_flag);
}

TEST_CASE("no arrival leaves an absent queue absent") {
  SystemState s = SystemState::initial(2);
  s.slot = 4;
  apply_arrivals(s, {0, 0});
  REQUIRE(s.queue_gen[0] == -1);
  REQUIRE(s.queue_gen[1] == -1);
  REQUIRE(s.empty_flag);
}

TEST_CASE("a single arrival flips the empty flag") {
  SystemState s = SystemState::initial(3);
  s.slot = 4;
  apply_arrivals(s, {0, 1, 0});
  REQUIRE(s.queue_gen[1] == 4);
  REQUIRE_FALSE(s.empty_flag);
}

TEST_CASE("coupled channel realization thresholds the shared uniform") {
  const std::vector<double> mu = {0.4, 0.45, 0.5, 0.55, 0.6};
  // u = 0.47 -> channels with mu >= 0.47 are ON
  {
    ChannelDraw d;
    d.u = 0.47;
    d.states.resize(mu.size());
    for (std::size_t n = 0; n < mu.size(); ++n) {
      d.states[n] = channel_on(d.u, mu[n]);
    }
    REQUIRE(d.states == std::vector<std::uint8_t>{0, 0, 1, 1, 1});
  }
  REQUIRE(channel_on(0.0, 0.4));   // u = 0: every channel is ON
  REQUIRE_FALSE(channel_on(1.0, 0.6));  // u = 1, mu < 1: all OFF
}

TEST_CASE("coupling is monotone in reliability") {
  Rng rng(17);
  const std::vector<double> mu = {0.2, 0.35, 0.5, 0.9};
  for (int i = 0; i < 10000; ++i) {
    const ChannelDraw d = realize_channels(rng, mu);
    for (std::size_t n = 0; n + 1 < mu.size(); ++n) {
      if (d.states[n]) REQUIRE(d.states[n + 1]);  // mu ascending here
    }
  }
}

TEST_CASE("per-channel marginals match the reliabilities") {
  Rng rng(23);
  const std::vector<double> mu = {0.4, 0.45, 0.5, 0.55, 0.6};
  std::vector<std::int64_t> on(mu.size(), 0);
  const int slots = 100000;
  for (int i = 0; i < slots; ++i) {
    const ChannelDraw d = realize_channels(rng, mu);
    for (std::size_t n = 0; n < mu.size(); ++n) on[n] += d.states[n];
  }
  for (std::size_t n = 0; n < mu.size(); ++n) {
    const double freq = static_cast<double>(on[n]) / slots;
    const double tol = 3.0 * std::sqrt(mu[n] * (1 - mu[n]) / slots);
    REQUIRE(std::abs(freq - mu[n]) <= tol);
  }
}

TEST_CASE("aoi increments by one without a delivery") {
  SystemState s = SystemState::initial(1);
  s.slot = 10;
  s.last_delivery_gen[0] = 5;
  s.aoi[0] = 5;
  advance_aoi(s, std::nullopt);
  REQUIRE(s.slot == 11);
  REQUIRE(s.aoi[0] == 6);
}

TEST_CASE("delivery resets aoi to slot minus generation") {
  SystemState s = SystemState::initial(1);
  s.slot = 20;
  s.last_delivery_gen[0] = 10;
  s.aoi[0] = 10;
  s.queue_gen[0] = 18;
  advance_aoi(s, DeliveredPacket{0, 18});
  REQUIRE(s.slot == 21);
  REQUIRE(s.aoi[0] == 3);
  REQUIRE(s.last_delivery_gen[0] == 18);
  REQUIRE(s.queue_gen[0] == -1);
}

TEST_CASE("same-slot generation and delivery reaches the minimum aoi") {
  SystemState s = SystemState::initial(1);
  s.slot = 7;
  apply_arrivals(s, {1});
  advance_aoi(s, DeliveredPacket{0, s.queue_gen[0]});
  REQUIRE(s.aoi[0] == 1);
}

TEST_CASE("stale or future deliveries are rejected") {
  SystemState s = SystemState::initial(1);
  s.slot = 20;
  s.last_delivery_gen[0] = 10;
  REQUIRE_THROWS_AS(advance_aoi(s, DeliveredPacket{0, 10}),
                    invariant_violation);
  REQUIRE_THROWS_AS(advance_aoi(s, DeliveredPacket{0, 9}),
                    invariant_violation);
  REQUIRE_THROWS_AS(advance_aoi(s, DeliveredPacket{0, 25}),
                    invariant_violation);
}

TEST_CASE("aoi identity h = t - tau holds along random walks") {
  Rng rng(101);
  SystemState s = SystemState::initial(3);
  std::vector<std::uint8_t> arrivals;
  for (int step = 0; step < 5000; ++step) {
    draw_arrivals(rng, 3, 0.3, arrivals);
    apply_arrivals(s, arrivals);
    std::optional<DeliveredPacket> delivered;
    const int m = rng.uniform_int(3);
    if (s.has_packet(m) && rng.bernoulli(0.5)) {
      delivered = DeliveredPacket{m, s.queue_gen[m]};
    }
    const std::int64_t prev_slot = s.slot;
    std::vector<std::int64_t> prev_aoi = s.aoi;
    advance_aoi(s, delivered);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(s.aoi[k] == s.slot - s.last_delivery_gen[k]);
      // sawtooth: unit climb or a reset to at least 1
      if (!delivered || delivered->source != k) {
        REQUIRE(s.aoi[k] == prev_aoi[k] + 1);
      } else {
        REQUIRE(s.aoi[k] >= 1);
        REQUIRE(s.aoi[k] <= prev_aoi[k] + 1);
      }
      if (s.has_packet(k)) {
        REQUIRE(s.queue_gen[k] > s.last_delivery_gen[k]);
        REQUIRE(s.queue_gen[k] <= s.slot);
      }
    }
    REQUIRE(prev_slot + 1 == s.slot);
  }
}
