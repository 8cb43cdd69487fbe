#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aoisim/metrics.hpp"
#include "aoisim/simulator.hpp"

namespace aoisim {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kPeriodsSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Experiment configuration (JSON file; schema documented in the README)
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  NetworkConfig network;
  SourcePolicySpec source_policy;
  std::vector<ChannelPolicySpec> channel_policies;
  RunMode mode = RunMode::independent_genie;
  bool decouple_genie_randomness = false;
  int grid_points = 200;
  std::vector<std::int64_t> extra_grid;  // slots merged into the log grid
  std::string output_dir = "out";
  int threads = 0;  // 0 = hardware concurrency
  bool dump_trace = false;

  std::vector<std::int64_t> grid() const {
    return merge_grid(log_slot_grid(network.horizon, grid_points),
                      extra_grid);
  }
};

struct ConfigError {
  std::string path;    // dotted key path, e.g. network.arrival_rate
  std::string message;
  int line = 0;        // 1-based line in the config file; 0 if unknown
};

namespace detail {

// best-effort line lookup: first occurrence of "key" in the raw text
inline int find_key_line(const std::string& text, const std::string& path) {
  std::string key = path;
  if (const auto dot = key.rfind('.'); dot != std::string::npos) {
    key = key.substr(dot + 1);
  }
  const std::string needle = "\"" + key + "\"";
  const auto pos = text.find(needle);
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

inline int line_of_byte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + byte, '\n'));
}

}  // namespace detail

// Parses and semantically validates an experiment config. Returns errors
// instead of throwing so a CLI can print all of them with line hints.
inline bool parse_experiment_config(const std::string& text,
                                    ExperimentConfig& out,
                                    std::vector<ConfigError>& errors) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    errors.push_back({"", e.what(), detail::line_of_byte(text, e.byte)});
    return false;
  }

  auto fail = [&](const std::string& path, const std::string& message) {
    errors.push_back({path, message, detail::find_key_line(text, path)});
  };

  try {
    const auto& net = j.at("network");
    out.network.num_sources = net.value("sources", 1);
    out.network.num_channels = net.value("channels", 1);
    out.network.arrival_rate = net.value("arrival_rate", 0.0);
    out.network.reliabilities =
        net.value("reliabilities", std::vector<double>{});
    out.network.horizon = net.value("horizon", std::int64_t{1});
    out.network.base_seed = net.value("base_seed", std::uint64_t{1});
    out.network.replications = net.value("replications", 1);
  } catch (const nlohmann::json::exception& e) {
    fail("network", e.what());
    return false;
  }

  for (const auto& msg : validate(out.network)) {
    fail("network", msg);
  }

  if (j.contains("source_policy")) {
    out.source_policy.name = j["source_policy"].is_string()
                                 ? j["source_policy"].get<std::string>()
                                 : j["source_policy"].value("name", "");
    if (!source_policy_known(out.source_policy.name)) {
      fail("source_policy", "unknown source policy '" +
                                out.source_policy.name +
                                "' (expected abmw or roundrobin)");
    }
  }

  out.channel_policies.clear();
  if (j.contains("channel_policies")) {
    for (const auto& cp : j["channel_policies"]) {
      ChannelPolicySpec spec;
      if (cp.is_string()) {
        spec.name = cp.get<std::string>();
      } else {
        spec.name = cp.value("name", "");
        spec.epsilon_c = cp.value("epsilon_c", 0.0);
        spec.ucb_constant = cp.value("ucb_constant", 2.0);
        spec.hybrid_switch_slot =
            cp.value("switch_slot", std::int64_t{10000});
        spec.observe_dummy_slots = cp.value("observe_dummy_slots", true);
      }
      if (!channel_policy_known(spec.name)) {
        fail("channel_policies",
             "unknown channel policy '" + spec.name +
                 "' (expected eps-greedy, ucb, ts, optimal, hybrid or genie)");
      }
      if (spec.ucb_constant <= 0.0) {
        fail("channel_policies", "ucb_constant must be positive");
      }
      if (spec.hybrid_switch_slot < 0) {
        fail("channel_policies", "switch_slot must be non-negative");
      }
      out.channel_policies.push_back(std::move(spec));
    }
  }
  if (out.channel_policies.empty()) {
    fail("channel_policies", "at least one channel policy is required");
  }

  const std::string mode = j.value("mode", "independent");
  if (mode == "independent") {
    out.mode = RunMode::independent_genie;
  } else if (mode == "mirrored") {
    out.mode = RunMode::mirrored_genie;
  } else {
    fail("mode", "mode must be 'independent' or 'mirrored'");
  }
  out.decouple_genie_randomness = j.value("decouple_genie_randomness", false);
  if (out.decouple_genie_randomness && out.mode == RunMode::mirrored_genie) {
    fail("decouple_genie_randomness",
         "mirrored mode requires the shared environment stream");
  }

  out.grid_points = j.value("grid_points", 200);
  if (out.grid_points < 1) fail("grid_points", "grid_points must be >= 1");
  if (j.contains("grid")) {
    out.extra_grid = j["grid"].get<std::vector<std::int64_t>>();
    for (auto t : out.extra_grid) {
      if (t < 1 || t > out.network.horizon) {
        fail("grid", "grid slots must lie within [1, horizon]");
        break;
      }
    }
  }

  out.output_dir = j.value("output_dir", std::string("out"));
  out.threads = j.value("threads", 0);
  if (out.threads < 0) fail("threads", "threads must be >= 0");
  out.dump_trace = j.value("trace", false);

  return errors.empty();
}

inline ExperimentConfig load_experiment_config(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::invalid_argument("cannot open config file: " + file.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg;
  std::vector<ConfigError> errors;
  if (!parse_experiment_config(buf.str(), cfg, errors)) {
    std::ostringstream msg;
    msg << "invalid config " << file.string() << ":";
    for (const auto& e : errors) {
      msg << "\n  ";
      if (e.line > 0) msg << "line " << e.line << ": ";
      if (!e.path.empty()) msg << e.path << ": ";
      msg << e.message;
    }
    throw std::invalid_argument(msg.str());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Batch runner
// ---------------------------------------------------------------------------

// Raised when a replication trips a model invariant; carries the seed so
// the failure can be reproduced in isolation.
struct replication_failure : invariant_violation {
  replication_failure(std::uint64_t seed_, const std::string& what_)
      : invariant_violation("replication with seed " + std::to_string(seed_) +
                            ": " + what_),
        seed(seed_) {}
  std::uint64_t seed;
};

using ProgressFn = std::function<void(int done, int total)>;

// Runs all replications of one channel policy, optionally across threads.
// Per-replication summaries are merged in seed order, so the result is
// byte-identical no matter how many workers ran or how they interleaved.
inline MetricsRecord run_policy_batch(const ExperimentConfig& exp,
                                      const ChannelPolicySpec& policy,
                                      const ProgressFn& progress = {}) {
  require_valid(exp.network);
  const int reps = exp.network.replications;
  const auto grid = exp.grid();

  std::vector<PerRepSummary> summaries(reps);
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex error_mutex;
  std::vector<std::pair<std::uint64_t, std::string>> failures;

  int workers = exp.threads > 0
                    ? exp.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, reps));

  auto work = [&]() {
    ReplicationTrace trace;  // reused across this worker's replications
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      const std::uint64_t seed = exp.network.base_seed + r;
      try {
        auto learner_source = make_source_policy(exp.source_policy);
        auto learner_channel = make_channel_policy(
            policy, exp.network, Rng::stream(seed, kLearnerPolicyStream));
        auto genie_source = make_source_policy(exp.source_policy);
        RngEnvStream env(exp.network.num_sources, exp.network.arrival_rate,
                         Rng::stream(seed, kEnvStream));
        RngEnvStream genie_env(exp.network.num_sources,
                               exp.network.arrival_rate,
                               Rng::stream(seed, kGenieEnvStream));
        trace.seed = seed;
        run_replication_into(
            exp.network, *learner_source, *learner_channel,
            genie_source.get(), exp.mode, env,
            exp.decouple_genie_randomness ? &genie_env : nullptr, trace);
        summaries[r] = summarize_replication(trace, policy, grid);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failures.emplace_back(seed, e.what());
        return;
      }
      if (progress) progress(done.fetch_add(1) + 1, reps);
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  if (!failures.empty()) {
    throw replication_failure(failures.front().first,
                              failures.front().second);
  }

  MetricsAccumulator acc(exp.network, policy, exp.mode, grid);
  for (const auto& s : summaries) acc.add(s);
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Artifact writers. Numbers use %.9g so reruns are byte-identical.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::ofstream open_artifact(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings everywhere
  if (!out) {
    throw std::runtime_error("cannot write artifact: " + path.string());
  }
  return out;
}

}  // namespace detail

// One row per grid slot: cumulative regret, suboptimal-selection count and
// per-channel selection counts, averaged over replications.
inline void write_regret_csv(const std::filesystem::path& path,
                             const MetricsRecord& r) {
  auto out = detail::open_artifact(path);
  const int nc = r.config.num_channels;
  out << "t,regret_mean,regret_stderr,k_mean";
  for (int n = 1; n <= nc; ++n) out << ",pulls_" << n;
  out << "\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    out << r.grid[i] << ',' << detail::fmt(r.regret_mean[i]) << ','
        << detail::fmt(r.regret_stderr[i]) << ',' << detail::fmt(r.k_mean[i]);
    for (int n = 0; n < nc; ++n) {
      out << ',' << detail::fmt(r.pulls_mean[i * nc + n]);
    }
    out << "\n";
  }
}

// One row per grid slot: mean reliability estimates per channel.
inline void write_estimates_csv(const std::filesystem::path& path,
                                const MetricsRecord& r) {
  auto out = detail::open_artifact(path);
  const int nc = r.config.num_channels;
  out << "t";
  for (int n = 1; n <= nc; ++n) out << ",muhat_" << n;
  out << "\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    out << r.grid[i];
    for (int n = 0; n < nc; ++n) {
      out << ',' << detail::fmt(r.estimate_mean[i * nc + n]);
    }
    out << "\n";
  }
}

// Period statistics plus the closed-form bound evaluations.
inline void write_periods_json(const std::filesystem::path& path,
                               const MetricsRecord& r) {
  const BoundInputs inputs = bound_inputs(r.config);
  nlohmann::ordered_json j;
  j["schema_version"] = kPeriodsSchemaVersion;
  j["policy"] = r.policy.name;
  j["mode"] = to_string(r.mode);
  j["replications"] = r.periods.replications;
  j["n_star"] = r.config.best_channel() + 1;
  j["total_periods"] = r.periods.total_periods;
  j["suboptimal_periods"] = r.periods.suboptimal_periods;
  j["empirical_rate_sum"] = r.periods.empirical_rate_sum();
  j["cp_constant"] =
      inputs.gaps.empty() ? 0.0 : cp_constant(inputs);
  j["dominance_violations"] = r.periods.dominance_violations;
  j["optimal_period_gap_violations"] =
      r.periods.optimal_period_gap_violations;
  j["y_suboptimal_mean_per_source"] = r.periods.y_suboptimal_mean_per_source;
  j["estimator_within_3sigma"] = r.estimator_within_3sigma;

  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : suboptimal_period_rate(r.periods, inputs)) {
    rows.push_back({{"p", row.period_index},
                    {"samples", row.samples},
                    {"suboptimal", row.suboptimal},
                    {"rate", row.rate},
                    {"stderr", row.stderr_},
                    {"bound", row.bound}});
  }
  j["by_index"] = std::move(rows);

  auto out = detail::open_artifact(path);
  out << j.dump(2) << "\n";
}

inline nlohmann::ordered_json policy_spec_json(const ChannelPolicySpec& p,
                                               int num_channels) {
  nlohmann::ordered_json j;
  j["name"] = p.name;
  if (p.name == "eps-greedy") {
    j["epsilon_c"] = p.resolved_epsilon_c(num_channels);
  }
  if (p.name == "ucb") j["ucb_constant"] = p.ucb_constant;
  if (p.name == "hybrid") j["switch_slot"] = p.hybrid_switch_slot;
  j["observe_dummy_slots"] = p.observe_dummy_slots;
  return j;
}

// Full record of what produced the artifacts: config, seed rule, policies
// and file list. Everything needed to reproduce the run bit for bit.
inline void write_manifest(const std::filesystem::path& path,
                           const ExperimentConfig& exp,
                           const std::vector<std::string>& artifact_files) {
  nlohmann::ordered_json j;
  j["artifact_version"] = kArtifactVersion;
  j["csv_schema_version"] = kCsvSchemaVersion;
  j["periods_schema_version"] = kPeriodsSchemaVersion;
  j["network"] = {{"sources", exp.network.num_sources},
                  {"channels", exp.network.num_channels},
                  {"arrival_rate", exp.network.arrival_rate},
                  {"reliabilities", exp.network.reliabilities},
                  {"horizon", exp.network.horizon},
                  {"base_seed", exp.network.base_seed},
                  {"replications", exp.network.replications}};
  j["seed_rule"] = "replication r uses seed base_seed + r, r in [0, replications)";
  j["source_policy"] = exp.source_policy.name;
  auto policies = nlohmann::ordered_json::array();
  for (const auto& p : exp.channel_policies) {
    policies.push_back(policy_spec_json(p, exp.network.num_channels));
  }
  j["channel_policies"] = std::move(policies);
  j["mode"] = to_string(exp.mode);
  j["decouple_genie_randomness"] = exp.decouple_genie_randomness;
  j["grid"] = exp.grid();
  j["files"] = artifact_files;
  auto out = detail::open_artifact(path);
  out << j.dump(2) << "\n";
}

// Line-delimited per-slot dump of one replication, learner and genie side
// by side. Heavyweight; meant for debugging single replications.
inline void write_trace_jsonl(const std::filesystem::path& path,
                              const ReplicationTrace& trace) {
  auto out = detail::open_artifact(path);
  const int num_sources = trace.num_sources();
  for (std::int64_t t = 1; t <= trace.horizon(); ++t) {
    nlohmann::ordered_json j;
    j["t"] = t;
    auto arr = nlohmann::ordered_json::array();
    for (int m = 0; m < num_sources; ++m) arr.push_back(trace.arrival(t, m) ? 1 : 0);
    j["a"] = std::move(arr);
    j["u"] = trace.channel_u[t - 1];
    for (const char* side : {"learner", "genie"}) {
      const SystemTrace& s =
          side[0] == 'l' ? trace.learner : trace.genie;
      nlohmann::ordered_json row;
      row["E"] = static_cast<int>(s.empty_flag[t - 1]);
      row["m"] = s.source[t - 1] + 1;
      row["n"] = s.channel[t - 1] + 1;
      row["dummy"] = static_cast<int>(s.dummy[t - 1]);
      row["b"] = static_cast<int>(s.success[t - 1]);
      row["delivered"] = s.delivered_source[t - 1] >= 0;
      auto h = nlohmann::ordered_json::array();
      for (int m = 0; m < num_sources; ++m) {
        h.push_back(s.aoi[(t - 1) * num_sources + m]);
      }
      row["h"] = std::move(h);
      j[side] = std::move(row);
    }
    out << j.dump() << "\n";
  }
}

// Runs every configured channel policy and writes the full artifact set.
// Returns the metrics records in policy order.
inline std::vector<MetricsRecord> run_experiment(
    const ExperimentConfig& exp, const ProgressFn& progress = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(exp.output_dir);

  std::vector<std::string> files;
  std::vector<MetricsRecord> records;
  for (const auto& policy : exp.channel_policies) {
    MetricsRecord record = run_policy_batch(exp, policy, progress);
    const std::string stem = policy.name;
    write_regret_csv(fs::path(exp.output_dir) / (stem + "_regret.csv"),
                     record);
    write_estimates_csv(fs::path(exp.output_dir) / (stem + "_estimates.csv"),
                        record);
    write_periods_json(fs::path(exp.output_dir) / (stem + "_periods.json"),
                       record);
    files.push_back(stem + "_regret.csv");
    files.push_back(stem + "_estimates.csv");
    files.push_back(stem + "_periods.json");
    if (exp.dump_trace) {
      // dump the first replication only; full batches would be enormous
      ReplicationTrace trace =
          run_replication(exp.network, exp.source_policy, policy, exp.mode,
                          exp.network.base_seed,
                          exp.decouple_genie_randomness);
      write_trace_jsonl(fs::path(exp.output_dir) / (stem + "_trace.jsonl"),
                        trace);
      files.push_back(stem + "_trace.jsonl");
    }
    records.push_back(std::move(record));
  }
  write_manifest(fs::path(exp.output_dir) / "manifest.json", exp, files);
  return records;
}

}  // namespace aoisim
