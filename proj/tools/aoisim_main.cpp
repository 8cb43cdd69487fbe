// Experiment front-end: run replication batches, evaluate the closed-form
// bounds, or validate a config without simulating.
//
// Exit codes: 0 success, 2 invalid config, 3 unwritable output,
// 4 runtime invariant violation (message carries the offending seed).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aoisim/experiment.hpp"
#include "aoisim/metrics.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitOutput = 3;
constexpr int kExitInvariant = 4;

struct Overrides {
  std::vector<std::string> policies;
  std::int64_t seed = -1;
  int replications = -1;
  std::int64_t horizon = -1;
  double lambda = -1.0;
  std::string out;
  int threads = -1;
  std::string mode;
  bool trace = false;
};

int load_config(const std::string& path, const Overrides& ov,
                aoisim::ExperimentConfig& exp) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config file: " << path << "\n";
    return kExitConfig;
  }
  std::stringstream buf;
  buf << in.rdbuf();

  std::vector<aoisim::ConfigError> errors;
  if (!aoisim::parse_experiment_config(buf.str(), exp, errors)) {
    for (const auto& e : errors) {
      std::cerr << path << ":";
      if (e.line > 0) std::cerr << e.line << ":";
      std::cerr << " ";
      if (!e.path.empty()) std::cerr << e.path << ": ";
      std::cerr << e.message << "\n";
    }
    return kExitConfig;
  }

  if (!ov.policies.empty()) {
    exp.channel_policies.clear();
    for (const auto& name : ov.policies) {
      if (!aoisim::channel_policy_known(name)) {
        std::cerr << "error: unknown channel policy '" << name << "'\n";
        return kExitConfig;
      }
      aoisim::ChannelPolicySpec spec;
      spec.name = name;
      exp.channel_policies.push_back(spec);
    }
  }
  if (ov.seed >= 0) exp.network.base_seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.replications > 0) exp.network.replications = ov.replications;
  if (ov.horizon > 0) exp.network.horizon = ov.horizon;
  if (ov.lambda >= 0.0) exp.network.arrival_rate = ov.lambda;
  if (!ov.out.empty()) exp.output_dir = ov.out;
  if (ov.threads > 0) exp.threads = ov.threads;
  if (!ov.mode.empty()) {
    exp.mode = ov.mode == "mirrored" ? aoisim::RunMode::mirrored_genie
                                     : aoisim::RunMode::independent_genie;
  }
  if (ov.trace) exp.dump_trace = true;

  const auto problems = aoisim::validate(exp.network);
  if (!problems.empty()) {
    for (const auto& p : problems) std::cerr << "error: network: " << p << "\n";
    return kExitConfig;
  }
  return 0;
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  aoisim::ExperimentConfig exp;
  if (int rc = load_config(config_path, ov, exp); rc != 0) return rc;

  std::error_code ec;
  std::filesystem::create_directories(exp.output_dir, ec);
  {
    // fail early if the directory cannot hold artifacts
    const auto probe = std::filesystem::path(exp.output_dir) / "manifest.json";
    std::ofstream test(probe, std::ios::app);
    if (ec || !test) {
      std::cerr << "error: output directory is not writable: "
                << exp.output_dir << "\n";
      return kExitOutput;
    }
  }

  try {
    int last_pct = -1;
    auto progress = [&](int done, int total) {
      const int pct = 100 * done / total;
      if (pct / 5 != last_pct / 5) {
        last_pct = pct;
        std::cerr << "\r" << pct << "% (" << done << "/" << total << ")"
                  << std::flush;
      }
    };
    const auto t0 = std::chrono::steady_clock::now();
    std::cerr << exp.channel_policies.size() << " channel policies, "
              << exp.network.replications << " replications x "
              << exp.network.horizon << " slots each\n";
    std::vector<aoisim::MetricsRecord> records =
        aoisim::run_experiment(exp, progress);
    std::cerr << "\n";
    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    std::cerr << "done in " << elapsed << "s\n";

    nlohmann::ordered_json summary;
    summary["output_dir"] = exp.output_dir;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : records) {
      rows.push_back({{"policy", r.policy.name},
                      {"regret_at_horizon", r.regret_mean.back()},
                      {"regret_stderr", r.regret_stderr.back()},
                      {"k_at_horizon", r.k_mean.back()}});
    }
    summary["policies"] = std::move(rows);
    std::cout << summary.dump(2) << "\n";
  } catch (const aoisim::replication_failure& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const aoisim::invariant_violation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOutput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}

int cmd_bounds(const std::string& config_path, const Overrides& ov) {
  aoisim::ExperimentConfig exp;
  if (int rc = load_config(config_path, ov, exp); rc != 0) return rc;

  const aoisim::BoundInputs inputs = aoisim::bound_inputs(exp.network);
  const int star = exp.network.best_channel();

  nlohmann::ordered_json j;
  j["n_star"] = star + 1;
  j["mu_star"] = exp.network.best_reliability();
  j["delta_min"] = inputs.gaps.empty() ? 0.0 : inputs.min_gap;
  const std::vector<std::int64_t> ps = {1, 10, 100, 1000, 10000};
  auto channels = nlohmann::ordered_json::array();
  for (int n = 0; n < exp.network.num_channels; ++n) {
    if (n == star) continue;
    nlohmann::ordered_json row;
    row["channel"] = n + 1;
    row["delta"] = exp.network.gap(n);
    nlohmann::ordered_json table;
    for (auto p : ps) {
      table[std::to_string(p)] = aoisim::hoeffding_bound(
          p, exp.network.num_channels, exp.network.gap(n));
    }
    row["bound_by_period"] = std::move(table);
    channels.push_back(std::move(row));
  }
  j["channels"] = std::move(channels);
  j["cp_constant"] = inputs.gaps.empty() ? 0.0 : aoisim::cp_constant(inputs);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_validate(const std::string& config_path, const Overrides& ov) {
  aoisim::ExperimentConfig exp;
  if (int rc = load_config(config_path, ov, exp); rc != 0) return rc;
  std::cerr << "config ok: " << exp.channel_policies.size()
            << " channel policies, " << exp.network.replications
            << " replications x " << exp.network.horizon << " slots\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-time AoI scheduling simulator with bandit channel policies"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file (JSON)")
        ->required();
    sub->add_option("--policy", ov.policies,
                    "channel policy override (repeatable)");
    sub->add_option("--seed", ov.seed, "base seed override");
    sub->add_option("--replications", ov.replications,
                    "replication count override");
    sub->add_option("--horizon", ov.horizon, "horizon override (slots)");
    sub->add_option("--lambda", ov.lambda, "arrival rate override");
    sub->add_option("--out", ov.out, "output directory override");
    sub->add_option("--threads", ov.threads, "worker thread count");
    sub->add_option("--mode", ov.mode, "genie mode: independent | mirrored")
        ->check(CLI::IsMember({"independent", "mirrored"}));
    sub->add_flag("--trace", ov.trace,
                  "dump per-slot records of the first replication");
  };

  auto* run = app.add_subcommand("run", "run the experiment and write artifacts");
  add_common(run);
  auto* bounds =
      app.add_subcommand("bounds", "evaluate the closed-form bound expressions");
  add_common(bounds);
  auto* validate =
      app.add_subcommand("validate", "parse and check a config, no simulation");
  add_common(validate);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, ov);
  if (bounds->parsed()) return cmd_bounds(config_path, ov);
  return cmd_validate(config_path, ov);
}
