// Copyright (c) The Heatsim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "heatsim/cluster.hpp"
#include "heatsim/error.hpp"
#include "heatsim/predictor.hpp"
#include "heatsim/scheduler.hpp"
#include "heatsim/sim.hpp"
#include "heatsim/trace.hpp"
#include "heatsim/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Configuration and parameter problems exit with 2, runtime failures with 1.
const std::set<std::string>& usage_error_codes() {
  static const std::set<std::string> codes = {
      "UnevenBursts",    "EmptyProbeGrid", "InvalidParams",      "FileNotFound",
      "ParseError",      "InvalidCluster", "InvalidWeights",     "InvalidMachineSpec",
      "InvalidNoise",    "ConfigError",    "InvalidTask",        "InvalidPeriod"};
  return codes;
}

std::string out_path(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return (fs::path(out_dir) / name).string();
}

std::vector<heatsim::ProbeGridPoint> load_grid(const std::string& path) {
  const json j = json::parse(heatsim::read_file(path));
  std::vector<heatsim::ProbeGridPoint> grid;
  for (const auto& jp : j) {
    grid.push_back({jp.at("cpu_req").get<double>(), jp.at("mem_req_mib").get<std::int64_t>(),
                    jp.at("iterations").get<std::int64_t>()});
  }
  return grid;
}

struct PolicyFile {
  heatsim::PolicyConfig policy;
  std::vector<heatsim::ForcedMigration> forced_migrations;
};

PolicyFile load_policy(const std::string& path) {
  const std::string text = heatsim::read_file(path);
  PolicyFile out;
  out.policy = heatsim::policy_from_json_text(text);
  const json j = json::parse(text);
  if (j.contains("forced_migrations")) {
    for (const auto& jm : j.at("forced_migrations")) {
      out.forced_migrations.push_back({jm.at("time_s").get<double>(),
                                       jm.at("task_id").get<std::string>(),
                                       jm.at("to_node").get<std::string>()});
    }
  }
  return out;
}

void write_sim_outputs(const std::string& out_dir, const heatsim::SimReport& report) {
  heatsim::write_file(out_path(out_dir, "report.json"), heatsim::report_to_json_text(report));
  heatsim::write_file(out_path(out_dir, "decisions.csv"),
                      heatsim::decisions_to_csv(report.decisions));
  heatsim::write_file(out_path(out_dir, "utilization.csv"), heatsim::utilization_to_csv(report));
  heatsim::write_file(out_path(out_dir, "percentiles.csv"), heatsim::percentiles_to_csv(report));
}

// --- sweep ------------------------------------------------------------------

struct SweepScheduler {
  heatsim::PolicyConfig policy;
  bool has_h = true;
  bool explicit_interval = false;  // entry carries its own reschedule_interval_s
};

struct ExperimentConfig {
  std::string cluster_path;
  bool synthetic = true;
  heatsim::SyntheticParams synthetic_params;
  std::string tasks_csv;
  std::vector<SweepScheduler> schedulers;
  std::vector<std::uint64_t> seeds = {42};
  double noise_sd_rel = 0.0;
  std::vector<heatsim::ProbeGridPoint> grid;
  double learning_period_s = 86400.0;
  double reschedule_interval_s = 60.0;
};

std::vector<SweepScheduler> default_sweep_schedulers() {
  std::vector<SweepScheduler> out;
  for (int i = 0; i <= 5; ++i) {
    const double h = double(i) / 5.0;  // 0, 0.2, ..., 1
    heatsim::PolicyConfig policy;
    policy.kind = heatsim::PolicyKind::Heats;
    policy.h_value = h;
    policy.label = "h" + heatsim::format_double(h);
    out.push_back({policy, true});
  }
  heatsim::PolicyConfig rand_policy;
  rand_policy.kind = heatsim::PolicyKind::Heats;
  rand_policy.h_value = 0.618;  // e = 0.618, p = 0.382
  rand_policy.label = "rand";
  out.push_back({rand_policy, true});
  heatsim::PolicyConfig k8s;
  k8s.kind = heatsim::PolicyKind::K8sBaseline;
  k8s.label = "k8s";
  out.push_back({k8s, false});
  return out;
}

ExperimentConfig load_experiment(const std::string& path) {
  json j;
  try {
    j = json::parse(heatsim::read_file(path));
  } catch (const json::exception& e) {
    throw heatsim::Error("ParseError", std::string("experiment config: ") + e.what());
  }
  ExperimentConfig config;
  try {
    config.cluster_path = j.at("cluster").get<std::string>();
    if (j.contains("reschedule_interval_s")) {
      config.reschedule_interval_s = j.at("reschedule_interval_s").get<double>();
    }
    if (j.contains("learning_period_s")) {
      config.learning_period_s = j.at("learning_period_s").get<double>();
    }
    if (j.contains("seeds")) config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("trace")) {
      const json& jt = j.at("trace");
      if (jt.contains("tasks_csv")) {
        config.synthetic = false;
        config.tasks_csv = jt.at("tasks_csv").get<std::string>();
      } else if (jt.contains("synthetic")) {
        const json& js = jt.at("synthetic");
        auto& p = config.synthetic_params;
        p.n_jobs = js.value("n_jobs", p.n_jobs);
        p.bursts = js.value("bursts", p.bursts);
        p.horizon_s = js.value("horizon_s", p.horizon_s);
        p.burst_window_s = js.value("burst_window_s", p.burst_window_s);
        p.iter_min = js.value("iter_min", p.iter_min);
        p.iter_max = js.value("iter_max", p.iter_max);
        p.cpu_req = js.value("cpu_req", p.cpu_req);
        p.mem_req_mib = js.value("mem_req_mib", p.mem_req_mib);
      }
    }
    if (j.contains("probe")) {
      config.noise_sd_rel = j.at("probe").value("noise_sd_rel", 0.0);
      if (j.at("probe").contains("grid")) {
        for (const auto& jp : j.at("probe").at("grid")) {
          config.grid.push_back({jp.at("cpu_req").get<double>(),
                                 jp.at("mem_req_mib").get<std::int64_t>(),
                                 jp.at("iterations").get<std::int64_t>()});
        }
      }
    }
    if (j.contains("schedulers")) {
      for (const auto& js : j.at("schedulers")) {
        SweepScheduler s;
        s.policy = heatsim::policy_from_json_text(js.dump());
        s.has_h = s.policy.kind == heatsim::PolicyKind::Heats;
        s.explicit_interval = js.contains("reschedule_interval_s");
        config.schedulers.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw heatsim::Error("ParseError", std::string("experiment config: ") + e.what());
  }
  if (config.schedulers.empty()) config.schedulers = default_sweep_schedulers();
  if (config.grid.empty()) config.grid = heatsim::default_probe_grid();
  return config;
}

struct SweepRow {
  std::string scheduler;
  bool has_h = false;
  double h_value = 0.0;
  std::uint64_t seed = 0;
  heatsim::SimReport report;
};

int run_sweep(const std::string& config_path, const std::string& out_dir, int parallel) {
  const ExperimentConfig config = load_experiment(config_path);
  const heatsim::Cluster cluster = heatsim::load_cluster(config.cluster_path);

  struct PerSeed {
    std::vector<heatsim::Task> trace;
    heatsim::PredictorSet predictors;
  };
  std::vector<PerSeed> per_seed(config.seeds.size());
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const std::uint64_t seed = config.seeds[i];
    per_seed[i].trace = config.synthetic
                            ? heatsim::generate_synthetic(seed, config.synthetic_params)
                            : heatsim::tasks_from_csv(heatsim::read_file(config.tasks_csv));
    auto samples = heatsim::run_probing(cluster, config.grid, config.noise_sd_rel, seed);
    per_seed[i].predictors = heatsim::train_predictors(cluster, std::move(samples));
  }

  std::vector<SweepRow> rows(config.seeds.size() * config.schedulers.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t job = cursor.fetch_add(1);
      if (job >= rows.size()) return;
      const std::size_t seed_index = job / config.schedulers.size();
      const std::size_t sched_index = job % config.schedulers.size();
      const SweepScheduler& scheduler = config.schedulers[sched_index];

      heatsim::SimOptions options;
      options.policy = scheduler.policy;
      if (!scheduler.explicit_interval) {
        options.policy.reschedule_interval_s = config.reschedule_interval_s;
      }
      options.seed = config.seeds[seed_index];
      SweepRow& row = rows[job];
      row.scheduler = scheduler.policy.label;
      row.has_h = scheduler.has_h;
      row.h_value = scheduler.policy.h_value;
      row.seed = config.seeds[seed_index];
      row.report = heatsim::run(cluster, per_seed[seed_index].trace,
                                &per_seed[seed_index].predictors, options);
    }
  };

  const int threads = std::max(1, parallel);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string csv =
      "scheduler,h_value,seed,makespan_s,cluster_energy_kj,task_energy_kj,migrations\n";
  for (const auto& row : rows) {
    csv += row.scheduler;
    csv += ',';
    if (row.has_h) csv += heatsim::format_double(row.h_value);
    csv += ',';
    csv += std::to_string(row.seed);
    csv += ',';
    csv += heatsim::format_double(row.report.makespan_s);
    csv += ',';
    csv += heatsim::format_double(row.report.cluster_energy_kj);
    csv += ',';
    csv += heatsim::format_double(row.report.task_energy_kj);
    csv += ',';
    csv += std::to_string(row.report.migration_count);
    csv += '\n';
  }
  heatsim::write_file(out_path(out_dir, "summary.csv"), csv);
  std::cout << "wrote " << (fs::path(out_dir) / "summary.csv").string() << " (" << rows.size()
            << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace-driven simulator for energy- and heterogeneity-aware task scheduling"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags (--out, --seed, --parallel) after the subcommand

  std::string out_dir = ".";
  std::uint64_t seed = 42;
  int parallel = 1;
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Deterministic RNG seed")->capture_default_str();
  app.add_option("--parallel", parallel, "Worker threads for sweeps")->capture_default_str();

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "Generate the synthetic burst workload");
  heatsim::SyntheticParams synth;
  gen->add_option("--jobs", synth.n_jobs, "Total jobs")->capture_default_str();
  gen->add_option("--bursts", synth.bursts, "Burst count")->capture_default_str();
  gen->add_option("--horizon-s", synth.horizon_s, "Arrival horizon")->capture_default_str();
  gen->add_option("--burst-window-s", synth.burst_window_s, "Burst spread")->capture_default_str();
  gen->add_option("--iter-min", synth.iter_min, "Minimum iterations")->capture_default_str();
  gen->add_option("--iter-max", synth.iter_max, "Maximum iterations")->capture_default_str();
  gen->add_option("--cpu-req", synth.cpu_req, "Cores per task")->capture_default_str();
  gen->add_option("--mem-req-mib", synth.mem_req_mib, "Memory per task")->capture_default_str();

  // sample-trace
  auto* sample = app.add_subcommand("sample-trace", "Window, filter, map and fold a raw trace");
  std::string sample_in, sample_cluster, type_map_path;
  double offset_s = 0.0;
  double duration_s = std::numeric_limits<double>::infinity();
  int top_k = 10;
  bool skip_machine_steps = false;
  std::int64_t default_iterations = 750;
  sample->add_option("--in", sample_in, "Raw trace events CSV")->required();
  sample->add_option("--cluster", sample_cluster, "Testbed cluster JSON")->required();
  sample->add_option("--offset-s", offset_s, "Window offset")->capture_default_str();
  sample->add_option("--duration-s", duration_s, "Window duration");
  sample->add_option("--top-k", top_k, "User filter size")->capture_default_str();
  sample->add_option("--type-map", type_map_path, "Machine type map JSON (default identity)");
  sample->add_flag("--skip-machine-steps", skip_machine_steps,
                   "Skip machine eligibility/mapping/folding (traces without machine info)");
  sample->add_option("--default-iterations", default_iterations,
                     "Iterations when no finish event exists")->capture_default_str();

  // probe-fit
  auto* probe = app.add_subcommand("probe-fit", "Run probing and fit the regression models");
  std::string probe_cluster, grid_path;
  double noise_sd_rel = 0.0;
  double matmul_scale = 1.7;
  probe->add_option("--cluster", probe_cluster, "Cluster JSON")->required();
  probe->add_option("--noise", noise_sd_rel, "Relative noise std dev")->capture_default_str();
  probe->add_option("--grid", grid_path, "Probe grid JSON (default built-in)");
  probe->add_option("--matmul-scale", matmul_scale, "Matmul work-unit scale")
      ->capture_default_str();

  // sim
  auto* sim = app.add_subcommand("sim", "Run one trace under one scheduling policy");
  std::string sim_cluster, sim_trace, sim_policy, sim_models;
  sim->add_option("--cluster", sim_cluster, "Cluster JSON")->required();
  sim->add_option("--trace", sim_trace, "Task CSV")->required();
  sim->add_option("--policy", sim_policy, "Policy JSON")->required();
  sim->add_option("--models", sim_models, "Trained models JSON (required for heats)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run the configured scheduler comparison");
  std::string config_path;
  sweep->add_option("--config", config_path, "Experiment config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto tasks = heatsim::generate_synthetic(seed, synth);
      heatsim::write_file(out_path(out_dir, "trace.csv"), heatsim::tasks_to_csv(tasks));
      std::cout << "wrote " << (fs::path(out_dir) / "trace.csv").string() << " ("
                << tasks.size() << " tasks)\n";
    } else if (sample->parsed()) {
      const auto raw = heatsim::trace_events_from_csv(heatsim::read_file(sample_in));
      const auto cluster = heatsim::load_cluster(sample_cluster);
      heatsim::SampleOptions options;
      options.offset_s = offset_s;
      options.duration_s = duration_s;
      options.top_k = top_k;
      options.skip_machine_steps = skip_machine_steps;
      options.defaults.default_iterations = default_iterations;
      if (!type_map_path.empty()) {
        const json jm = json::parse(heatsim::read_file(type_map_path));
        for (const auto& [from, to] : jm.items()) {
          options.type_map[from] = to.get<std::string>();
        }
      }
      const auto result = heatsim::run_sample_pipeline(raw, options, cluster);
      heatsim::write_file(out_path(out_dir, "sampled_events.csv"),
                          heatsim::trace_events_to_csv(result.events));
      heatsim::write_file(out_path(out_dir, "tasks.csv"), heatsim::tasks_to_csv(result.tasks));
      if (!skip_machine_steps) {
        json jmap = json::object();
        for (const auto& [machine, node] : result.machine_map) jmap[machine] = node;
        heatsim::write_file(out_path(out_dir, "machine_map.json"), jmap.dump(2) + "\n");
      }
      std::cout << "sampled " << result.events.size() << " events, " << result.tasks.size()
                << " tasks\n";
    } else if (probe->parsed()) {
      const auto cluster = heatsim::load_cluster(probe_cluster);
      const auto grid =
          grid_path.empty() ? heatsim::default_probe_grid() : load_grid(grid_path);
      auto samples = heatsim::run_probing(cluster, grid, noise_sd_rel, seed, matmul_scale);
      heatsim::write_file(out_path(out_dir, "probe_samples.csv"),
                          heatsim::probe_samples_to_csv(samples));
      const auto predictors = heatsim::train_predictors(cluster, std::move(samples));
      heatsim::write_file(out_path(out_dir, "models.json"),
                          heatsim::predictors_to_json_text(predictors));
      const std::vector<heatsim::ProbeGridPoint> heldout = {{1.5, 384, 400}, {1.5, 384, 800}};
      const auto validation = heatsim::validate_predictors(cluster, predictors, heldout);
      std::cout << "held-out max relative error: runtime "
                << heatsim::format_double(validation.max_rel_runtime_err) << ", energy "
                << heatsim::format_double(validation.max_rel_energy_err) << "\n";
    } else if (sim->parsed()) {
      const auto cluster = heatsim::load_cluster(sim_cluster);
      const auto trace = heatsim::tasks_from_csv(heatsim::read_file(sim_trace));
      const PolicyFile policy_file = load_policy(sim_policy);
      heatsim::PredictorSet predictors;
      const bool heats = policy_file.policy.kind == heatsim::PolicyKind::Heats;
      if (heats) {
        if (sim_models.empty()) {
          throw heatsim::Error("ConfigError", "heats policy requires --models");
        }
        predictors = heatsim::predictors_from_json_text(heatsim::read_file(sim_models));
      }
      heatsim::SimOptions options;
      options.policy = policy_file.policy;
      options.forced_migrations = policy_file.forced_migrations;
      options.seed = seed;
      const auto report =
          heatsim::run(cluster, trace, heats ? &predictors : nullptr, options);
      write_sim_outputs(out_dir, report);
      std::cout << "makespan_s=" << heatsim::format_double(report.makespan_s)
                << " cluster_energy_kj=" << heatsim::format_double(report.cluster_energy_kj)
                << " task_energy_kj=" << heatsim::format_double(report.task_energy_kj)
                << " migrations=" << report.migration_count << "\n";
    } else if (sweep->parsed()) {
      return run_sweep(config_path, out_dir, parallel);
    }
  } catch (const heatsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage_error_codes().count(e.code()) > 0 ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
