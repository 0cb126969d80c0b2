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

#ifndef HEATSIM_SIM_HPP_
#define HEATSIM_SIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "heatsim/cluster.hpp"
#include "heatsim/predictor.hpp"
#include "heatsim/scheduler.hpp"

namespace heatsim {

struct MigrationRecord {
  double time_s = 0.0;
  std::string task_id;
  std::string from_node;
  std::string to_node;
};

struct UtilizationSample {
  double time_s = 0.0;
  std::string node_id;
  double cpu_frac = 0.0;
  double mem_frac = 0.0;
};

// {p0,p25,p50,p75,p100} of a per-node fraction across the cluster at one tick.
struct PercentileBand {
  double time_s = 0.0;
  std::string metric;  // "cpu" or "mem"
  double p0 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p100 = 0.0;
};

struct SimReport {
  double makespan_s = 0.0;
  double cluster_energy_kj = 0.0;  // idle-inclusive
  double task_energy_kj = 0.0;     // idle-excluded sum over tasks
  int migration_count = 0;
  std::vector<MigrationRecord> migrations;
  std::vector<UtilizationSample> utilization_series;
  std::vector<PercentileBand> percentile_bands;
  std::vector<SchedulingDecision> decisions;
  // Per-task results, keyed by task_id (in-memory only; report.json carries
  // the scalars and the migration log).
  std::map<std::string, double> task_finish_s;
  std::map<std::string, double> task_energy_j;
};

// Engine-level migration directive, applied regardless of policy; used to
// drive controlled migration scenarios. A directive whose destination lacks
// capacity is rejected and the task stays on its source.
struct ForcedMigration {
  double time_s = 0.0;
  std::string task_id;
  std::string to_node;
};

struct SimOptions {
  PolicyConfig policy;
  std::vector<ForcedMigration> forced_migrations;
  std::uint64_t seed = 0;
  double monitor_interval_s = 1.0;
  // Re-checks capacity and task-count conservation after every event.
  bool validate_each_event = true;
};

// Deterministic discrete-event run: identical inputs produce identical
// reports. Tasks arrive at submit_time_s, are placed by the policy, progress
// under the MachineSpec ground truth, and may migrate (progress preserved).
// Energy is integrated in closed form; cluster energy = sum of node idle
// power over the makespan plus the task-attributed sum.
SimReport run(const Cluster& cluster, std::vector<Task> trace, const PredictorSet* predictors,
              const SimOptions& options);

// Advances a running task by dt_s of wall time on the given machine:
// progress dt/per_iteration work units (capped at completion), energy
// active_power * active time.
void advance_task(Task& task, const MachineSpec& spec, GovernorMode governor, double dt_s);

// Exact energy of piecewise-constant power segments (power_w, duration_s).
// Throws Error("InvalidTimeline") on a negative duration.
double integrate_energy(const std::vector<std::pair<double, double>>& segments);

std::string report_to_json_text(const SimReport& report);
std::string utilization_to_csv(const SimReport& report);
std::string percentiles_to_csv(const SimReport& report);

}  // namespace heatsim

#endif  // HEATSIM_SIM_HPP_
