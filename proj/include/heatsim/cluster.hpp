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

#ifndef HEATSIM_CLUSTER_HPP_
#define HEATSIM_CLUSTER_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace heatsim {

// CPU frequency-scaling policy of a node. Powersave pins the minimum
// frequency, Performance the maximum; these are the only two modes.
enum class GovernorMode { Powersave, Performance };

const char* to_string(GovernorMode governor);
GovernorMode governor_from_string(const std::string& name);

// Pair of per-governor values (seconds per work unit, watts, ...).
struct PerGovernor {
  double powersave = 0.0;
  double performance = 0.0;

  double operator[](GovernorMode g) const {
    return g == GovernorMode::Powersave ? powersave : performance;
  }
  double& operator[](GovernorMode g) {
    return g == GovernorMode::Powersave ? powersave : performance;
  }
};

// Hardware description of one machine type. per_iteration_s and
// active_power_w are the ground-truth behavior of a task on this type:
// a task of N work units runs for N * per_iteration_s[g] seconds and
// draws active_power_w[g] watts while running (idle draw excluded).
struct MachineSpec {
  std::string type_id;
  std::string arch;
  int cores = 0;
  double frequency_ghz = 0.0;
  double tdp_w = 0.0;
  std::int64_t mem_mib = 0;
  double idle_power_w = 0.0;
  PerGovernor per_iteration_s;
  PerGovernor active_power_w;

  double runtime_s(GovernorMode g, double iterations) const {
    return iterations * per_iteration_s[g];
  }
  double task_power_w(GovernorMode g) const { return active_power_w[g]; }
  double task_energy_j(GovernorMode g, double iterations) const {
    return task_power_w(g) * runtime_s(g, iterations);
  }

  // Throws Error("InvalidMachineSpec") when a field or the governor
  // ordering constraints are violated (powersave never faster, never
  // hungrier, active power within TDP).
  void validate() const;
};

// Energy/performance trade-off weights. e_w + p_w == 1 within 1e-9.
struct TradeoffWeights {
  double e_w = 0.5;
  double p_w = 0.5;

  // H in [0,1]: e_w = H, p_w = 1 - H. H = 1 is the most energy-efficient.
  static TradeoffWeights from_h(double h);

  void validate() const;
};

enum class TaskState { Pending, Running, Finished };

const char* to_string(TaskState state);

struct Task {
  std::string task_id;
  std::string user_id;
  double submit_time_s = 0.0;
  double cpu_req = 0.0;
  std::int64_t mem_req_mib = 0;
  std::int64_t iterations_total = 0;
  // Fractional work units are carried exactly across migrations; the value
  // equals iterations_total exactly once the task finishes.
  double iterations_done = 0.0;
  TradeoffWeights weights;
  TaskState state = TaskState::Pending;
  std::optional<std::string> current_node;
  double energy_j = 0.0;  // task-attributed, idle-excluded

  void validate() const;
};

// Live node instance. Allocation counters track *requested* resources of
// the tasks in running_tasks; they never exceed the spec capacity.
struct Node {
  std::string node_id;
  std::string type_id;
  std::size_t spec_index = 0;  // resolved against Cluster::specs on load
  GovernorMode governor = GovernorMode::Performance;
  double allocated_cores = 0.0;
  std::int64_t allocated_mem_mib = 0;
  std::set<std::string> running_tasks;
};

std::pair<double, std::int64_t> free_resources(const MachineSpec& spec, const Node& node);

// true iff free cores >= cpu_req and free memory >= mem_req (boundary inclusive).
bool fits(const MachineSpec& spec, const Node& node, const Task& task);

struct Cluster {
  std::vector<MachineSpec> specs;
  std::vector<Node> nodes;

  const MachineSpec& spec_of(const Node& node) const { return specs[node.spec_index]; }
  const MachineSpec& spec_of(std::size_t node_index) const {
    return specs[nodes[node_index].spec_index];
  }
  const MachineSpec* find_spec(const std::string& type_id) const;
  std::optional<std::size_t> find_node(const std::string& node_id) const;

  std::pair<double, std::int64_t> free_resources(std::size_t node_index) const;
  bool fits(std::size_t node_index, const Task& task) const;

  // Allocation bookkeeping; throws Error("CapacityExceeded") rather than
  // letting a node go over capacity, and Error("UnknownTask") on a
  // release/allocate mismatch.
  void allocate(std::size_t node_index, const Task& task);
  void release(std::size_t node_index, const Task& task);

  // Structural validation: spec references resolve, ids unique, counters in range.
  void validate() const;
};

// Cluster configuration file (JSON: machine_specs array + nodes array).
Cluster load_cluster(const std::string& path);
Cluster cluster_from_json_text(const std::string& text);
std::string cluster_to_json_text(const Cluster& cluster);

// Default eight-worker heterogeneous cluster (1 AMD, 3 Intel, 4 ARM).
Cluster default_cluster();

}  // namespace heatsim

#endif  // HEATSIM_CLUSTER_HPP_
