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

#include "heatsim/cluster.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "heatsim/error.hpp"
#include "heatsim/util.hpp"

namespace heatsim {

using nlohmann::json;

const char* to_string(GovernorMode governor) {
  return governor == GovernorMode::Powersave ? "powersave" : "performance";
}

GovernorMode governor_from_string(const std::string& name) {
  if (name == "powersave") return GovernorMode::Powersave;
  if (name == "performance") return GovernorMode::Performance;
  throw Error("ParseError", "unknown governor '" + name + "'");
}

const char* to_string(TaskState state) {
  switch (state) {
    case TaskState::Pending: return "pending";
    case TaskState::Running: return "running";
    case TaskState::Finished: return "finished";
  }
  return "?";
}

void MachineSpec::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error("InvalidMachineSpec", type_id + ": " + why);
  };
  if (type_id.empty()) fail("empty type_id");
  if (cores <= 0) fail("cores must be positive");
  if (frequency_ghz <= 0) fail("frequency_ghz must be positive");
  if (tdp_w <= 0) fail("tdp_w must be positive");
  if (mem_mib <= 0) fail("mem_mib must be positive");
  if (idle_power_w < 0) fail("idle_power_w must be non-negative");
  if (per_iteration_s.powersave <= 0 || per_iteration_s.performance <= 0) {
    fail("per_iteration_s entries must be positive");
  }
  if (active_power_w.powersave <= 0 || active_power_w.performance <= 0) {
    fail("active_power_w entries must be positive");
  }
  // Powersave runs at minimum frequency: never faster, never hungrier.
  if (per_iteration_s.powersave < per_iteration_s.performance) {
    fail("powersave cannot be faster than performance");
  }
  if (active_power_w.powersave > active_power_w.performance) {
    fail("powersave cannot draw more than performance");
  }
  if (active_power_w.powersave > tdp_w || active_power_w.performance > tdp_w) {
    fail("active power exceeds TDP");
  }
}

TradeoffWeights TradeoffWeights::from_h(double h) {
  if (h < 0.0 || h > 1.0) {
    throw Error("InvalidWeights", "H must lie in [0,1], got " + format_double(h));
  }
  TradeoffWeights w;
  w.e_w = h;
  w.p_w = 1.0 - h;
  return w;
}

void TradeoffWeights::validate() const {
  if (e_w < 0.0 || e_w > 1.0 || p_w < 0.0 || p_w > 1.0 ||
      std::abs(e_w + p_w - 1.0) > 1e-9) {
    throw Error("InvalidWeights",
                "e_w=" + format_double(e_w) + " p_w=" + format_double(p_w));
  }
}

void Task::validate() const {
  auto fail = [&](const std::string& why) { throw Error("InvalidTask", task_id + ": " + why); };
  if (task_id.empty()) fail("empty task_id");
  if (submit_time_s < 0) fail("negative submit time");
  if (cpu_req <= 0) fail("cpu_req must be positive");
  if (mem_req_mib <= 0) fail("mem_req_mib must be positive");
  if (iterations_total <= 0) fail("iterations_total must be positive");
  if (iterations_done < 0 || iterations_done > double(iterations_total)) {
    fail("iterations_done out of range");
  }
  weights.validate();
  const bool done = iterations_done == double(iterations_total);
  if ((state == TaskState::Finished) != done) fail("state/progress mismatch");
  if (state == TaskState::Running && !current_node) fail("running without node");
  if (state == TaskState::Pending && current_node) fail("pending with node");
  if (energy_j < 0) fail("negative energy");
}

std::pair<double, std::int64_t> free_resources(const MachineSpec& spec, const Node& node) {
  return {spec.cores - node.allocated_cores, spec.mem_mib - node.allocated_mem_mib};
}

bool fits(const MachineSpec& spec, const Node& node, const Task& task) {
  const auto [cores, mem] = free_resources(spec, node);
  return cores >= task.cpu_req && mem >= task.mem_req_mib;
}

const MachineSpec* Cluster::find_spec(const std::string& type_id) const {
  for (const auto& s : specs) {
    if (s.type_id == type_id) return &s;
  }
  return nullptr;
}

std::optional<std::size_t> Cluster::find_node(const std::string& node_id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].node_id == node_id) return i;
  }
  return std::nullopt;
}

std::pair<double, std::int64_t> Cluster::free_resources(std::size_t node_index) const {
  return heatsim::free_resources(spec_of(node_index), nodes[node_index]);
}

bool Cluster::fits(std::size_t node_index, const Task& task) const {
  return heatsim::fits(spec_of(node_index), nodes[node_index], task);
}

void Cluster::allocate(std::size_t node_index, const Task& task) {
  Node& node = nodes[node_index];
  const MachineSpec& spec = spec_of(node);
  if (!heatsim::fits(spec, node, task)) {
    throw Error("CapacityExceeded", node.node_id + " cannot host " + task.task_id);
  }
  node.allocated_cores += task.cpu_req;
  node.allocated_mem_mib += task.mem_req_mib;
  node.running_tasks.insert(task.task_id);
}

void Cluster::release(std::size_t node_index, const Task& task) {
  Node& node = nodes[node_index];
  if (node.running_tasks.erase(task.task_id) == 0) {
    throw Error("UnknownTask", task.task_id + " not running on " + node.node_id);
  }
  node.allocated_cores -= task.cpu_req;
  node.allocated_mem_mib -= task.mem_req_mib;
  if (node.allocated_cores < 0 && node.allocated_cores > -1e-9) node.allocated_cores = 0;
  if (node.allocated_cores < 0 || node.allocated_mem_mib < 0) {
    throw Error("CapacityExceeded", node.node_id + ": allocation went negative");
  }
}

void Cluster::validate() const {
  std::unordered_set<std::string> type_ids;
  for (const auto& spec : specs) {
    spec.validate();
    if (!type_ids.insert(spec.type_id).second) {
      throw Error("InvalidCluster", "duplicate machine type " + spec.type_id);
    }
  }
  std::unordered_set<std::string> node_ids;
  for (const auto& node : nodes) {
    if (node.node_id.empty()) throw Error("InvalidCluster", "empty node_id");
    if (!node_ids.insert(node.node_id).second) {
      throw Error("InvalidCluster", "duplicate node " + node.node_id);
    }
    if (node.spec_index >= specs.size() || specs[node.spec_index].type_id != node.type_id) {
      throw Error("InvalidCluster", node.node_id + ": unresolved type " + node.type_id);
    }
    const MachineSpec& spec = specs[node.spec_index];
    if (node.allocated_cores < -1e-9 || node.allocated_cores > spec.cores + 1e-9 ||
        node.allocated_mem_mib < 0 || node.allocated_mem_mib > spec.mem_mib) {
      throw Error("CapacityExceeded", node.node_id);
    }
  }
}

namespace {

json per_governor_to_json(const PerGovernor& pg) {
  return json{{"powersave", pg.powersave}, {"performance", pg.performance}};
}

PerGovernor per_governor_from_json(const json& j) {
  PerGovernor pg;
  pg.powersave = j.at("powersave").get<double>();
  pg.performance = j.at("performance").get<double>();
  return pg;
}

}  // namespace

Cluster cluster_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("ParseError", std::string("cluster config: ") + e.what());
  }
  Cluster cluster;
  try {
    for (const auto& js : j.at("machine_specs")) {
      MachineSpec spec;
      spec.type_id = js.at("type_id").get<std::string>();
      spec.arch = js.value("arch", std::string());
      spec.cores = js.at("cores").get<int>();
      spec.frequency_ghz = js.at("frequency_ghz").get<double>();
      spec.tdp_w = js.at("tdp_w").get<double>();
      spec.mem_mib = js.at("mem_mib").get<std::int64_t>();
      spec.idle_power_w = js.at("idle_power_w").get<double>();
      spec.per_iteration_s = per_governor_from_json(js.at("per_iteration_s"));
      spec.active_power_w = per_governor_from_json(js.at("active_power_w"));
      cluster.specs.push_back(std::move(spec));
    }
    for (const auto& jn : j.at("nodes")) {
      Node node;
      node.node_id = jn.at("node_id").get<std::string>();
      node.type_id = jn.at("type_id").get<std::string>();
      node.governor = governor_from_string(jn.value("governor", std::string("performance")));
      cluster.nodes.push_back(std::move(node));
    }
  } catch (const json::exception& e) {
    throw Error("ParseError", std::string("cluster config: ") + e.what());
  }
  for (auto& node : cluster.nodes) {
    bool found = false;
    for (std::size_t i = 0; i < cluster.specs.size(); ++i) {
      if (cluster.specs[i].type_id == node.type_id) {
        node.spec_index = i;
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error("InvalidCluster", node.node_id + ": unknown machine type " + node.type_id);
    }
  }
  cluster.validate();
  return cluster;
}

std::string cluster_to_json_text(const Cluster& cluster) {
  json specs = json::array();
  for (const auto& s : cluster.specs) {
    specs.push_back(json{{"type_id", s.type_id},
                         {"arch", s.arch},
                         {"cores", s.cores},
                         {"frequency_ghz", s.frequency_ghz},
                         {"tdp_w", s.tdp_w},
                         {"mem_mib", s.mem_mib},
                         {"idle_power_w", s.idle_power_w},
                         {"per_iteration_s", per_governor_to_json(s.per_iteration_s)},
                         {"active_power_w", per_governor_to_json(s.active_power_w)}});
  }
  json nodes = json::array();
  for (const auto& n : cluster.nodes) {
    nodes.push_back(json{{"node_id", n.node_id},
                         {"type_id", n.type_id},
                         {"governor", to_string(n.governor)}});
  }
  return json{{"machine_specs", specs}, {"nodes", nodes}}.dump(2) + "\n";
}

Cluster load_cluster(const std::string& path) {
  return cluster_from_json_text(read_file(path));
}

Cluster default_cluster() {
  // Timing/power behavior per type. The AMD and ARM active powers and the
  // ARM/AMD per-iteration ratio (571/650 per 0.1 of AMD) reproduce the
  // reference single-task migration scenario exactly; the remaining values
  // are documented defaults consistent with the TDP ordering of the
  // hardware table (idle draw: 35% of TDP for servers, 2.5 W for the board).
  Cluster cluster;

  MachineSpec arm;
  arm.type_id = "arm-cortex-a53";
  arm.arch = "arm";
  arm.cores = 4;
  arm.frequency_ghz = 1.4;
  arm.tdp_w = 5.0;
  arm.mem_mib = 1024;
  arm.idle_power_w = 2.5;
  arm.per_iteration_s = {0.14, 0.08784615384615385};  // 8.7846x the AMD rate
  arm.active_power_w = {0.52, 0.6882738140561944};

  MachineSpec amd;
  amd.type_id = "amd-epyc-7281";
  amd.arch = "amd64";
  amd.cores = 32;
  amd.frequency_ghz = 2.1;
  amd.tdp_w = 155.0;
  amd.mem_mib = 65536;
  amd.idle_power_w = 54.25;
  amd.per_iteration_s = {0.016, 0.01};
  amd.active_power_w = {9.8, 15.173913043478262};  // 1047 J over 69 s

  MachineSpec xeon_e3;
  xeon_e3.type_id = "intel-xeon-e3-1270v6";
  xeon_e3.arch = "x86";
  xeon_e3.cores = 4;
  xeon_e3.frequency_ghz = 3.8;
  xeon_e3.tdp_w = 72.0;
  xeon_e3.mem_mib = 65536;
  xeon_e3.idle_power_w = 25.2;
  xeon_e3.per_iteration_s = {0.0066, 0.004};
  xeon_e3.active_power_w = {31.0, 50.0};

  MachineSpec xeon_e5;
  xeon_e5.type_id = "intel-xeon-e5-2683v4";
  xeon_e5.arch = "x86";
  xeon_e5.cores = 32;
  xeon_e5.frequency_ghz = 2.1;
  xeon_e5.tdp_w = 120.0;
  xeon_e5.mem_mib = 131072;
  xeon_e5.idle_power_w = 42.0;
  xeon_e5.per_iteration_s = {0.0152, 0.0095};
  xeon_e5.active_power_w = {14.0, 22.0};

  cluster.specs = {arm, amd, xeon_e3, xeon_e5};

  auto add_node = [&](const std::string& id, const std::string& type) {
    Node node;
    node.node_id = id;
    node.type_id = type;
    for (std::size_t i = 0; i < cluster.specs.size(); ++i) {
      if (cluster.specs[i].type_id == type) node.spec_index = i;
    }
    cluster.nodes.push_back(std::move(node));
  };

  add_node("amd-0", "amd-epyc-7281");
  add_node("e3-0", "intel-xeon-e3-1270v6");
  add_node("e5-0", "intel-xeon-e5-2683v4");
  add_node("e5-1", "intel-xeon-e5-2683v4");
  add_node("arm-0", "arm-cortex-a53");
  add_node("arm-1", "arm-cortex-a53");
  add_node("arm-2", "arm-cortex-a53");
  add_node("arm-3", "arm-cortex-a53");

  cluster.validate();
  return cluster;
}

}  // namespace heatsim
