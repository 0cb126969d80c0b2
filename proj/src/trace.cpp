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

#include "heatsim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "heatsim/error.hpp"
#include "heatsim/rng.hpp"
#include "heatsim/util.hpp"

namespace heatsim {

const char* to_string(TraceEventKind kind) {
  switch (kind) {
    case TraceEventKind::Submit: return "submit";
    case TraceEventKind::Schedule: return "schedule";
    case TraceEventKind::Finish: return "finish";
    case TraceEventKind::Evict: return "evict";
    case TraceEventKind::MachineAdd: return "machine_add";
    case TraceEventKind::MachineRemove: return "machine_remove";
    case TraceEventKind::MachineUpdate: return "machine_update";
    case TraceEventKind::Usage: return "usage";
  }
  return "?";
}

TraceEventKind trace_event_kind_from_string(const std::string& name) {
  if (name == "submit") return TraceEventKind::Submit;
  if (name == "schedule") return TraceEventKind::Schedule;
  if (name == "finish") return TraceEventKind::Finish;
  if (name == "evict") return TraceEventKind::Evict;
  if (name == "machine_add") return TraceEventKind::MachineAdd;
  if (name == "machine_remove") return TraceEventKind::MachineRemove;
  if (name == "machine_update") return TraceEventKind::MachineUpdate;
  if (name == "usage") return TraceEventKind::Usage;
  throw Error("ParseError", "unknown trace event kind '" + name + "'");
}

namespace {

bool is_machine_event(TraceEventKind kind) {
  return kind == TraceEventKind::MachineAdd || kind == TraceEventKind::MachineRemove ||
         kind == TraceEventKind::MachineUpdate;
}

std::string padded_index(int value, int width) {
  std::string digits = std::to_string(value);
  if (int(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return digits;
}

}  // namespace

std::vector<Task> generate_synthetic(std::uint64_t seed, const SyntheticParams& params) {
  if (params.bursts <= 0) throw Error("InvalidParams", "bursts must be positive");
  if (params.n_jobs < 0) throw Error("InvalidParams", "n_jobs must be non-negative");
  if (params.n_jobs % params.bursts != 0) {
    throw Error("UnevenBursts", std::to_string(params.n_jobs) + " jobs across " +
                                    std::to_string(params.bursts) + " bursts");
  }
  if (params.iter_min <= 0 || params.iter_max < params.iter_min) {
    throw Error("InvalidParams", "iteration range");
  }
  if (params.horizon_s <= 0 || params.burst_window_s <= 0) {
    throw Error("InvalidParams", "horizon/burst window");
  }

  const int per_burst = params.n_jobs / params.bursts;
  const double burst_spacing = params.horizon_s / params.bursts;
  const std::uint32_t iter_range = std::uint32_t(params.iter_max - params.iter_min + 1);
  const int width = std::max(4, int(std::to_string(std::max(params.n_jobs - 1, 0)).size()));

  Rng rng(seed);
  std::vector<Task> tasks;
  tasks.reserve(std::size_t(params.n_jobs));
  for (int burst = 0; burst < params.bursts; ++burst) {
    const double burst_start = burst * burst_spacing;
    for (int i = 0; i < per_burst; ++i) {
      Task task;
      task.task_id = "t" + padded_index(burst * per_burst + i, width);
      task.user_id = "synthetic";
      task.submit_time_s = burst_start + rng.uniform(0.0, params.burst_window_s);
      task.cpu_req = params.cpu_req;
      task.mem_req_mib = params.mem_req_mib;
      task.iterations_total = params.iter_min + std::int64_t(rng.below(iter_range));
      tasks.push_back(std::move(task));
    }
  }
  return tasks;
}

std::vector<TraceEvent> extract_window(const std::vector<TraceEvent>& events, double offset_s,
                                       double duration_s) {
  if (offset_s < 0 || duration_s < 0) throw Error("InvalidParams", "negative window");
  std::vector<TraceEvent> out;
  for (const auto& event : events) {
    if (event.time_s >= offset_s && event.time_s < offset_s + duration_s) {
      TraceEvent copy = event;
      copy.time_s -= offset_s;
      out.push_back(std::move(copy));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.time_s < b.time_s; });
  return out;
}

std::vector<std::string> top_users(const std::vector<TraceEvent>& events, int k) {
  if (k < 1) throw Error("InvalidParams", "k must be at least 1");
  std::map<std::string, std::size_t> counts;  // ordered: ties resolve by user_id
  for (const auto& event : events) {
    if (event.kind == TraceEventKind::Schedule && !event.user_id.empty()) {
      ++counts[event.user_id];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (const auto& [user, count] : ranked) {
    if (int(out.size()) == k) break;
    out.push_back(user);
  }
  return out;
}

std::vector<TraceEvent> filter_by_users(const std::vector<TraceEvent>& events,
                                        const std::set<std::string>& users) {
  std::vector<TraceEvent> out;
  for (const auto& event : events) {
    if (is_machine_event(event.kind) || users.count(event.user_id) > 0) {
      out.push_back(event);
    }
  }
  return out;
}

std::set<std::string> eligible_machines(const std::vector<TraceEvent>& events, double offset_s,
                                        double duration_s) {
  std::set<std::string> disqualified;
  std::set<std::string> scheduled;
  std::set<std::string> used;
  for (const auto& event : events) {
    if (event.time_s < offset_s || event.time_s >= offset_s + duration_s) continue;
    if (event.machine_id.empty()) continue;
    if (is_machine_event(event.kind)) {
      disqualified.insert(event.machine_id);
    } else if (event.kind == TraceEventKind::Schedule) {
      scheduled.insert(event.machine_id);
    } else if (event.kind == TraceEventKind::Usage) {
      used.insert(event.machine_id);
    }
  }
  std::set<std::string> out;
  for (const auto& machine : scheduled) {
    if (used.count(machine) > 0 && disqualified.count(machine) == 0) out.insert(machine);
  }
  return out;
}

std::set<std::string> eligible_machines(const std::vector<TraceEvent>& events) {
  return eligible_machines(events, 0.0, std::numeric_limits<double>::infinity());
}

std::vector<TraceEvent> filter_by_machines(const std::vector<TraceEvent>& events,
                                           const std::set<std::string>& machines) {
  std::unordered_set<std::string> surviving_tasks;
  for (const auto& event : events) {
    if (event.kind == TraceEventKind::Schedule && machines.count(event.machine_id) > 0 &&
        !event.task_id.empty()) {
      surviving_tasks.insert(event.task_id);
    }
  }
  std::vector<TraceEvent> out;
  for (const auto& event : events) {
    if (event.machine_id.empty()) {
      if (!event.task_id.empty() && surviving_tasks.count(event.task_id) > 0) {
        out.push_back(event);
      }
    } else if (machines.count(event.machine_id) > 0) {
      out.push_back(event);
    }
  }
  return out;
}

std::vector<TraceEvent> map_machine_types(const std::vector<TraceEvent>& events,
                                          const std::map<std::string, std::string>& type_map) {
  std::unordered_set<std::string> targets;
  for (const auto& [from, to] : type_map) {
    if (!targets.insert(to).second) {
      throw Error("NotBijective", "type map repeats target '" + to + "'");
    }
  }
  std::vector<TraceEvent> out;
  out.reserve(events.size());
  for (const auto& event : events) {
    TraceEvent copy = event;
    if (!copy.machine_type.empty()) {
      auto it = type_map.find(copy.machine_type);
      if (it == type_map.end()) throw Error("UnmappedType", copy.machine_type);
      copy.machine_type = it->second;
    }
    out.push_back(std::move(copy));
  }
  return out;
}

FoldResult fold_machines(const std::vector<TraceEvent>& events, const Cluster& testbed) {
  struct MachineInfo {
    std::string type;
    std::size_t schedule_count = 0;
  };
  std::map<std::string, MachineInfo> machines;  // ordered for deterministic ties
  for (const auto& event : events) {
    if (event.machine_id.empty()) continue;
    MachineInfo& info = machines[event.machine_id];
    if (info.type.empty() && !event.machine_type.empty()) info.type = event.machine_type;
    if (event.kind == TraceEventKind::Schedule) ++info.schedule_count;
  }

  std::vector<std::pair<std::string, MachineInfo>> order(machines.begin(), machines.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second.schedule_count > b.second.schedule_count;
  });

  // Greedy longest-processing-time fold: heaviest machine first, onto the
  // currently least-loaded node of its type.
  std::map<std::string, std::size_t> node_load;
  FoldResult result;
  for (const auto& [machine_id, info] : order) {
    if (info.type.empty()) {
      throw Error("MissingMachineType", "machine '" + machine_id + "' carries no type");
    }
    const Node* target = nullptr;
    for (const auto& node : testbed.nodes) {
      if (node.type_id != info.type) continue;
      if (!target || node_load[node.node_id] < node_load[target->node_id] ||
          (node_load[node.node_id] == node_load[target->node_id] &&
           node.node_id < target->node_id)) {
        target = &node;
      }
    }
    if (!target) throw Error("NoTargetNode", info.type);
    node_load[target->node_id] += info.schedule_count;
    result.machine_map[machine_id] = target->node_id;
  }

  result.events.reserve(events.size());
  for (const auto& event : events) {
    TraceEvent copy = event;
    if (!copy.machine_id.empty()) copy.machine_id = result.machine_map.at(copy.machine_id);
    result.events.push_back(std::move(copy));
  }
  return result;
}

namespace {

const MachineSpec& reference_machine(const Cluster& testbed) {
  if (testbed.specs.empty()) throw Error("InvalidCluster", "no machine specs");
  const MachineSpec* best = &testbed.specs[0];
  for (const auto& spec : testbed.specs) {
    if (spec.cores > best->cores ||
        (spec.cores == best->cores && spec.mem_mib > best->mem_mib) ||
        (spec.cores == best->cores && spec.mem_mib == best->mem_mib &&
         spec.type_id < best->type_id)) {
      best = &spec;
    }
  }
  return *best;
}

}  // namespace

std::vector<Task> tasks_from_trace(const std::vector<TraceEvent>& events, const Cluster& testbed,
                                   const TraceTaskDefaults& defaults) {
  const MachineSpec& ref = reference_machine(testbed);
  std::unordered_map<std::string, double> finish_time;
  for (const auto& event : events) {
    if (event.kind == TraceEventKind::Finish && !event.task_id.empty() &&
        finish_time.count(event.task_id) == 0) {
      finish_time[event.task_id] = event.time_s;
    }
  }

  std::vector<Task> tasks;
  for (const auto& event : events) {
    if (event.kind != TraceEventKind::Submit) continue;
    if (event.cpu_req <= 0 || event.mem_req <= 0) {
      throw Error("IncompleteRecord", "submit of '" + event.task_id + "' lacks resources");
    }
    Task task;
    task.task_id = event.task_id;
    task.user_id = event.user_id;
    task.submit_time_s = event.time_s;
    task.cpu_req = event.cpu_req * ref.cores;
    task.mem_req_mib = std::max<std::int64_t>(1, std::llround(event.mem_req * double(ref.mem_mib)));
    auto it = finish_time.find(event.task_id);
    if (it != finish_time.end() && it->second > event.time_s) {
      const double duration = it->second - event.time_s;
      task.iterations_total = std::max<std::int64_t>(
          1, std::llround(duration / ref.per_iteration_s[GovernorMode::Performance]));
    } else {
      task.iterations_total = defaults.default_iterations;
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

SampleResult run_sample_pipeline(const std::vector<TraceEvent>& raw, const SampleOptions& options,
                                 const Cluster& testbed) {
  SampleResult result;
  std::vector<TraceEvent> events = extract_window(raw, options.offset_s, options.duration_s);
  const std::vector<std::string> users = top_users(events, options.top_k);
  events = filter_by_users(events, std::set<std::string>(users.begin(), users.end()));

  if (!options.skip_machine_steps) {
    const std::set<std::string> eligible = eligible_machines(events);
    events = filter_by_machines(events, eligible);
    std::map<std::string, std::string> type_map = options.type_map;
    if (type_map.empty()) {
      for (const auto& event : events) {
        if (!event.machine_type.empty()) type_map[event.machine_type] = event.machine_type;
      }
    }
    events = map_machine_types(events, type_map);
    FoldResult fold = fold_machines(events, testbed);
    events = std::move(fold.events);
    result.machine_map = std::move(fold.machine_map);
  }

  result.tasks = tasks_from_trace(events, testbed, options.defaults);
  result.events = std::move(events);
  return result;
}

std::string trace_events_to_csv(const std::vector<TraceEvent>& events) {
  std::string out = "time_s,kind,user_id,task_id,machine_id,machine_type,cpu_req,mem_req\n";
  for (const auto& e : events) {
    out += format_double(e.time_s);
    out += ',';
    out += to_string(e.kind);
    out += ',';
    out += e.user_id;
    out += ',';
    out += e.task_id;
    out += ',';
    out += e.machine_id;
    out += ',';
    out += e.machine_type;
    out += ',';
    if (e.cpu_req != 0) out += format_double(e.cpu_req);
    out += ',';
    if (e.mem_req != 0) out += format_double(e.mem_req);
    out += '\n';
  }
  return out;
}

std::vector<TraceEvent> trace_events_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error("ParseError", "trace CSV: missing header");
  std::vector<TraceEvent> events;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 8) throw Error("ParseError", "trace CSV: bad field count");
    TraceEvent e;
    e.time_s = parse_double(f[0], "trace CSV time_s");
    e.kind = trace_event_kind_from_string(f[1]);
    e.user_id = f[2];
    e.task_id = f[3];
    e.machine_id = f[4];
    e.machine_type = f[5];
    e.cpu_req = f[6].empty() ? 0.0 : parse_double(f[6], "trace CSV cpu_req");
    e.mem_req = f[7].empty() ? 0.0 : parse_double(f[7], "trace CSV mem_req");
    events.push_back(std::move(e));
  }
  return events;
}

std::string tasks_to_csv(const std::vector<Task>& tasks) {
  std::string out = "task_id,submit_time_s,cpu_req,mem_req_mib,iterations\n";
  for (const auto& t : tasks) {
    out += t.task_id;
    out += ',';
    out += format_double(t.submit_time_s);
    out += ',';
    out += format_double(t.cpu_req);
    out += ',';
    out += std::to_string(t.mem_req_mib);
    out += ',';
    out += std::to_string(t.iterations_total);
    out += '\n';
  }
  return out;
}

std::vector<Task> tasks_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error("ParseError", "task CSV: missing header");
  std::vector<Task> tasks;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 5) throw Error("ParseError", "task CSV: bad field count");
    Task t;
    t.task_id = f[0];
    t.submit_time_s = parse_double(f[1], "task CSV submit_time_s");
    t.cpu_req = parse_double(f[2], "task CSV cpu_req");
    t.mem_req_mib = parse_int(f[3], "task CSV mem_req_mib");
    t.iterations_total = parse_int(f[4], "task CSV iterations");
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace heatsim
