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

#include "heatsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

#include "heatsim/error.hpp"
#include "heatsim/util.hpp"

namespace heatsim {

using nlohmann::json;

void advance_task(Task& task, const MachineSpec& spec, GovernorMode governor, double dt_s) {
  if (dt_s < 0) throw Error("InvalidTimeline", "negative dt for " + task.task_id);
  if (dt_s == 0 || task.iterations_done >= double(task.iterations_total)) return;

  const double per = spec.per_iteration_s[governor];
  const double remaining_s = (double(task.iterations_total) - task.iterations_done) * per;
  // Snap to completion within a 1 ns grace so an event scheduled at the
  // closed-form completion time always lands, ulp noise included.
  if (dt_s >= remaining_s - 1e-9) {
    task.iterations_done = double(task.iterations_total);
    task.energy_j += spec.task_power_w(governor) * remaining_s;
  } else {
    task.iterations_done += dt_s / per;
    task.energy_j += spec.task_power_w(governor) * dt_s;
  }
}

double integrate_energy(const std::vector<std::pair<double, double>>& segments) {
  double joules = 0.0;
  for (const auto& [power_w, duration_s] : segments) {
    if (duration_s < 0) throw Error("InvalidTimeline", "negative segment duration");
    joules += power_w * duration_s;
  }
  return joules;
}

namespace {

// Event kinds in tie-break priority order at equal timestamps: completions
// free capacity before arrivals, arrivals queue before the scheduling pass,
// forced moves and rescheduling run before the monitor snapshot.
enum class EventKind : int {
  TaskCompletion = 0,
  TaskArrival = 1,
  SchedulingTick = 2,
  ForcedMigration = 3,
  RescheduleTick = 4,
  MonitorTick = 5
};

struct Event {
  double time_s = 0.0;
  EventKind kind = EventKind::MonitorTick;
  std::uint64_t seq = 0;
  std::size_t payload = 0;  // trace index (arrival) / forced index
  std::string task_id;      // completion
  int generation = 0;       // completion validity
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time_s != b.time_s) return a.time_s > b.time_s;
    if (a.kind != b.kind) return int(a.kind) > int(b.kind);
    return a.seq > b.seq;
  }
};

// Linear interpolation between order statistics, q in [0,1].
double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * double(sorted.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

class Engine {
 public:
  Engine(const Cluster& cluster, std::vector<Task> trace, const PredictorSet* predictors,
         const SimOptions& options)
      : cluster_(cluster), predictors_(predictors), options_(options) {
    cluster_.validate();
    std::stable_sort(trace.begin(), trace.end(), [](const Task& a, const Task& b) {
      return a.submit_time_s < b.submit_time_s;
    });
    trace_ = std::move(trace);
  }

  SimReport run() {
    if (!trace_.empty()) {
      for (std::size_t i = 0; i < trace_.size(); ++i) {
        push({trace_[i].submit_time_s, EventKind::TaskArrival, 0, i});
      }
      for (std::size_t i = 0; i < options_.forced_migrations.size(); ++i) {
        push({options_.forced_migrations[i].time_s, EventKind::ForcedMigration, 0, i});
      }
      push({0.0, EventKind::MonitorTick, 0, 0});
      if (options_.policy.kind == PolicyKind::Heats && options_.policy.reschedule_interval_s > 0) {
        push({options_.policy.reschedule_interval_s, EventKind::RescheduleTick, 0, 0});
      }
    }

    while (!events_.empty()) {
      const Event event = events_.top();
      events_.pop();
      now_ = event.time_s;
      switch (event.kind) {
        case EventKind::TaskCompletion: on_completion(event); break;
        case EventKind::TaskArrival: on_arrival(event); break;
        case EventKind::SchedulingTick: on_scheduling_tick(); break;
        case EventKind::ForcedMigration: on_forced_migration(event); break;
        case EventKind::RescheduleTick: on_reschedule_tick(); break;
        case EventKind::MonitorTick: on_monitor_tick(); break;
      }
      if (options_.validate_each_event) validate_state();
    }

    return assemble_report();
  }

 private:
  struct RunningInfo {
    std::size_t node_index = 0;
    double last_sync_s = 0.0;
    double stall_until_s = 0.0;
    int completion_generation = 0;
  };

  void push(Event event) {
    event.seq = next_seq_++;
    events_.push(std::move(event));
  }

  void request_scheduling_tick(double time_s) {
    if (scheduled_ticks_.insert(time_s).second) {
      push({time_s, EventKind::SchedulingTick, 0, 0});
    }
  }

  // Brings a task's progress and energy up to now_. While stalled (migration
  // overhead) the task draws the destination's active power without progress.
  void sync_task(const std::string& task_id) {
    Task& task = tasks_.at(task_id);
    RunningInfo& info = running_.at(task_id);
    double t = info.last_sync_s;
    if (now_ <= t) return;
    const Node& node = cluster_.nodes[info.node_index];
    const MachineSpec& spec = cluster_.spec_of(node);
    if (info.stall_until_s > t) {
      const double stall_dt = std::min(now_, info.stall_until_s) - t;
      task.energy_j += spec.task_power_w(node.governor) * stall_dt;
      t += stall_dt;
    }
    if (now_ > t) advance_task(task, spec, node.governor, now_ - t);
    info.last_sync_s = now_;
  }

  void schedule_completion(const std::string& task_id) {
    Task& task = tasks_.at(task_id);
    RunningInfo& info = running_.at(task_id);
    const Node& node = cluster_.nodes[info.node_index];
    const MachineSpec& spec = cluster_.spec_of(node);
    const double remaining =
        (double(task.iterations_total) - task.iterations_done) *
        spec.per_iteration_s[node.governor];
    const double at = std::max(now_, info.stall_until_s) + remaining;
    ++info.completion_generation;
    Event event{at, EventKind::TaskCompletion, 0, 0};
    event.task_id = task_id;
    event.generation = info.completion_generation;
    push(std::move(event));
  }

  void on_arrival(const Event& event) {
    Task task = trace_[event.payload];
    task.state = TaskState::Pending;
    task.current_node = std::nullopt;
    if (options_.policy.kind == PolicyKind::Heats) {
      task.weights = options_.policy.weights();
    }
    task.validate();

    bool satisfiable = false;
    for (std::size_t i = 0; i < cluster_.nodes.size(); ++i) {
      const MachineSpec& spec = cluster_.spec_of(i);
      if (task.cpu_req <= spec.cores && task.mem_req_mib <= spec.mem_mib) {
        satisfiable = true;
        break;
      }
    }
    if (!satisfiable) throw Error("UnsatisfiableTask", task.task_id);

    const std::string task_id = task.task_id;
    if (!tasks_.emplace(task_id, std::move(task)).second) {
      throw Error("DuplicateTask", task_id);
    }
    pending_.push_back(task_id);
    request_scheduling_tick(now_);
  }

  void on_scheduling_tick() {
    scheduled_ticks_.erase(now_);
    auto decisions =
        schedule(pending_, tasks_, cluster_, predictors_, options_.policy, now_);
    for (const auto& decision : decisions) {
      if (decision.action == DecisionAction::Assign) {
        RunningInfo info;
        info.node_index = *cluster_.find_node(decision.to_node);
        info.last_sync_s = now_;
        info.stall_until_s = now_;
        running_[decision.task_id] = info;
        schedule_completion(decision.task_id);
      }
    }
    append(decisions);
    if (!pending_.empty()) request_scheduling_tick(now_ + options_.policy.scheduling_tick_s);
  }

  void on_forced_migration(const Event& event) {
    const ForcedMigration& forced = options_.forced_migrations[event.payload];
    auto it = tasks_.find(forced.task_id);
    if (it == tasks_.end() || it->second.state != TaskState::Running) return;
    const auto to_index = cluster_.find_node(forced.to_node);
    if (!to_index) throw Error("UnknownNode", forced.to_node);
    migrate_running_task(forced.task_id, *to_index);
  }

  // Moves a running task, preserving progress. Returns false (task stays on
  // its source) when the destination lacks capacity.
  bool migrate_running_task(const std::string& task_id, std::size_t to_index) {
    Task& task = tasks_.at(task_id);
    RunningInfo& info = running_.at(task_id);
    if (info.node_index == to_index) return true;
    sync_task(task_id);
    if (task.iterations_done >= double(task.iterations_total)) return true;  // finishing now
    if (!cluster_.fits(to_index, task)) return false;  // MigrationRejected

    cluster_.release(info.node_index, task);
    cluster_.allocate(to_index, task);
    const std::string from_id = cluster_.nodes[info.node_index].node_id;
    info.node_index = to_index;
    task.current_node = cluster_.nodes[to_index].node_id;
    info.stall_until_s = now_ + options_.policy.migration_overhead_s;
    schedule_completion(task_id);
    report_.migrations.push_back({now_, task_id, from_id, *task.current_node});
    return true;
  }

  void on_reschedule_tick() {
    if (finished_ < trace_.size()) {
      push({now_ + options_.policy.reschedule_interval_s, EventKind::RescheduleTick, 0, 0});
    }
    bool any_running = false;
    for (const auto& [id, task] : tasks_) {
      if (task.state == TaskState::Running) {
        any_running = true;
        break;
      }
    }
    if (!any_running) return;

    // Bring every running task up to now so migrations account progress on
    // the node the work actually ran on.
    for (auto& [id, info] : running_) {
      if (tasks_.at(id).state == TaskState::Running) sync_task(id);
    }

    auto decisions = reschedule(tasks_, cluster_, predictors_, options_.policy, now_);
    for (const auto& decision : decisions) {
      RunningInfo& info = running_.at(decision.task_id);
      info.node_index = *cluster_.find_node(decision.to_node);
      info.stall_until_s = now_ + options_.policy.migration_overhead_s;
      schedule_completion(decision.task_id);
      report_.migrations.push_back(
          {now_, decision.task_id, decision.from_node, decision.to_node});
    }
    append(decisions);
  }

  void on_completion(const Event& event) {
    auto it = running_.find(event.task_id);
    if (it == running_.end() || it->second.completion_generation != event.generation) {
      return;  // superseded by a migration
    }
    sync_task(event.task_id);
    Task& task = tasks_.at(event.task_id);
    if (task.iterations_done < double(task.iterations_total)) {
      // Only reachable if the closed-form completion drifted; reschedule.
      schedule_completion(event.task_id);
      return;
    }
    cluster_.release(it->second.node_index, task);
    task.state = TaskState::Finished;
    task.current_node = std::nullopt;
    running_.erase(it);
    report_.task_finish_s[event.task_id] = now_;
    makespan_ = std::max(makespan_, now_);
    ++finished_;
  }

  void on_monitor_tick() {
    std::vector<double> cpu_fracs, mem_fracs;
    cpu_fracs.reserve(cluster_.nodes.size());
    mem_fracs.reserve(cluster_.nodes.size());
    for (const auto& node : cluster_.nodes) {
      const MachineSpec& spec = cluster_.spec_of(node);
      const double cpu = node.allocated_cores / double(spec.cores);
      const double mem = double(node.allocated_mem_mib) / double(spec.mem_mib);
      report_.utilization_series.push_back({now_, node.node_id, cpu, mem});
      cpu_fracs.push_back(cpu);
      mem_fracs.push_back(mem);
    }
    std::sort(cpu_fracs.begin(), cpu_fracs.end());
    std::sort(mem_fracs.begin(), mem_fracs.end());
    auto band = [&](const char* metric, const std::vector<double>& sorted) {
      report_.percentile_bands.push_back({now_, metric, percentile(sorted, 0.0),
                                          percentile(sorted, 0.25), percentile(sorted, 0.5),
                                          percentile(sorted, 0.75), percentile(sorted, 1.0)});
    };
    band("cpu", cpu_fracs);
    band("mem", mem_fracs);
    if (finished_ < trace_.size()) {
      push({now_ + options_.monitor_interval_s, EventKind::MonitorTick, 0, 0});
    }
  }

  void append(std::vector<SchedulingDecision>& decisions) {
    report_.decisions.insert(report_.decisions.end(),
                             std::make_move_iterator(decisions.begin()),
                             std::make_move_iterator(decisions.end()));
  }

  void validate_state() {
    for (std::size_t i = 0; i < cluster_.nodes.size(); ++i) {
      const Node& node = cluster_.nodes[i];
      const MachineSpec& spec = cluster_.spec_of(node);
      double cores = 0.0;
      std::int64_t mem = 0;
      for (const auto& task_id : node.running_tasks) {
        const Task& task = tasks_.at(task_id);
        cores += task.cpu_req;
        mem += task.mem_req_mib;
      }
      if (std::abs(cores - node.allocated_cores) > 1e-9 || mem != node.allocated_mem_mib) {
        throw Error("InvariantViolation", node.node_id + ": allocation drift");
      }
      if (node.allocated_cores > spec.cores + 1e-9 || node.allocated_mem_mib > spec.mem_mib) {
        throw Error("CapacityExceeded", node.node_id);
      }
    }
    std::size_t pending = 0, running = 0, done = 0;
    for (const auto& [id, task] : tasks_) {
      switch (task.state) {
        case TaskState::Pending: ++pending; break;
        case TaskState::Running: ++running; break;
        case TaskState::Finished: ++done; break;
      }
    }
    if (pending + running + done != tasks_.size() || done != finished_) {
      throw Error("InvariantViolation", "task conservation");
    }
  }

  SimReport assemble_report() {
    double task_energy_j = 0.0;
    for (const auto& [id, task] : tasks_) {
      report_.task_energy_j[id] = task.energy_j;
      task_energy_j += task.energy_j;
    }
    std::vector<std::pair<double, double>> idle_segments;
    idle_segments.reserve(cluster_.nodes.size());
    for (const auto& node : cluster_.nodes) {
      idle_segments.push_back({cluster_.spec_of(node).idle_power_w, makespan_});
    }
    const double idle_j = integrate_energy(idle_segments);
    report_.makespan_s = makespan_;
    report_.task_energy_kj = task_energy_j / 1000.0;
    report_.cluster_energy_kj = (idle_j + task_energy_j) / 1000.0;
    report_.migration_count = int(report_.migrations.size());
    return std::move(report_);
  }

  Cluster cluster_;
  std::vector<Task> trace_;
  const PredictorSet* predictors_;
  SimOptions options_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  std::set<double> scheduled_ticks_;

  std::map<std::string, Task> tasks_;
  std::map<std::string, RunningInfo> running_;
  std::deque<std::string> pending_;
  std::size_t finished_ = 0;
  double makespan_ = 0.0;
  SimReport report_;
};

}  // namespace

SimReport run(const Cluster& cluster, std::vector<Task> trace, const PredictorSet* predictors,
              const SimOptions& options) {
  if (cluster.nodes.empty()) throw Error("InvalidCluster", "no nodes");
  if (options.policy.kind == PolicyKind::Heats && !predictors) {
    throw Error("ModelMissing", "heats policy requires trained predictors");
  }
  Engine engine(cluster, std::move(trace), predictors, options);
  return engine.run();
}

std::string report_to_json_text(const SimReport& report) {
  json migrations = json::array();
  for (const auto& m : report.migrations) {
    migrations.push_back(json{{"time_s", m.time_s},
                              {"task_id", m.task_id},
                              {"from_node", m.from_node},
                              {"to_node", m.to_node}});
  }
  return json{{"makespan_s", report.makespan_s},
              {"cluster_energy_kj", report.cluster_energy_kj},
              {"task_energy_kj", report.task_energy_kj},
              {"migration_count", report.migration_count},
              {"migrations", migrations}}
             .dump(2) +
         "\n";
}

std::string utilization_to_csv(const SimReport& report) {
  std::string out = "time_s,node_id,cpu_frac,mem_frac\n";
  for (const auto& u : report.utilization_series) {
    out += format_double(u.time_s);
    out += ',';
    out += u.node_id;
    out += ',';
    out += format_double(u.cpu_frac);
    out += ',';
    out += format_double(u.mem_frac);
    out += '\n';
  }
  return out;
}

std::string percentiles_to_csv(const SimReport& report) {
  std::string out = "time_s,metric,p0,p25,p50,p75,p100\n";
  for (const auto& b : report.percentile_bands) {
    out += format_double(b.time_s);
    out += ',';
    out += b.metric;
    out += ',';
    out += format_double(b.p0);
    out += ',';
    out += format_double(b.p25);
    out += ',';
    out += format_double(b.p50);
    out += ',';
    out += format_double(b.p75);
    out += ',';
    out += format_double(b.p100);
    out += '\n';
  }
  return out;
}

}  // namespace heatsim
