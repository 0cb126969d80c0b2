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

#ifndef HEATSIM_TRACE_HPP_
#define HEATSIM_TRACE_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "heatsim/cluster.hpp"

namespace heatsim {

enum class TraceEventKind {
  Submit,
  Schedule,
  Finish,
  Evict,
  MachineAdd,
  MachineRemove,
  MachineUpdate,
  Usage
};

const char* to_string(TraceEventKind kind);
TraceEventKind trace_event_kind_from_string(const std::string& name);

// Normalized cluster-trace record. Task events carry user/task ids; machine
// events carry machine id/type. Schedule and Usage events referencing a
// machine may also carry the machine's type (denormalized), which is what
// lets type information survive once per-machine metadata events are gone.
struct TraceEvent {
  double time_s = 0.0;
  TraceEventKind kind = TraceEventKind::Submit;
  std::string user_id;
  std::string task_id;
  std::string machine_id;
  std::string machine_type;
  double cpu_req = 0.0;  // normalized [0,1]
  double mem_req = 0.0;  // normalized [0,1]
};

// --- Synthetic workload -----------------------------------------------------

struct SyntheticParams {
  int n_jobs = 480;
  int bursts = 4;
  double horizon_s = 600.0;
  double burst_window_s = 150.0;
  int iter_min = 500;
  int iter_max = 1000;
  double cpu_req = 2.0;  // two worker threads
  std::int64_t mem_req_mib = 512;
};

// n_jobs/bursts tasks per burst; burst b starts at b * horizon/bursts and
// each submit time adds U[0, burst_window) drawn from the deterministic Rng.
// Iterations are iter_min + draw mod (iter_max - iter_min + 1). Throws
// Error("UnevenBursts") when n_jobs is not divisible by bursts.
std::vector<Task> generate_synthetic(std::uint64_t seed, const SyntheticParams& params = {});

// --- Sampling pipeline ------------------------------------------------------

// Events with offset <= time < offset + duration, rebased to 0 and stably
// sorted by time (original order preserved on ties).
std::vector<TraceEvent> extract_window(const std::vector<TraceEvent>& events, double offset_s,
                                       double duration_s);

// The k users with the most Schedule events; ties broken by ascending user_id.
std::vector<std::string> top_users(const std::vector<TraceEvent>& events, int k);

// Keeps machine events unconditionally and task events whose user is listed.
std::vector<TraceEvent> filter_by_users(const std::vector<TraceEvent>& events,
                                        const std::set<std::string>& users);

// Machines with no MachineAdd/Remove/Update event in [offset, offset+duration),
// at least one Schedule and at least one Usage referencing them.
std::set<std::string> eligible_machines(const std::vector<TraceEvent>& events, double offset_s,
                                        double duration_s);
std::set<std::string> eligible_machines(const std::vector<TraceEvent>& events);

// Restriction step between eligibility and mapping: keeps events referencing
// an eligible machine; machine-free events (Submit) survive only when their
// task still has a Schedule event.
std::vector<TraceEvent> filter_by_machines(const std::vector<TraceEvent>& events,
                                           const std::set<std::string>& machines);

// Rewrites machine_type through an injective map covering every type present.
std::vector<TraceEvent> map_machine_types(const std::vector<TraceEvent>& events,
                                          const std::map<std::string, std::string>& type_map);

struct FoldResult {
  std::vector<TraceEvent> events;
  std::map<std::string, std::string> machine_map;  // trace machine -> testbed node
};

// Surjective machine folding: trace machines are processed in descending
// in-window Schedule count (ties ascending machine_id) and each is assigned
// to the currently least-loaded testbed node of its type (ties ascending
// node_id); machine_id fields are rewritten accordingly.
FoldResult fold_machines(const std::vector<TraceEvent>& events, const Cluster& testbed);

struct TraceTaskDefaults {
  std::int64_t default_iterations = 750;
};

// Bridges sampled events to simulator tasks: each Submit becomes a Task.
// Normalized requirements scale by the largest testbed machine; iterations
// come from the Submit->Finish duration at that machine's Performance rate
// when a Finish exists, else the default.
std::vector<Task> tasks_from_trace(const std::vector<TraceEvent>& events, const Cluster& testbed,
                                   const TraceTaskDefaults& defaults = {});

// --- Whole pipeline ---------------------------------------------------------

struct SampleOptions {
  double offset_s = 0.0;
  double duration_s = 0.0;
  int top_k = 10;
  std::map<std::string, std::string> type_map;  // empty: identity
  bool skip_machine_steps = false;              // machine-information-free traces
  TraceTaskDefaults defaults;
};

struct SampleResult {
  std::vector<TraceEvent> events;
  std::map<std::string, std::string> machine_map;
  std::vector<Task> tasks;
};

SampleResult run_sample_pipeline(const std::vector<TraceEvent>& raw, const SampleOptions& options,
                                 const Cluster& testbed);

// --- CSV --------------------------------------------------------------------

// time_s,kind,user_id,task_id,machine_id,machine_type,cpu_req,mem_req
std::string trace_events_to_csv(const std::vector<TraceEvent>& events);
std::vector<TraceEvent> trace_events_from_csv(const std::string& text);

// task_id,submit_time_s,cpu_req,mem_req_mib,iterations
std::string tasks_to_csv(const std::vector<Task>& tasks);
std::vector<Task> tasks_from_csv(const std::string& text);

}  // namespace heatsim

#endif  // HEATSIM_TRACE_HPP_
