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

#ifndef HEATSIM_SCHEDULER_HPP_
#define HEATSIM_SCHEDULER_HPP_

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heatsim/cluster.hpp"
#include "heatsim/predictor.hpp"

namespace heatsim {

struct NodeScore {
  std::string node_id;
  double score = 0.0;               // in [0, 1]
  double predicted_energy_j = 0.0;  // n_e
  double predicted_perf = 0.0;      // n_p = 1 / predicted runtime
};

enum class PolicyKind { Heats, K8sBaseline };

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Heats;
  std::string label = "heats";
  double h_value = 0.5;
  double epsilon = 0.0;  // migration hysteresis on the score improvement
  double reschedule_interval_s = 60.0;
  double scheduling_tick_s = 1.0;  // retry cadence for deferred tasks
  double migration_overhead_s = 0.0;

  TradeoffWeights weights() const { return TradeoffWeights::from_h(h_value); }
};

std::string policy_to_json_text(const PolicyConfig& policy);
PolicyConfig policy_from_json_text(const std::string& text);

// Weighted normalized score for each candidate node:
//   score = e_w * (1 - n_e / max_e) + p_w * (n_p / max_p)
// where n_e is the predicted task energy on the node, n_p the predicted
// performance (1 / predicted runtime), and the maxima range over this
// candidate set. Output order matches the candidate order.
std::vector<NodeScore> scores(const Cluster& cluster, const std::vector<std::size_t>& candidates,
                              const Task& task, const TradeoffWeights& weights,
                              const PredictorSet& predictors);

// Least-requested spreading: 0.5 * (free_cores/capacity + free_mem/capacity)
// evaluated after hypothetically placing the task. Candidates must fit.
std::vector<NodeScore> baseline_k8s_score(const Cluster& cluster,
                                          const std::vector<std::size_t>& candidates,
                                          const Task& task);

struct BestFit {
  std::size_t node_index = 0;
  NodeScore score;
};

// Capacity-filters the cluster, scores the survivors under the policy, and
// returns the argmax. Ties prefer preferred_node_id (the current host during
// rescheduling) and then the smallest node_id. Absent when nothing fits.
std::optional<BestFit> best_fit(const Cluster& cluster, const Task& task,
                                const TradeoffWeights& weights, const PredictorSet* predictors,
                                PolicyKind kind,
                                const std::string* preferred_node_id = nullptr);

enum class DecisionAction { Assign, Migrate, Defer };

const char* to_string(DecisionAction action);

struct SchedulingDecision {
  std::string task_id;
  DecisionAction action = DecisionAction::Defer;
  std::string from_node;  // Migrate only
  std::string to_node;    // Assign / Migrate
  double score = 0.0;     // winning score (Assign / Migrate)
  double at_time_s = 0.0;
};

// One FIFO pass over the pending queue. Each assignment updates `cluster`
// and `tasks` immediately so later tasks in the pass see reduced capacity;
// tasks with no fitting node re-enter the queue tail as Defer.
std::vector<SchedulingDecision> schedule(std::deque<std::string>& pending,
                                         std::map<std::string, Task>& tasks, Cluster& cluster,
                                         const PredictorSet* predictors,
                                         const PolicyConfig& policy, double now_s);

// Re-evaluates every running task in ascending task_id order, treating the
// task's own resources on its current host as free. Emits Migrate when the
// best fit differs from the current host and the score improvement exceeds
// policy.epsilon; migrations update the working state so later tasks in the
// pass see them. The caller owns completion-event bookkeeping.
std::vector<SchedulingDecision> reschedule(std::map<std::string, Task>& tasks, Cluster& cluster,
                                           const PredictorSet* predictors,
                                           const PolicyConfig& policy, double now_s);

// Decision log CSV: time_s,task_id,action,from_node,to_node,score.
std::string decisions_to_csv(const std::vector<SchedulingDecision>& decisions);

}  // namespace heatsim

#endif  // HEATSIM_SCHEDULER_HPP_
