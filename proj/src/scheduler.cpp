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

#include "heatsim/scheduler.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "heatsim/error.hpp"
#include "heatsim/util.hpp"

namespace heatsim {

using nlohmann::json;

const char* to_string(DecisionAction action) {
  switch (action) {
    case DecisionAction::Assign: return "assign";
    case DecisionAction::Migrate: return "migrate";
    case DecisionAction::Defer: return "defer";
  }
  return "?";
}

std::string policy_to_json_text(const PolicyConfig& policy) {
  json j{{"scheduler", policy.kind == PolicyKind::Heats ? "heats" : "k8s_baseline"},
         {"label", policy.label},
         {"epsilon", policy.epsilon},
         {"reschedule_interval_s", policy.reschedule_interval_s},
         {"scheduling_tick_s", policy.scheduling_tick_s},
         {"migration_overhead_s", policy.migration_overhead_s}};
  if (policy.kind == PolicyKind::Heats) j["h_value"] = policy.h_value;
  return j.dump(2) + "\n";
}

PolicyConfig policy_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("ParseError", std::string("policy JSON: ") + e.what());
  }
  PolicyConfig policy;
  const std::string kind = j.value("scheduler", std::string("heats"));
  if (kind == "heats") {
    policy.kind = PolicyKind::Heats;
  } else if (kind == "k8s_baseline") {
    policy.kind = PolicyKind::K8sBaseline;
  } else {
    throw Error("ParseError", "unknown scheduler '" + kind + "'");
  }
  policy.label = j.value("label", kind);
  policy.h_value = j.value("h_value", 0.5);
  policy.epsilon = j.value("epsilon", 0.0);
  policy.reschedule_interval_s = j.value("reschedule_interval_s", 60.0);
  policy.scheduling_tick_s = j.value("scheduling_tick_s", 1.0);
  policy.migration_overhead_s = j.value("migration_overhead_s", 0.0);
  if (policy.kind == PolicyKind::Heats) policy.weights().validate();
  return policy;
}

std::vector<NodeScore> scores(const Cluster& cluster, const std::vector<std::size_t>& candidates,
                              const Task& task, const TradeoffWeights& weights,
                              const PredictorSet& predictors) {
  if (candidates.empty()) throw Error("NoCandidates", "empty candidate set for " + task.task_id);

  std::vector<NodeScore> result;
  result.reserve(candidates.size());
  double max_e = 0.0;
  double max_p = 0.0;
  for (std::size_t index : candidates) {
    const Node& node = cluster.nodes[index];
    const auto [energy, runtime] = predict(predictors, node.type_id, node.governor, task);
    NodeScore ns;
    ns.node_id = node.node_id;
    ns.predicted_energy_j = energy;
    ns.predicted_perf = 1.0 / runtime;
    max_e = std::max(max_e, ns.predicted_energy_j);
    max_p = std::max(max_p, ns.predicted_perf);
    result.push_back(std::move(ns));
  }
  // max_e, max_p > 0 is guaranteed by the predictor's positive clamp.
  for (auto& ns : result) {
    ns.score = weights.e_w * (1.0 - ns.predicted_energy_j / max_e) +
               weights.p_w * (ns.predicted_perf / max_p);
  }
  return result;
}

std::vector<NodeScore> baseline_k8s_score(const Cluster& cluster,
                                          const std::vector<std::size_t>& candidates,
                                          const Task& task) {
  std::vector<NodeScore> result;
  result.reserve(candidates.size());
  for (std::size_t index : candidates) {
    const Node& node = cluster.nodes[index];
    const MachineSpec& spec = cluster.spec_of(node);
    const auto [free_cores, free_mem] = free_resources(spec, node);
    // Free fraction after hypothetically placing the task.
    const double cores_after = (free_cores - task.cpu_req) / double(spec.cores);
    const double mem_after = double(free_mem - task.mem_req_mib) / double(spec.mem_mib);
    NodeScore ns;
    ns.node_id = node.node_id;
    ns.score = 0.5 * (cores_after + mem_after);
    result.push_back(std::move(ns));
  }
  return result;
}

namespace {

std::vector<std::size_t> fitting_nodes(const Cluster& cluster, const Task& task) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cluster.nodes.size(); ++i) {
    if (cluster.fits(i, task)) out.push_back(i);
  }
  return out;
}

// Argmax with deterministic ties: the preferred node (current host during
// rescheduling) wins an exact tie, then the smallest node_id.
std::size_t pick_best(const std::vector<NodeScore>& node_scores,
                      const std::string* preferred_node_id) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < node_scores.size(); ++i) {
    const NodeScore& cur = node_scores[i];
    const NodeScore& win = node_scores[best];
    if (cur.score > win.score) {
      best = i;
    } else if (cur.score == win.score) {
      const bool cur_pref = preferred_node_id && cur.node_id == *preferred_node_id;
      const bool win_pref = preferred_node_id && win.node_id == *preferred_node_id;
      if (cur_pref && !win_pref) {
        best = i;
      } else if (!cur_pref && !win_pref && cur.node_id < win.node_id) {
        best = i;
      }
    }
  }
  return best;
}

}  // namespace

std::optional<BestFit> best_fit(const Cluster& cluster, const Task& task,
                                const TradeoffWeights& weights, const PredictorSet* predictors,
                                PolicyKind kind, const std::string* preferred_node_id) {
  const std::vector<std::size_t> candidates = fitting_nodes(cluster, task);
  if (candidates.empty()) return std::nullopt;

  std::vector<NodeScore> node_scores;
  if (kind == PolicyKind::Heats) {
    if (!predictors) throw Error("ModelMissing", "heats policy requires trained predictors");
    node_scores = scores(cluster, candidates, task, weights, *predictors);
  } else {
    node_scores = baseline_k8s_score(cluster, candidates, task);
  }

  const std::size_t winner = pick_best(node_scores, preferred_node_id);
  return BestFit{candidates[winner], node_scores[winner]};
}

std::vector<SchedulingDecision> schedule(std::deque<std::string>& pending,
                                         std::map<std::string, Task>& tasks, Cluster& cluster,
                                         const PredictorSet* predictors,
                                         const PolicyConfig& policy, double now_s) {
  std::vector<SchedulingDecision> decisions;
  const std::size_t rounds = pending.size();  // one poll per queued task
  for (std::size_t i = 0; i < rounds; ++i) {
    const std::string task_id = pending.front();
    pending.pop_front();
    Task& task = tasks.at(task_id);

    const auto fit = best_fit(cluster, task, policy.weights(), predictors, policy.kind);
    SchedulingDecision decision;
    decision.task_id = task_id;
    decision.at_time_s = now_s;
    if (fit) {
      cluster.allocate(fit->node_index, task);
      task.state = TaskState::Running;
      task.current_node = cluster.nodes[fit->node_index].node_id;
      decision.action = DecisionAction::Assign;
      decision.to_node = *task.current_node;
      decision.score = fit->score.score;
    } else {
      decision.action = DecisionAction::Defer;
      pending.push_back(task_id);  // retried at the next scheduling tick
    }
    decisions.push_back(std::move(decision));
  }
  return decisions;
}

std::vector<SchedulingDecision> reschedule(std::map<std::string, Task>& tasks, Cluster& cluster,
                                           const PredictorSet* predictors,
                                           const PolicyConfig& policy, double now_s) {
  std::vector<SchedulingDecision> decisions;
  // std::map iteration order is ascending task_id; earlier migrations in the
  // pass are visible to later tasks.
  for (auto& [task_id, task] : tasks) {
    if (task.state != TaskState::Running) continue;
    const std::string current = *task.current_node;
    const std::size_t current_index = *cluster.find_node(current);

    // The task's own resources on its current host count as available to it,
    // so the current host is always in the candidate set.
    cluster.release(current_index, task);
    const std::vector<std::size_t> candidates = fitting_nodes(cluster, task);
    std::vector<NodeScore> node_scores;
    if (policy.kind == PolicyKind::Heats) {
      if (!predictors) throw Error("ModelMissing", "heats policy requires trained predictors");
      node_scores = scores(cluster, candidates, task, policy.weights(), *predictors);
    } else {
      node_scores = baseline_k8s_score(cluster, candidates, task);
    }
    const std::size_t winner = pick_best(node_scores, &current);
    double current_score = 0.0;
    for (const auto& ns : node_scores) {
      if (ns.node_id == current) current_score = ns.score;
    }

    const bool moved = node_scores[winner].node_id != current &&
                       node_scores[winner].score - current_score > policy.epsilon;
    if (moved) {
      cluster.allocate(candidates[winner], task);
      task.current_node = cluster.nodes[candidates[winner]].node_id;
      SchedulingDecision decision;
      decision.task_id = task_id;
      decision.action = DecisionAction::Migrate;
      decision.from_node = current;
      decision.to_node = *task.current_node;
      decision.score = node_scores[winner].score;
      decision.at_time_s = now_s;
      decisions.push_back(std::move(decision));
    } else {
      cluster.allocate(current_index, task);  // stay put
    }
  }
  return decisions;
}

std::string decisions_to_csv(const std::vector<SchedulingDecision>& decisions) {
  std::string out = "time_s,task_id,action,from_node,to_node,score\n";
  for (const auto& d : decisions) {
    out += format_double(d.at_time_s);
    out += ',';
    out += d.task_id;
    out += ',';
    out += to_string(d.action);
    out += ',';
    out += d.from_node;
    out += ',';
    out += d.to_node;
    out += ',';
    if (d.action != DecisionAction::Defer) out += format_double(d.score);
    out += '\n';
  }
  return out;
}

}  // namespace heatsim
