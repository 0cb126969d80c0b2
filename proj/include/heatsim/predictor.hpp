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

#ifndef HEATSIM_PREDICTOR_HPP_
#define HEATSIM_PREDICTOR_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "heatsim/cluster.hpp"

namespace heatsim {

enum class ProbeWorkload { KMeansLike, MatMulLike };
enum class ModelTarget { EnergyJ, RuntimeS };

const char* to_string(ProbeWorkload workload);
const char* to_string(ModelTarget target);
ProbeWorkload workload_from_string(const std::string& name);
ModelTarget target_from_string(const std::string& name);

// One probing measurement: a benchmark task run on (type, governor).
// Energy is task-attributed (idle excluded).
struct ProbeSample {
  std::string type_id;
  GovernorMode governor = GovernorMode::Performance;
  ProbeWorkload workload = ProbeWorkload::KMeansLike;
  double cpu_req = 0.0;
  std::int64_t mem_req_mib = 0;
  std::int64_t iterations = 0;
  double measured_runtime_s = 0.0;
  double measured_energy_j = 0.0;
};

struct ProbeGridPoint {
  double cpu_req = 0.0;
  std::int64_t mem_req_mib = 0;
  std::int64_t iterations = 0;
};

// cpu {1,2} x mem {256,512} x iterations {250,500,1000}.
std::vector<ProbeGridPoint> default_probe_grid();

// Ordinary-least-squares model: coefficients[0] is the intercept, then one
// coefficient per feature in feature_names order.
struct LinearModel {
  std::vector<double> coefficients;
  std::vector<std::string> feature_names;
  ModelTarget target = ModelTarget::EnergyJ;
  int n_samples = 0;
  double residual_sse = 0.0;

  double predict(double cpu_req, double mem_req_mib, double iterations) const;
};

// The three regression features, in model order.
const std::vector<std::string>& regression_feature_names();

struct FitOptions {
  bool ridge_enabled = true;
  // lambda = ridge_scale * trace(X^T X) / d, applied only when the Gram
  // matrix condition estimate exceeds cond_threshold.
  double ridge_scale = 1e-8;
  double cond_threshold = 1e12;
};

struct PredictorSet {
  // Ordered map keeps serialization stable.
  std::map<std::tuple<std::string, GovernorMode, ModelTarget>, LinearModel> models;
  std::vector<ProbeSample> training_samples;
  double trained_at_s = 0.0;

  const LinearModel& model(const std::string& type_id, GovernorMode governor,
                           ModelTarget target) const;  // throws ModelMissing
  bool has_model(const std::string& type_id, GovernorMode governor, ModelTarget target) const;
};

// Synthetic probing over every (machine type, governor, workload, grid point).
// Measurements come from the MachineSpec ground truth perturbed by
// multiplicative Gaussian noise of relative standard deviation noise_sd_rel,
// drawn from the deterministic Rng seeded with `seed`. MatMulLike work is
// expressed in KMeans-equivalent iterations via matmul_scale, so both
// workloads lie on the same affine law.
std::vector<ProbeSample> run_probing(const Cluster& cluster,
                                     const std::vector<ProbeGridPoint>& grid,
                                     double noise_sd_rel, std::uint64_t seed,
                                     double matmul_scale = 1.7);

// OLS via normal equations (ridge fallback per FitOptions). Throws
// "Underdetermined" with fewer samples than coefficients and
// "SingularDesign" on a singular Gram matrix with ridge disabled.
LinearModel fit(const std::vector<ProbeSample>& samples, const std::string& type_id,
                GovernorMode governor, ModelTarget target, const FitOptions& options = {});

// Fits all (type in cluster, governor, target) keys; the returned set covers
// every machine type with both governors and both targets.
PredictorSet train_predictors(const Cluster& cluster, std::vector<ProbeSample> samples,
                              double trained_at_s = 0.0, const FitOptions& options = {});

// Predicted (energy_j, runtime_s) for the task's requirements on (type,
// governor), both clamped below at kPredictionFloor.
inline constexpr double kPredictionFloor = 1e-6;
std::pair<double, double> predict(const PredictorSet& predictors, const std::string& type_id,
                                  GovernorMode governor, const Task& task);

// Refits on the union of old and new samples when now_s - trained_at_s >=
// period_s; otherwise returns the set unchanged.
PredictorSet maybe_refresh(const PredictorSet& predictors, double now_s,
                           const std::vector<ProbeSample>& new_samples, double period_s,
                           const FitOptions& options = {});

// Held-out validation against the KMeans ground truth, per (type, governor).
struct ValidationResult {
  double max_rel_runtime_err = 0.0;
  double max_rel_energy_err = 0.0;
};
ValidationResult validate_predictors(const Cluster& cluster, const PredictorSet& predictors,
                                     const std::vector<ProbeGridPoint>& heldout);

// Persistence. Samples: CSV with mandatory header, '.' decimal separator,
// LF endings. Models: JSON keyed "type:governor:target".
std::string probe_samples_to_csv(const std::vector<ProbeSample>& samples);
std::vector<ProbeSample> probe_samples_from_csv(const std::string& text);
std::string predictors_to_json_text(const PredictorSet& predictors);
PredictorSet predictors_from_json_text(const std::string& text);

}  // namespace heatsim

#endif  // HEATSIM_PREDICTOR_HPP_
