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

#include "heatsim/predictor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "heatsim/error.hpp"
#include "heatsim/rng.hpp"
#include "heatsim/util.hpp"

namespace heatsim {

using nlohmann::json;

const char* to_string(ProbeWorkload workload) {
  return workload == ProbeWorkload::KMeansLike ? "kmeans" : "matmul";
}

const char* to_string(ModelTarget target) {
  return target == ModelTarget::EnergyJ ? "energy_j" : "runtime_s";
}

ProbeWorkload workload_from_string(const std::string& name) {
  if (name == "kmeans") return ProbeWorkload::KMeansLike;
  if (name == "matmul") return ProbeWorkload::MatMulLike;
  throw Error("ParseError", "unknown workload '" + name + "'");
}

ModelTarget target_from_string(const std::string& name) {
  if (name == "energy_j") return ModelTarget::EnergyJ;
  if (name == "runtime_s") return ModelTarget::RuntimeS;
  throw Error("ParseError", "unknown target '" + name + "'");
}

std::vector<ProbeGridPoint> default_probe_grid() {
  std::vector<ProbeGridPoint> grid;
  for (double cpu : {1.0, 2.0}) {
    for (std::int64_t mem : {std::int64_t(256), std::int64_t(512)}) {
      for (std::int64_t iters : {std::int64_t(250), std::int64_t(500), std::int64_t(1000)}) {
        grid.push_back({cpu, mem, iters});
      }
    }
  }
  return grid;
}

const std::vector<std::string>& regression_feature_names() {
  static const std::vector<std::string> names = {"cpu_req", "mem_req_mib", "iterations"};
  return names;
}

double LinearModel::predict(double cpu_req, double mem_req_mib, double iterations) const {
  return coefficients[0] + coefficients[1] * cpu_req + coefficients[2] * mem_req_mib +
         coefficients[3] * iterations;
}

const LinearModel& PredictorSet::model(const std::string& type_id, GovernorMode governor,
                                       ModelTarget target) const {
  auto it = models.find(std::make_tuple(type_id, governor, target));
  if (it == models.end()) {
    throw Error("ModelMissing", type_id + ":" + to_string(governor) + ":" + to_string(target));
  }
  return it->second;
}

bool PredictorSet::has_model(const std::string& type_id, GovernorMode governor,
                             ModelTarget target) const {
  return models.count(std::make_tuple(type_id, governor, target)) > 0;
}

std::vector<ProbeSample> run_probing(const Cluster& cluster,
                                     const std::vector<ProbeGridPoint>& grid,
                                     double noise_sd_rel, std::uint64_t seed,
                                     double matmul_scale) {
  if (grid.empty()) throw Error("EmptyProbeGrid", "probe parameter grid is empty");
  if (noise_sd_rel < 0) throw Error("InvalidNoise", "noise_sd_rel must be non-negative");

  Rng rng(seed);
  std::vector<ProbeSample> samples;
  samples.reserve(cluster.specs.size() * 2 * 2 * grid.size());

  // Fixed iteration order (types in config order, powersave before
  // performance, kmeans before matmul, grid in given order) pins the draw
  // sequence, so a seed fully determines every measurement.
  for (const auto& spec : cluster.specs) {
    for (GovernorMode governor : {GovernorMode::Powersave, GovernorMode::Performance}) {
      for (ProbeWorkload workload : {ProbeWorkload::KMeansLike, ProbeWorkload::MatMulLike}) {
        for (const auto& point : grid) {
          // Matmul work is recorded in kmeans-equivalent iterations, so both
          // workloads obey runtime = per_iteration * iterations exactly.
          const std::int64_t iterations =
              workload == ProbeWorkload::KMeansLike
                  ? point.iterations
                  : std::llround(double(point.iterations) * matmul_scale);
          const double true_runtime = spec.runtime_s(governor, double(iterations));
          const double true_energy = spec.task_energy_j(governor, double(iterations));
          const double rt_mult = 1.0 + noise_sd_rel * rng.gaussian();
          const double en_mult = 1.0 + noise_sd_rel * rng.gaussian();

          ProbeSample sample;
          sample.type_id = spec.type_id;
          sample.governor = governor;
          sample.workload = workload;
          sample.cpu_req = point.cpu_req;
          sample.mem_req_mib = point.mem_req_mib;
          sample.iterations = iterations;
          sample.measured_runtime_s = std::max(true_runtime * rt_mult, 1e-9);
          sample.measured_energy_j = std::max(true_energy * en_mult, 1e-9);
          samples.push_back(std::move(sample));
        }
      }
    }
  }
  return samples;
}

LinearModel fit(const std::vector<ProbeSample>& samples, const std::string& type_id,
                GovernorMode governor, ModelTarget target, const FitOptions& options) {
  std::vector<const ProbeSample*> rows;
  for (const auto& s : samples) {
    if (s.type_id == type_id && s.governor == governor) rows.push_back(&s);
  }
  const int d = int(regression_feature_names().size()) + 1;
  if (int(rows.size()) < d) {
    throw Error("Underdetermined", type_id + ":" + to_string(governor) + " has " +
                                       std::to_string(rows.size()) + " samples, needs " +
                                       std::to_string(d));
  }

  const Eigen::Index n = Eigen::Index(rows.size());
  Eigen::MatrixXd design(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ProbeSample& s = *rows[i];
    design(i, 0) = 1.0;
    design(i, 1) = s.cpu_req;
    design(i, 2) = double(s.mem_req_mib);
    design(i, 3) = double(s.iterations);
    y(i) = target == ModelTarget::EnergyJ ? s.measured_energy_j : s.measured_runtime_s;
  }

  Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * y;

  // Condition estimate of the Gram matrix; the ridge fallback only engages
  // when it is numerically singular.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  const double cond = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (cond > options.cond_threshold) {
    if (!options.ridge_enabled) {
      throw Error("SingularDesign", type_id + ":" + to_string(governor) +
                                        " Gram condition " + format_double(cond));
    }
    const double lambda = options.ridge_scale * gram.trace() / double(d);
    gram += lambda * Eigen::MatrixXd::Identity(d, d);
  }

  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

  LinearModel model;
  model.coefficients.assign(beta.data(), beta.data() + d);
  model.feature_names = regression_feature_names();
  model.target = target;
  model.n_samples = int(rows.size());
  model.residual_sse = (design * beta - y).squaredNorm();
  return model;
}

PredictorSet train_predictors(const Cluster& cluster, std::vector<ProbeSample> samples,
                              double trained_at_s, const FitOptions& options) {
  PredictorSet set;
  set.trained_at_s = trained_at_s;
  for (const auto& spec : cluster.specs) {
    for (GovernorMode governor : {GovernorMode::Powersave, GovernorMode::Performance}) {
      for (ModelTarget target : {ModelTarget::EnergyJ, ModelTarget::RuntimeS}) {
        set.models[std::make_tuple(spec.type_id, governor, target)] =
            fit(samples, spec.type_id, governor, target, options);
      }
    }
  }
  set.training_samples = std::move(samples);
  return set;
}

std::pair<double, double> predict(const PredictorSet& predictors, const std::string& type_id,
                                  GovernorMode governor, const Task& task) {
  const LinearModel& energy = predictors.model(type_id, governor, ModelTarget::EnergyJ);
  const LinearModel& runtime = predictors.model(type_id, governor, ModelTarget::RuntimeS);
  const double e = energy.predict(task.cpu_req, double(task.mem_req_mib),
                                  double(task.iterations_total));
  const double r = runtime.predict(task.cpu_req, double(task.mem_req_mib),
                                   double(task.iterations_total));
  return {std::max(e, kPredictionFloor), std::max(r, kPredictionFloor)};
}

PredictorSet maybe_refresh(const PredictorSet& predictors, double now_s,
                           const std::vector<ProbeSample>& new_samples, double period_s,
                           const FitOptions& options) {
  if (period_s <= 0) throw Error("InvalidPeriod", "period_s must be positive");
  if (now_s - predictors.trained_at_s < period_s) return predictors;

  std::vector<ProbeSample> all = predictors.training_samples;
  all.insert(all.end(), new_samples.begin(), new_samples.end());

  PredictorSet refreshed;
  refreshed.trained_at_s = now_s;
  for (const auto& [key, model] : predictors.models) {
    refreshed.models[key] =
        fit(all, std::get<0>(key), std::get<1>(key), std::get<2>(key), options);
  }
  refreshed.training_samples = std::move(all);
  return refreshed;
}

ValidationResult validate_predictors(const Cluster& cluster, const PredictorSet& predictors,
                                     const std::vector<ProbeGridPoint>& heldout) {
  ValidationResult result;
  Task probe;
  probe.task_id = "validation";
  probe.iterations_total = 1;
  probe.cpu_req = 1;
  probe.mem_req_mib = 1;
  for (const auto& spec : cluster.specs) {
    for (GovernorMode governor : {GovernorMode::Powersave, GovernorMode::Performance}) {
      for (const auto& point : heldout) {
        probe.cpu_req = point.cpu_req;
        probe.mem_req_mib = point.mem_req_mib;
        probe.iterations_total = point.iterations;
        const auto [energy, runtime] = predict(predictors, spec.type_id, governor, probe);
        const double true_runtime = spec.runtime_s(governor, double(point.iterations));
        const double true_energy = spec.task_energy_j(governor, double(point.iterations));
        result.max_rel_runtime_err =
            std::max(result.max_rel_runtime_err, std::abs(runtime - true_runtime) / true_runtime);
        result.max_rel_energy_err =
            std::max(result.max_rel_energy_err, std::abs(energy - true_energy) / true_energy);
      }
    }
  }
  return result;
}

std::string probe_samples_to_csv(const std::vector<ProbeSample>& samples) {
  std::string out =
      "type_id,governor,workload,cpu_req,mem_req_mib,iterations,"
      "measured_runtime_s,measured_energy_j\n";
  for (const auto& s : samples) {
    out += s.type_id;
    out += ',';
    out += to_string(s.governor);
    out += ',';
    out += to_string(s.workload);
    out += ',';
    out += format_double(s.cpu_req);
    out += ',';
    out += std::to_string(s.mem_req_mib);
    out += ',';
    out += std::to_string(s.iterations);
    out += ',';
    out += format_double(s.measured_runtime_s);
    out += ',';
    out += format_double(s.measured_energy_j);
    out += '\n';
  }
  return out;
}

std::vector<ProbeSample> probe_samples_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error("ParseError", "probe CSV: missing header");
  std::vector<ProbeSample> samples;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 8) throw Error("ParseError", "probe CSV: bad field count");
    ProbeSample s;
    s.type_id = f[0];
    s.governor = governor_from_string(f[1]);
    s.workload = workload_from_string(f[2]);
    s.cpu_req = parse_double(f[3], "probe CSV cpu_req");
    s.mem_req_mib = parse_int(f[4], "probe CSV mem_req_mib");
    s.iterations = parse_int(f[5], "probe CSV iterations");
    s.measured_runtime_s = parse_double(f[6], "probe CSV runtime");
    s.measured_energy_j = parse_double(f[7], "probe CSV energy");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string predictors_to_json_text(const PredictorSet& predictors) {
  json models = json::object();
  for (const auto& [key, model] : predictors.models) {
    const std::string name = std::get<0>(key) + ":" + to_string(std::get<1>(key)) + ":" +
                             to_string(std::get<2>(key));
    models[name] = json{{"coefficients", model.coefficients},
                        {"feature_names", model.feature_names},
                        {"target", to_string(model.target)},
                        {"n_samples", model.n_samples},
                        {"residual_sse", model.residual_sse}};
  }
  return json{{"trained_at_s", predictors.trained_at_s}, {"models", models}}.dump(2) + "\n";
}

PredictorSet predictors_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("ParseError", std::string("models JSON: ") + e.what());
  }
  PredictorSet set;
  set.trained_at_s = j.value("trained_at_s", 0.0);
  for (const auto& [name, jm] : j.at("models").items()) {
    const auto first = name.find(':');
    const auto second = name.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw Error("ParseError", "models JSON: bad key '" + name + "'");
    }
    const std::string type_id = name.substr(0, first);
    const GovernorMode governor = governor_from_string(name.substr(first + 1, second - first - 1));
    const ModelTarget target = target_from_string(name.substr(second + 1));
    LinearModel model;
    model.coefficients = jm.at("coefficients").get<std::vector<double>>();
    model.feature_names = jm.at("feature_names").get<std::vector<std::string>>();
    model.target = target;
    model.n_samples = jm.value("n_samples", 0);
    model.residual_sse = jm.value("residual_sse", 0.0);
    if (model.coefficients.size() != model.feature_names.size() + 1) {
      throw Error("ParseError", "models JSON: coefficient count mismatch in '" + name + "'");
    }
    set.models[std::make_tuple(type_id, governor, target)] = std::move(model);
  }
  return set;
}

}  // namespace heatsim
