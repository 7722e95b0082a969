// Shared test fixtures: the default three-service registry and helpers for
// building small synthetic services and ground-truth-derived models.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "rask/planner.hpp"
#include "rask/registry.hpp"
#include "rask/simenv.hpp"

namespace fixtures {

inline std::string scenario_path(const std::string& file) {
  return std::string(RASK_SCENARIO_DIR) + "/" + file;
}

inline rask::Registry default_registry() {
  return rask::load_registry_file(scenario_path("registry_default.json"));
}

struct ParamSpec {
  std::string name;
  double min, max;
  rask::StepRule step = rask::StepRule::Continuous;
  double step_k = 1.0;
};

inline rask::ServiceDescriptor make_service(
    const std::string& name, const std::vector<ParamSpec>& params,
    const std::vector<rask::SloDefinition>& slos,
    const std::vector<std::string>& features,
    const std::map<std::string, double>& defaults, double default_rps = 0.0) {
  rask::ServiceDescriptor s;
  s.id = {"host", name, name + "-0"};
  for (const auto& p : params)
    s.params.push_back({p.name, "/" + p.name, p.min, p.max, p.step, p.step_k, ""});
  s.slos = slos;
  s.relation.features = features;
  s.defaults = defaults;
  s.default_rps = default_rps;
  return s;
}

// A hand-built linear model tp_max = intercept + slope * feature[0], with more
// features allowed but ignored (zero weight). Bypasses fit() so planner tests
// do not depend on the regression module's behavior.
inline rask::RegressionModel linear_model(const std::vector<std::string>& features,
                                          double intercept, double slope) {
  rask::RegressionModel m;
  m.degree = m.requested_degree = 1;
  m.feature_names = features;
  m.scaler.mean.assign(features.size(), 0.0);
  m.scaler.scale.assign(features.size(), 1.0);
  m.weights.assign(features.size() + 1, 0.0);
  m.weights[0] = intercept;
  m.weights[1] = slope;
  return m;
}

// Models fitted on dense ground-truth samples of every legal region; solver
// and grid oracle then consume the same fitted surface.
inline rask::ModelSet fit_ground_truth_models(const rask::Registry& reg,
                                              int degree = 2,
                                              int points_per_param = 8) {
  rask::ModelSet models;
  for (const auto& s : reg.services) {
    const auto gt = rask::GroundTruthModel::from_json(s.sim_model);
    rask::ObservationTable table;
    table.service_key = s.id.key();
    table.feature_names = s.relation.features;

    std::vector<std::vector<double>> grids;
    for (const auto& f : s.relation.features) {
      const auto* p = s.find_param(f);
      std::vector<double> g;
      for (int i = 0; i < points_per_param; ++i) {
        const double raw = p->min + (p->max - p->min) * i / (points_per_param - 1.0);
        const double v = rask::clip_assignment(*p, raw);
        if (g.empty() || v != g.back()) g.push_back(v);
      }
      grids.push_back(std::move(g));
    }
    std::vector<size_t> idx(grids.size(), 0);
    while (true) {
      std::map<std::string, double> config = s.defaults;
      std::vector<double> x;
      for (size_t i = 0; i < grids.size(); ++i) {
        config[s.relation.features[i]] = grids[i][idx[i]];
        x.push_back(grids[i][idx[i]]);
      }
      table.add(x, gt.tp_max(config));
      size_t i = 0;
      for (; i < idx.size(); ++i) {
        if (++idx[i] < grids[i].size()) break;
        idx[i] = 0;
      }
      if (i == idx.size()) break;
    }
    models[s.id.key()] = rask::fit(table, degree);
  }
  return models;
}

inline rask::RpsMap default_rps_map(const rask::Registry& reg) {
  rask::RpsMap rps;
  for (const auto& s : reg.services) rps[s.id.key()] = s.default_rps;
  return rps;
}

}  // namespace fixtures
