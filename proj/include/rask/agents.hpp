#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rask/error.hpp"
#include "rask/planner.hpp"
#include "rask/regression.hpp"
#include "rask/registry.hpp"
#include "rask/simenv.hpp"
#include "rask/slo.hpp"

namespace rask {

using Observations = std::map<std::string, MetricsRow>;  // by service key

// Controller interface: one full assignment per autoscaling cycle. Any
// implementation with this signature plugs into run_agent (the slot a future
// RL baseline would fill).
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual int cycle_s() const { return 10; }
  virtual Assignment decide(const Observations& obs, std::uint64_t seed) = 0;

  // Exact objective value of the last solver output, when one exists.
  double last_objective() const { return last_objective_; }

 protected:
  double last_objective_ = std::numeric_limits<double>::quiet_NaN();
};

struct RaskConfig {
  int xi = 20;
  double eta = 0.0;
  int cycle_s = 10;
  std::optional<int> fixed_degree = 2;  // nullopt: per-service degree selection
  bool caching = true;
  double sigma_exponent = 1.0;  // exponent in sigma = (a * eta)^e
  int dims = 3;                 // 1: cores; 2: + quality; 3: + model_size
  int fit_window = 0;           // 0: fit on all rows; else last N rows per replica
  SolverBudget budget;
  bool eta_decay = false;       // off by default; linear decay when enabled
  int eta_decay_cycles = 60;
};

inline std::set<std::string> movable_params_for_dims(int dims) {
  if (dims < 1 || dims > 3)
    throw Error("agents.bad_dims", "dims must lie in {1, 2, 3}");
  std::set<std::string> movable = {"cores"};
  if (dims >= 2) movable.insert("quality");
  if (dims >= 3) movable.insert("model_size");
  return movable;
}

// Restrict a registry view so that non-movable parameters are pinned to their
// defaults; the planner then treats them as constants.
inline std::vector<ServiceDescriptor> planning_view(
    const std::vector<ServiceDescriptor>& services,
    const std::set<std::string>& movable) {
  std::vector<ServiceDescriptor> view = services;
  for (auto& s : view)
    for (auto& p : s.params)
      if (!movable.count(p.name)) {
        p.min = s.defaults.at(p.name);
        p.max = p.min;
        p.step = StepRule::Continuous;
      }
  return view;
}

class RaskAgent : public Agent {
 public:
  RaskAgent(const Registry& registry, RaskConfig config)
      : registry_(registry),
        config_(std::move(config)),
        services_(planning_view(registry.services, movable_params_for_dims(config_.dims))) {
    if (config_.cycle_s < 1)
      throw Error("agents.bad_cycle", "cycle_s must be >= 1");
    for (const auto& s : registry_.services) {
      ObservationTable t;
      t.service_key = s.id.key();
      t.feature_names = s.relation.features;
      tables_.emplace(s.id.key(), std::move(t));
    }
  }

  std::string name() const override { return "rask"; }
  int cycle_s() const override { return config_.cycle_s; }
  int rounds() const { return rounds_; }
  const std::map<std::string, ObservationTable>& tables() const { return tables_; }
  const ModelSet& models() const { return models_; }
  const PlannerCache& cache() const { return cache_; }

  Assignment decide(const Observations& obs, std::uint64_t seed) override {
    RpsMap rps;
    for (const auto& s : registry_.services) {
      auto it = obs.find(s.id.key());
      if (it == obs.end())
        throw Error("agents.missing_observation", "no observation for " + s.id.key());
      const auto& row = it->second;
      std::vector<double> x;
      for (const auto& f : s.relation.features) x.push_back(row.at(f));
      tables_.at(s.id.key()).add(std::move(x), row.at("tp_max"));
      rps[s.id.key()] = row.at("rps");
    }

    if (rounds_ < config_.xi) {
      ++rounds_;
      last_objective_ = std::numeric_limits<double>::quiet_NaN();
      return rand_param(services_, registry_.constraints, seed);
    }
    ++rounds_;

    try {
      refit_models();
      const std::optional<Assignment> warm =
          config_.caching ? cache_.last_assignment : std::nullopt;
      Assignment solved = solve(models_, services_, registry_.constraints, rps,
                                config_.budget, warm, seed);
      last_objective_ = objective(solved, models_, services_, rps);
      cache_.last_assignment = solved;
      return add_noise(solved, services_, registry_.constraints, effective_eta(),
                       seed + 1, config_.sigma_exponent);
    } catch (const Error&) {
      // Degraded mode: a controller must always answer; re-apply the last
      // known-good assignment (or the defaults) when fit/solve fails.
      last_objective_ = std::numeric_limits<double>::quiet_NaN();
      return cache_.last_assignment ? *cache_.last_assignment
                                    : default_assignment(services_);
    }
  }

 private:
  double effective_eta() const {
    if (!config_.eta_decay) return config_.eta;
    const int past = rounds_ - config_.xi;
    const double f = 1.0 - static_cast<double>(past) / config_.eta_decay_cycles;
    return config_.eta * std::max(0.0, f);
  }

  void refit_models() {
    // One regression function per service type, fitted on the pooled rows of
    // all replicas; every replica still receives its own assignment.
    std::map<std::string, std::vector<const ServiceDescriptor*>> by_type;
    for (const auto& s : registry_.services) by_type[s.id.service_type].push_back(&s);
    for (const auto& [type, members] : by_type) {
      ObservationTable pooled;
      pooled.service_key = type;
      pooled.feature_names = members.front()->relation.features;
      for (const auto* s : members) {
        const auto& rows = tables_.at(s->id.key()).rows;
        const size_t skip =
            config_.fit_window > 0 && rows.size() > static_cast<size_t>(config_.fit_window)
                ? rows.size() - config_.fit_window
                : 0;
        pooled.rows.insert(pooled.rows.end(), rows.begin() + skip, rows.end());
      }

      const int degree = degree_for(*members.front(), pooled);
      RegressionModel model = fit(pooled, degree);
      for (const auto* s : members) {
        model.service_key = s->id.key();
        models_[s->id.key()] = model;
      }
    }
  }

  int degree_for(const ServiceDescriptor& s, const ObservationTable& pooled) const {
    if (s.relation.degree_override) return *s.relation.degree_override;
    if (config_.fixed_degree) return *config_.fixed_degree;
    // Auto policy: hold out 20% once enough rows exist, default to 2 before.
    const std::vector<int> candidates = {1, 2, 3, 4, 5, 6};
    const size_t needed =
        5 * poly::monomial_count(pooled.arity(), candidates.back()) / 4 + 2;
    if (pooled.rows.size() < needed) return 2;
    return select_degree(pooled, candidates, 0.2, 17);
  }

  Registry registry_;
  RaskConfig config_;
  std::vector<ServiceDescriptor> services_;  // planning view (dims applied)
  std::map<std::string, ObservationTable> tables_;
  ModelSet models_;
  PlannerCache cache_;
  int rounds_ = 0;
};

struct VpaConfig {
  double slack_low = 0.05;
  double slack_high = 0.15;
  double step_cores = 0.25;
  int cycle_s = 10;
};

// Utilization-band baseline: keeps CPU usage between (1 - slack_high) and
// (1 - slack_low) of the allocation by stepping cores up or down; it never
// touches service-level parameters.
class VpaAgent : public Agent {
 public:
  VpaAgent(const Registry& registry, VpaConfig config = {})
      : registry_(registry), config_(config) {
    if (!(config_.slack_low > 0) || !(config_.slack_low < config_.slack_high) ||
        !(config_.slack_high < 1))
      throw Error("agents.bad_vpa", "need 0 < slack_low < slack_high < 1");
  }

  std::string name() const override { return "vpa"; }
  int cycle_s() const override { return config_.cycle_s; }

  Assignment decide(const Observations& obs, std::uint64_t /*seed*/) override {
    const auto& resource = registry_.constraints.resource_name;
    Assignment a;
    double total = 0.0;
    struct Claim {
      const ServiceDescriptor* service;
      double cores;
    };
    std::vector<Claim> wants_more;

    for (const auto& s : registry_.services) {
      const auto& row = obs.at(s.id.key());
      for (const auto& p : s.params)
        a.set(s.id.key(), p.name, clip_assignment(p, row.at(p.name)));

      const auto* cores_param = s.find_param(resource);
      if (cores_param == nullptr) continue;
      double cores = a.at(s.id.key(), resource);
      const double util = row.at("utilization");
      if (util < 1.0 - config_.slack_high) {
        cores = std::max(cores_param->min, cores - config_.step_cores);
        a.set(s.id.key(), resource, cores);
      } else if (util > 1.0 - config_.slack_low) {
        wants_more.push_back({&s, cores});
      }
      total += a.at(s.id.key(), resource);
    }

    // Increases are granted in ascending order of current allocation, only
    // while capacity remains ("reassigned once released").
    std::stable_sort(wants_more.begin(), wants_more.end(),
                     [](const Claim& x, const Claim& y) { return x.cores < y.cores; });
    for (const auto& claim : wants_more) {
      const auto* p = claim.service->find_param(resource);
      const double next = std::min(p->max, claim.cores + config_.step_cores);
      const double delta = next - claim.cores;
      if (delta > 0 && total + delta <= registry_.constraints.capacity + 1e-9) {
        a.set(claim.service->id.key(), resource, next);
        total += delta;
      }
    }
    return a;
  }

 private:
  Registry registry_;
  VpaConfig config_;
};

class NoopAgent : public Agent {
 public:
  explicit NoopAgent(const Registry& registry, int cycle_s = 10)
      : defaults_(default_assignment(registry.services)), cycle_s_(cycle_s) {}
  std::string name() const override { return "noop"; }
  int cycle_s() const override { return cycle_s_; }
  Assignment decide(const Observations&, std::uint64_t) override { return defaults_; }

 private:
  Assignment defaults_;
  int cycle_s_;
};

struct DecisionRecord {
  int cycle = 0;
  Assignment assignment;
  double objective_estimate = 0.0;
  double runtime_ms = 0.0;          // wall clock; reporting only, never control
  double global_fulfillment = 0.0;  // measured over the cycle just finished
  double load = 0.0;                // relative request load of the shaped traces
  std::map<std::string, double> per_service_fulfillment;
};

struct RunLog {
  std::vector<DecisionRecord> decisions;
};

// Drive an environment for `duration_s` simulated seconds, invoking the agent
// every cycle on 5-second-window observations.
inline RunLog run_agent(Environment& env, Agent& agent, std::int64_t duration_s,
                        std::uint64_t base_seed = 0,
                        const std::map<std::string, std::string>* pattern_kinds = nullptr) {
  const int cycle = agent.cycle_s();
  if (duration_s % cycle != 0)
    throw Error("agents.bad_duration", "duration must be a multiple of the cycle");

  RunLog out;
  int cycle_idx = 0;
  for (std::int64_t t = 0; t < duration_s; ++t) {
    env.step();
    if ((t + 1) % cycle != 0) continue;

    Observations obs;
    std::vector<double> per_service;
    DecisionRecord rec;
    rec.cycle = cycle_idx;
    rec.load = 0.0;
    bool any_shaped = false;
    for (const auto& s : env.registry().services) {
      const auto key = s.id.key();
      obs[key] = env.observe(key, 5);
      const double sf = slo::service_fulfillment(s.slos, obs[key]);
      per_service.push_back(sf);
      rec.per_service_fulfillment[key] = sf;
      const bool shaped =
          pattern_kinds == nullptr || pattern_kinds->at(key) != "constant";
      if (shaped && env.max_rps(key) > 0) {
        rec.load = std::max(rec.load, obs[key].at("rps") / env.max_rps(key));
        any_shaped = true;
      }
    }
    if (!any_shaped) rec.load = 1.0;
    rec.global_fulfillment = slo::global_fulfillment(per_service);

    const auto t0 = std::chrono::steady_clock::now();
    rec.assignment = agent.decide(obs, base_seed + static_cast<std::uint64_t>(cycle_idx));
    const auto t1 = std::chrono::steady_clock::now();
    rec.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rec.objective_estimate = agent.last_objective();

    env.apply_assignment(rec.assignment);
    out.decisions.push_back(std::move(rec));
    ++cycle_idx;
  }
  return out;
}

}  // namespace rask
