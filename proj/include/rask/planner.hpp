#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rask/error.hpp"
#include "rask/regression.hpp"
#include "rask/registry.hpp"
#include "rask/slo.hpp"

namespace rask {

// A complete mapping service key -> parameter name -> value, in the
// continuous relaxation (quantization happens at the environment boundary).
struct Assignment {
  std::map<std::string, std::map<std::string, double>> values;

  double at(const std::string& service_key, const std::string& param) const {
    auto s = values.find(service_key);
    if (s == values.end() || !s->second.count(param))
      throw Error("planner.incomplete_assignment",
                  "assignment misses " + service_key + ":" + param);
    return s->second.at(param);
  }

  void set(const std::string& service_key, const std::string& param, double v) {
    values[service_key][param] = v;
  }

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [svc, params] : values)
      for (const auto& [name, v] : params) os << svc << ":" << name << "=" << v << ";";
    return os.str();
  }

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct SolverBudget {
  int max_iterations = 80;
  double objective_tolerance = 3e-7;  // per service term
  double constraint_tolerance = 1e-6;
  double finite_difference_step = 1e-3;  // relative to each parameter's range
};

struct PlannerCache {
  std::optional<Assignment> last_assignment;
};

using ModelSet = std::map<std::string, RegressionModel>;  // by service key
using RpsMap = std::map<std::string, double>;             // by service key

inline Assignment default_assignment(const std::vector<ServiceDescriptor>& services) {
  Assignment a;
  for (const auto& s : services)
    for (const auto& p : s.params) a.set(s.id.key(), p.name, s.defaults.at(p.name));
  return a;
}

namespace detail {

// Scale the above-minimum excess of the shared resource proportionally so
// that the capacity holds with equality when the raw values overshoot it.
inline void project_resource(Assignment& a, const std::vector<ServiceDescriptor>& services,
                             const GlobalConstraints& c) {
  double sum = 0.0, min_sum = 0.0;
  std::vector<std::pair<const ServiceDescriptor*, const ElasticityParameter*>> holders;
  for (const auto& s : services)
    if (const auto* p = s.find_param(c.resource_name)) {
      holders.emplace_back(&s, p);
      sum += a.at(s.id.key(), p->name);
      min_sum += p->min;
    }
  if (sum <= c.capacity || holders.empty()) return;
  if (min_sum > c.capacity + 1e-9)
    throw Error("planner.infeasible", "minimum bounds exceed capacity");
  const double scale = (c.capacity - min_sum) / (sum - min_sum);
  for (auto& [s, p] : holders) {
    const double v = a.at(s->id.key(), p->name);
    a.set(s->id.key(), p->name, p->min + (v - p->min) * scale);
  }
}

// Smooth stand-in for min(x, 1); beta <= 0 selects the exact kinked form.
inline double soft_min1(double x, double beta) {
  if (beta <= 0.0) return x > 1.0 ? 1.0 : x;
  // -(1/beta) * log(exp(-beta*x) + exp(-beta)), computed via logsumexp
  const double a = -beta * x, b = -beta;
  const double m = std::max(a, b);
  return -(m + std::log(std::exp(a - m) + std::exp(b - m))) / beta;
}

// Per-service objective term: weighted SLO fulfillment where parameter SLOs
// read the assignment directly and the completion SLO reads the regression
// model's throughput estimate against the current request rate.
struct ServiceObjective {
  const ServiceDescriptor* service = nullptr;
  const RegressionModel* model = nullptr;
  double rps = 0.0;

  double term(const std::map<std::string, double>& params, double beta) const {
    double acc = 0.0, wsum = 0.0;
    for (const auto& q : service->slos) {
      double phi;
      if (q.variable == "completion") {
        std::vector<double> x;
        x.reserve(service->relation.features.size());
        for (const auto& f : service->relation.features) x.push_back(params.at(f));
        // Smoothed mode sees the raw prediction: the clamp at zero would
        // otherwise flatten the gradient everywhere the fit extrapolates
        // negative throughput.
        const double tp = beta > 0.0 ? model->predict_raw(x) : model->predict(x);
        phi = rps > 0.0 ? soft_min1(tp / (rps * q.target), beta) : 1.0;
      } else {
        if (!(q.target > 0.0))
          throw Error("slo.bad_target", "SLO target must be positive");
        phi = soft_min1(params.at(q.variable) / q.target, beta);
      }
      acc += phi * q.weight;
      wsum += q.weight;
    }
    return acc / wsum;
  }
};

inline std::vector<ServiceObjective> build_objective(
    const std::vector<ServiceDescriptor>& services, const ModelSet& models,
    const RpsMap& rps) {
  std::vector<ServiceObjective> terms;
  for (const auto& s : services) {
    auto m = models.find(s.id.key());
    if (m == models.end())
      throw Error("planner.missing_model", "no regression model for " + s.id.key());
    auto r = rps.find(s.id.key());
    if (r == rps.end())
      throw Error("planner.missing_rps", "no request rate for " + s.id.key());
    terms.push_back({&s, &m->second, r->second});
  }
  return terms;
}

}  // namespace detail

// Uniform draw inside all bounds; the shared resource is rescaled onto the
// capacity constraint when the raw draw overshoots it.
inline Assignment rand_param(const std::vector<ServiceDescriptor>& services,
                             const GlobalConstraints& constraints,
                             std::uint64_t seed) {
  double min_sum = 0.0;
  for (const auto& s : services)
    if (const auto* p = s.find_param(constraints.resource_name)) min_sum += p->min;
  if (min_sum > constraints.capacity + 1e-9)
    throw Error("planner.infeasible", "minimum bounds exceed capacity");

  std::mt19937_64 rng(seed);
  Assignment a;
  for (const auto& s : services)
    for (const auto& p : s.params) {
      double v = p.min;
      if (p.max - p.min > 1e-12) {
        std::uniform_real_distribution<double> dist(p.min, p.max);
        v = dist(rng);
      }
      a.set(s.id.key(), p.name, v);
    }
  detail::project_resource(a, services, constraints);
  return a;
}

// Exact (kinked) Eq.-style objective value of an assignment: the sum of
// per-service weighted fulfillments.
inline double objective(const Assignment& a, const ModelSet& models,
                        const std::vector<ServiceDescriptor>& services,
                        const RpsMap& rps) {
  const auto terms = detail::build_objective(services, models, rps);
  double total = 0.0;
  for (const auto& t : terms) total += t.term(a.values.at(t.service->id.key()), 0.0);
  return total;
}

// Gaussian action noise: each value is shifted by N(0, sigma) with
// sigma = (value * eta) ^ sigma_exponent, then pushed back into bounds and
// onto the capacity constraint. eta = 0 is an exact identity.
inline Assignment add_noise(const Assignment& assignment,
                            const std::vector<ServiceDescriptor>& services,
                            const GlobalConstraints& constraints, double eta,
                            std::uint64_t seed, double sigma_exponent = 1.0) {
  if (eta < 0.0)
    throw Error("planner.bad_eta", "noise ratio must be >= 0");
  if (eta == 0.0) return assignment;

  std::mt19937_64 rng(seed);
  Assignment a = assignment;
  for (const auto& s : services)
    for (const auto& p : s.params) {
      if (p.max - p.min <= 1e-12) continue;  // pinned parameter
      double v = a.at(s.id.key(), p.name);
      const double sigma = std::pow(std::abs(v) * eta, sigma_exponent);
      if (sigma > 0.0) {
        std::normal_distribution<double> dist(0.0, sigma);
        v += dist(rng);
      }
      a.set(s.id.key(), p.name, std::clamp(v, p.min, p.max));
    }
  detail::project_resource(a, services, constraints);
  return a;
}

namespace detail {

struct Var {
  size_t service = 0;  // index into services
  std::string param;
  double min = 0.0, max = 0.0;
  bool resource = false;
  double range() const { return max - min; }
};

// Euclidean projection onto { x in [0,1]^n : sum over resource vars of
// (min + x * range) <= capacity_budget }, via bisection on the multiplier.
class FeasibleSet {
 public:
  FeasibleSet(std::vector<Var> vars, double capacity, double fixed_resource)
      : vars_(std::move(vars)) {
    budget_ = capacity - fixed_resource;
    for (const auto& v : vars_)
      if (v.resource) budget_ -= v.min;
    double min_possible = 0.0;  // all resource vars at their minimum
    if (budget_ < min_possible - 1e-9)
      throw Error("planner.infeasible", "fixed allocations exceed capacity");
  }

  const std::vector<Var>& vars() const { return vars_; }

  double resource_load(const std::vector<double>& x) const {
    double sum = 0.0;
    for (size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].resource) sum += x[i] * vars_[i].range();
    return sum;
  }

  void project(std::vector<double>& x) const {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    if (resource_load(x) <= budget_ + 1e-12) return;
    double lo = 0.0, hi = 1.0;
    auto load_at = [&](double lambda) {
      double sum = 0.0;
      for (size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i].resource) {
          const double r = vars_[i].range();
          sum += std::clamp(x[i] - lambda * r, 0.0, 1.0) * r;
        }
      return sum;
    };
    while (load_at(hi) > budget_) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (load_at(mid) > budget_ ? lo : hi) = mid;
    }
    for (size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].resource)
        x[i] = std::clamp(x[i] - hi * vars_[i].range(), 0.0, 1.0);
  }

 private:
  std::vector<Var> vars_;
  double budget_ = 0.0;
};

}  // namespace detail

// Projected-gradient ascent on the smoothed objective (finite-difference
// gradients, backtracking line search, monotone accepts). Feasible by
// construction, deterministic given the seed, and never worse than the
// starting point. The true kinked objective is only approximated inside the
// solver; callers report exact values via objective().
inline Assignment solve(const ModelSet& models,
                        const std::vector<ServiceDescriptor>& services,
                        const GlobalConstraints& constraints, const RpsMap& rps,
                        const SolverBudget& budget,
                        const std::optional<Assignment>& warm_start,
                        std::uint64_t seed, double beta = 50.0) {
  const auto terms = detail::build_objective(services, models, rps);

  // Variable layout: one entry per non-pinned parameter, normalized to [0,1].
  std::vector<detail::Var> vars;
  double fixed_resource = 0.0;
  Assignment base = default_assignment(services);
  for (size_t si = 0; si < services.size(); ++si) {
    const auto& s = services[si];
    for (const auto& p : s.params) {
      const bool res = p.name == constraints.resource_name;
      if (p.max - p.min > 1e-12) {
        vars.push_back({si, p.name, p.min, p.max, res});
      } else {
        if (res) fixed_resource += p.min;
        base.set(s.id.key(), p.name, p.min);
      }
    }
  }
  const detail::FeasibleSet feasible(vars, constraints.capacity, fixed_resource);
  const auto& V = feasible.vars();
  const size_t n = V.size();

  std::vector<std::map<std::string, double>> params(services.size());
  for (size_t si = 0; si < services.size(); ++si)
    params[si] = base.values.at(services[si].id.key());

  auto apply_x = [&](const std::vector<double>& x) {
    for (size_t i = 0; i < n; ++i)
      params[V[i].service][V[i].param] = V[i].min + x[i] * V[i].range();
  };
  auto to_x = [&](const Assignment& a) {
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& key = services[V[i].service].id.key();
      x[i] = (a.at(key, V[i].param) - V[i].min) / V[i].range();
    }
    feasible.project(x);
    return x;
  };

  std::vector<double> term_cache(services.size());
  auto eval_full = [&](const std::vector<double>& x) {
    apply_x(x);
    double total = 0.0;
    for (size_t si = 0; si < services.size(); ++si) {
      term_cache[si] = terms[si].term(params[si], beta);
      total += term_cache[si];
    }
    return total;
  };

  // Single run of projected-gradient ascent from x; returns final objective.
  // The stop threshold scales with the number of services because the
  // objective is a sum of per-service terms.
  const double f_tol = budget.objective_tolerance * static_cast<double>(services.size());
  auto ascend = [&](std::vector<double>& x) {
    double f = eval_full(x);
    if (!std::isfinite(f)) return f;
    const double h0 = std::max(budget.finite_difference_step, 1e-9);
    double alpha = 0.25;
    std::vector<double> grad(n), candidate(n);
    for (int iter = 0; iter < budget.max_iterations; ++iter) {
      const double f_before = f;
      // Finite-difference gradient; each variable touches one service term.
      for (size_t j = 0; j < n; ++j) {
        const size_t si = V[j].service;
        const double h = x[j] + h0 <= 1.0 ? h0 : -h0;
        const double saved = params[si][V[j].param];
        params[si][V[j].param] = V[j].min + (x[j] + h) * V[j].range();
        grad[j] = (terms[si].term(params[si], beta) - term_cache[si]) / h;
        params[si][V[j].param] = saved;
      }
      bool accepted = false;
      double step = alpha;
      for (int bt = 0; bt < 30; ++bt) {
        for (size_t j = 0; j < n; ++j) candidate[j] = x[j] + step * grad[j];
        feasible.project(candidate);
        const double fc = eval_full(candidate);
        if (std::isfinite(fc) && fc > f + 1e-15) {
          x = candidate;
          f = fc;
          alpha = std::min(step * 2.0, 4.0);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      // Transfer move: on an active capacity constraint the projected gradient
      // only crawls along the face, so when the gradient step stalls,
      // line-search the exchange direction between the most and least
      // promising resource variables (capacity-preserving by construction).
      size_t ia = n, ib = n;
      if (!accepted || f - f_before < 1e-4)
        for (size_t j = 0; j < n; ++j) {
          if (!V[j].resource) continue;
          const double slope = grad[j] / V[j].range();
          if (ia == n || slope > grad[ia] / V[ia].range()) ia = j;
          if (ib == n || slope < grad[ib] / V[ib].range()) ib = j;
        }
      bool caches_stale = false;
      if (ia != n && ia != ib) {
        for (double t = 1.0; t > 1e-4; t *= 0.5) {
          candidate = x;
          candidate[ia] += t;
          candidate[ib] -= t * V[ia].range() / V[ib].range();
          feasible.project(candidate);
          const double fc = eval_full(candidate);
          caches_stale = true;
          if (std::isfinite(fc) && fc > f + 1e-15) {
            x = candidate;
            f = fc;
            accepted = true;
            caches_stale = false;
            break;
          }
        }
      }
      if (caches_stale) eval_full(x);  // restore caches to the accepted point
      if (!accepted) break;
      if (f - f_before < f_tol) break;
    }
    return f;
  };

  auto make_assignment = [&](const std::vector<double>& x) {
    Assignment result = base;
    for (size_t i = 0; i < n; ++i) {
      const auto& key = services[V[i].service].id.key();
      result.set(key, V[i].param, V[i].min + x[i] * V[i].range());
    }
    return result;
  };
  auto exact = [&](const Assignment& a) { return objective(a, models, services, rps); };

  // Multi-start: the degree-limited fits produce multi-modal landscapes, so a
  // single ascent is not enough. Four starts: warm start (when given), the
  // defaults anchor, and seeded random draws; the winner is chosen on the
  // exact (unsmoothed) objective, which also makes the result never worse
  // than the projected start points.
  std::vector<std::vector<double>> starts;
  if (warm_start) starts.push_back(to_x(*warm_start));
  starts.push_back(to_x(default_assignment(services)));
  // Cold solves search wider: without a prior there is nothing anchoring the
  // ascent to a good basin.
  const size_t n_starts = warm_start ? 4 : 6;
  for (std::uint64_t r = 0; starts.size() < n_starts; ++r)
    starts.push_back(to_x(rand_param(services, constraints, seed + r)));

  std::optional<Assignment> best;
  double f_best = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Assignment& cand) {
    const double f = exact(cand);
    if (std::isfinite(f) && f > f_best) {
      f_best = f;
      best = cand;
    }
  };
  for (auto& x : starts) {
    if (!std::isfinite(eval_full(x))) continue;
    consider(make_assignment(x));
    ascend(x);
    consider(make_assignment(x));
  }
  if (!best)
    throw Error("planner.non_finite_objective",
                "objective is non-finite at every trial start");

  // Polish passes: re-ascend the winner with progressively sharper softmin so
  // the solution is not left short of the saturation kinks by the smoothing
  // bias.
  for (int pass = 0; pass < 2; ++pass) {
    beta *= 8.0;
    std::vector<double> x = to_x(*best);
    if (!std::isfinite(eval_full(x))) break;
    ascend(x);
    consider(make_assignment(x));
  }
  return *best;
}

}  // namespace rask
