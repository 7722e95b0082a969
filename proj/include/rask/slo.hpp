#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rask/error.hpp"
#include "rask/registry.hpp"

namespace rask {

// One second of measured service state. `values` holds at least throughput,
// rps, completion, tp_max and the live value of every elasticity parameter.
struct MetricsRow {
  std::string service_key;
  std::int64_t tick = 0;
  std::map<std::string, double> values;

  double at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
      throw Error("slo.missing_variable",
                  "metric '" + name + "' missing for service " + service_key);
    return it->second;
  }
};

namespace slo {

// phi(q, m): m/t below target, saturating at 1. SLOs cannot be overfulfilled.
inline double fulfillment(const SloDefinition& slo, double metric) {
  if (!(slo.target > 0.0))
    throw Error("slo.bad_target", "SLO target must be positive");
  if (metric >= slo.target) return 1.0;
  return metric / slo.target;
}

// throughput / rps, clamped to [0, 1]; no demand counts as fully satisfied.
inline double completion(double throughput, double rps) {
  if (rps <= 0.0) return 1.0;
  const double c = throughput / rps;
  return c > 1.0 ? 1.0 : c;
}

inline double service_fulfillment(const std::vector<SloDefinition>& slos,
                                  const MetricsRow& row) {
  if (slos.empty())
    throw Error("slo.empty", "service has no SLOs");
  double acc = 0.0, wsum = 0.0;
  for (const auto& q : slos) {
    acc += fulfillment(q, row.at(q.variable)) * q.weight;
    wsum += q.weight;
  }
  return acc / wsum;
}

inline double global_fulfillment(const std::vector<double>& per_service) {
  if (per_service.empty())
    throw Error("slo.empty", "global fulfillment over zero services");
  double acc = 0.0;
  for (double v : per_service) acc += v;
  return acc / static_cast<double>(per_service.size());
}

}  // namespace slo
}  // namespace rask
