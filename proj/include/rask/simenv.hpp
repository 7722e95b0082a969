#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rask/error.hpp"
#include "rask/planner.hpp"
#include "rask/registry.hpp"
#include "rask/slo.hpp"

namespace rask {

// Analytic per-item latency model standing in for a real service binary.
// latency_ms = k * (quality / q0)^gamma * g(model_size) / cores^rho
struct GroundTruthModel {
  std::string kind;
  double k = 1.0;
  double rho = 0.5;
  double gamma = 1.0;
  double q0 = 1.0;
  std::map<double, double> size_factors;  // piecewise-linear in model_size

  static GroundTruthModel from_json(const json& j) {
    if (j.is_null())
      throw Error("simenv.no_model", "service has no sim_model block");
    GroundTruthModel m;
    m.kind = j.value("kind", "");
    m.k = j.at("k").get<double>();
    m.rho = j.at("rho").get<double>();
    m.gamma = j.at("gamma").get<double>();
    m.q0 = j.at("q0").get<double>();
    if (j.contains("size_factors"))
      for (const auto& [key, value] : j.at("size_factors").items())
        m.size_factors[std::stod(key)] = value.get<double>();
    if (!(m.k > 0) || !(m.q0 > 0) || m.rho < 0 || m.rho > 1 || !(m.gamma > 0))
      throw Error("simenv.bad_model", "sim_model coefficients out of range");
    return m;
  }

  double size_factor(double model_size) const {
    if (size_factors.empty()) return 1.0;
    auto hi = size_factors.lower_bound(model_size);
    if (hi == size_factors.begin()) return hi->second;
    if (hi == size_factors.end()) return std::prev(hi)->second;
    auto lo = std::prev(hi);
    const double t = (model_size - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
  }

  double latency_ms(const std::map<std::string, double>& config) const {
    const double cores = config.at("cores");
    const double quality = config.count("quality") ? config.at("quality") : q0;
    const double g =
        config.count("model_size") ? size_factor(config.at("model_size")) : 1.0;
    if (!(cores > 0) || !(quality > 0))
      throw Error("simenv.bad_config", "illegal configuration for latency model");
    return k * std::pow(quality / q0, gamma) * g / std::pow(cores, rho);
  }

  // Sustainable throughput of a configuration, independent of demand.
  double tp_max(const std::map<std::string, double>& config) const {
    return 1000.0 / latency_ms(config);
  }
};

// Solve the latency coefficient k from an anchor (config, throughput) pair so
// that ground-truth constants live in the scenario file rather than in code.
inline double calibrate_k(const json& sim_model) {
  GroundTruthModel m = [&] {
    json j = sim_model;
    j["k"] = 1.0;
    return GroundTruthModel::from_json(j);
  }();
  const auto& anchor = sim_model.at("anchor");
  const auto config = anchor.at("config").get<std::map<std::string, double>>();
  const double tp = anchor.at("tp").get<double>();
  if (!(tp > 0))
    throw Error("simenv.bad_anchor", "anchor throughput must be positive");
  // With k = 1: tp_anchor = tp_unit / k  =>  k = tp_unit / tp_anchor
  return m.tp_max(config) / tp;
}

struct RequestPattern {
  std::string kind;  // bursty | diurnal | constant | csv
  std::int64_t duration = 0;
  double max_rps = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> samples;  // one per second
};

inline RequestPattern gen_pattern(const std::string& kind, std::int64_t duration,
                                  double max_rps, std::uint64_t seed,
                                  const std::string& csv_path = "") {
  if (duration <= 0)
    throw Error("simenv.bad_pattern", "pattern duration must be positive");
  RequestPattern p{kind, duration, max_rps, seed, {}};
  p.samples.resize(duration);

  if (kind == "constant") {
    std::fill(p.samples.begin(), p.samples.end(), max_rps);
  } else if (kind == "diurnal") {
    // Raised sinusoid, single peak, trough at 0.15 of the maximum.
    std::vector<double> rel(duration);
    double peak = 0.0;
    for (std::int64_t t = 0; t < duration; ++t) {
      const double phase = 2.0 * std::numbers::pi * t / static_cast<double>(duration);
      rel[t] = 0.15 + 0.85 * 0.5 * (1.0 - std::cos(phase));
      peak = std::max(peak, rel[t]);
    }
    for (std::int64_t t = 0; t < duration; ++t)
      p.samples[t] = rel[t] / peak * max_rps;
  } else if (kind == "bursty") {
    std::mt19937_64 rng(seed);
    std::fill(p.samples.begin(), p.samples.end(), 0.2 * max_rps);
    const int per_hour = std::uniform_int_distribution<int>(4, 8)(rng);
    const int bursts = std::max<std::int64_t>(
        1, std::llround(per_hour * duration / 3600.0));
    for (int b = 0; b < bursts; ++b) {
      const std::int64_t start =
          std::uniform_int_distribution<std::int64_t>(0, duration - 1)(rng);
      const std::int64_t len = std::uniform_int_distribution<std::int64_t>(60, 180)(rng);
      for (std::int64_t t = start; t < std::min(duration, start + len); ++t)
        p.samples[t] = max_rps;
    }
  } else if (kind == "csv") {
    std::ifstream in(csv_path);
    if (!in)
      throw Error("simenv.trace_io", "cannot open trace file '" + csv_path + "'");
    std::string line;
    std::vector<double> rel;
    while (std::getline(in, line)) {
      if (line.empty() || line.rfind("t_seconds", 0) == 0) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw Error("simenv.trace_io", "trace rows need 't_seconds,relative_load'");
      rel.push_back(std::stod(line.substr(comma + 1)));
    }
    if (static_cast<std::int64_t>(rel.size()) < duration)
      throw Error("simenv.trace_io", "trace shorter than requested duration");
    for (std::int64_t t = 0; t < duration; ++t) {
      if (rel[t] < 0.0 || rel[t] > 1.0)
        throw Error("simenv.trace_io", "relative load must lie in [0, 1]");
      p.samples[t] = rel[t] * max_rps;
    }
  } else {
    throw Error("simenv.bad_pattern", "unknown pattern kind '" + kind + "'");
  }
  return p;
}

inline std::string pattern_to_csv(const RequestPattern& p) {
  std::ostringstream os;
  os.precision(17);
  os << "t_seconds,relative_load\n";
  for (std::int64_t t = 0; t < p.duration; ++t)
    os << t << "," << (p.max_rps > 0 ? p.samples[t] / p.max_rps : 0.0) << "\n";
  return os.str();
}

// Deterministic 1-second-tick device simulation: per-service backlog buffers,
// linear settling of scaling actions, and an append-only metrics log.
class Environment {
 public:
  struct Counters {
    std::int64_t arrivals = 0;
    std::int64_t processed = 0;
    std::int64_t dropped = 0;
  };

  Environment(const Registry& registry,
              std::map<std::string, RequestPattern> patterns, int settle_ticks = 3)
      : registry_(registry), settle_ticks_(std::max(1, settle_ticks)) {
    duration_ = std::numeric_limits<std::int64_t>::max();
    for (const auto& s : registry_.services) {
      auto it = patterns.find(s.id.key());
      if (it == patterns.end())
        throw Error("simenv.missing_pattern", "no request pattern for " + s.id.key());
      State st;
      st.gt = GroundTruthModel::from_json(s.sim_model);
      st.pattern = std::move(it->second);
      st.buffer_capacity =
          std::max<std::int64_t>(1, std::llround(2.0 * st.pattern.max_rps));
      for (const auto& p : s.params) st.current[p.name] = s.defaults.at(p.name);
      st.target = st.current;
      st.from = st.current;
      duration_ = std::min(duration_, st.pattern.duration);
      states_.emplace(s.id.key(), std::move(st));
    }
  }

  std::int64_t tick() const { return tick_; }
  std::int64_t duration() const { return duration_; }
  const Registry& registry() const { return registry_; }
  const std::vector<MetricsRow>& log() const { return log_; }
  const Counters& counters(const std::string& key) const { return states_.at(key).counters; }
  std::int64_t backlog(const std::string& key) const { return states_.at(key).backlog; }

  double max_rps(const std::string& key) const { return states_.at(key).pattern.max_rps; }

  // Clips every value to its parameter's legal set and starts the settling
  // window; a no-op when the clipped target equals the current configuration.
  void apply_assignment(const Assignment& assignment) {
    for (const auto& s : registry_.services) {
      auto& st = states_.at(s.id.key());
      std::map<std::string, double> target;
      for (const auto& p : s.params)
        target[p.name] = clip_assignment(p, assignment.at(s.id.key(), p.name));
      bool changed = false;
      for (const auto& [name, v] : target)
        if (std::abs(v - st.current.at(name)) > 1e-12) changed = true;
      if (!changed) {
        st.target = st.current;
        st.settle_remaining = 0;
        continue;
      }
      st.from = st.current;
      st.target = std::move(target);
      st.settle_remaining = settle_ticks_;
    }
  }

  // Advance one simulated second; emits one metrics row per service.
  std::vector<MetricsRow> step() {
    if (tick_ >= duration_)
      throw Error("simenv.past_end", "stepping past the trace duration");
    std::vector<MetricsRow> rows;
    for (const auto& s : registry_.services) {
      auto& st = states_.at(s.id.key());

      // Settling: interpolate linearly from the pre-apply configuration.
      if (st.settle_remaining > 0) {
        const double frac =
            static_cast<double>(settle_ticks_ - st.settle_remaining + 1) /
            static_cast<double>(settle_ticks_);
        for (auto& [name, v] : st.current)
          v = st.from.at(name) + frac * (st.target.at(name) - st.from.at(name));
        --st.settle_remaining;
        if (st.settle_remaining == 0) st.current = st.target;
      }

      const double rps = st.pattern.samples[tick_];
      const std::int64_t arrivals = std::llround(rps);
      const std::int64_t space = st.buffer_capacity - st.backlog;
      const std::int64_t accepted = std::min(arrivals, space);
      st.counters.arrivals += arrivals;
      st.counters.dropped += arrivals - accepted;
      st.backlog += accepted;

      const double tp = st.gt.tp_max(st.current);
      const std::int64_t processed =
          std::min(st.backlog, static_cast<std::int64_t>(std::floor(tp)));
      st.backlog -= processed;
      st.counters.processed += processed;

      MetricsRow row;
      row.service_key = s.id.key();
      row.tick = tick_;
      row.values["throughput"] = static_cast<double>(processed);
      row.values["rps"] = rps;
      row.values["completion"] = slo::completion(static_cast<double>(processed), rps);
      row.values["tp_max"] = tp;
      row.values["utilization"] = tp > 0 ? std::min(1.0, rps / tp) : 1.0;
      row.values["backlog"] = static_cast<double>(st.backlog);
      for (const auto& [name, v] : st.current) row.values[name] = v;
      log_.push_back(row);
      rows.push_back(std::move(row));
    }
    ++tick_;
    return rows;
  }

  // Mean over the last `window` logged rows of a service (fewer while the log
  // is still short); parameter values come from the latest row since they are
  // set rather than measured.
  MetricsRow observe(const std::string& key, int window = 5) const {
    const auto& s = *registry_.find(key);
    std::vector<const MetricsRow*> recent;
    for (auto it = log_.rbegin(); it != log_.rend() && (int)recent.size() < window; ++it)
      if (it->service_key == key) recent.push_back(&*it);
    if (recent.empty())
      throw Error("simenv.no_rows", "no metrics logged yet for " + key);

    MetricsRow out;
    out.service_key = key;
    out.tick = recent.front()->tick;
    for (const auto& [name, v] : recent.front()->values) out.values[name] = 0.0;
    for (const auto* row : recent)
      for (const auto& [name, v] : row->values) out.values.at(name) += v;
    for (auto& [name, v] : out.values) v /= static_cast<double>(recent.size());
    for (const auto& p : s.params)
      out.values[p.name] = recent.front()->values.at(p.name);
    return out;
  }

  std::string metrics_csv() const {
    // Union of parameter columns across services, in registry order.
    std::vector<std::string> param_cols;
    for (const auto& s : registry_.services)
      for (const auto& p : s.params)
        if (std::find(param_cols.begin(), param_cols.end(), p.name) == param_cols.end())
          param_cols.push_back(p.name);
    std::ostringstream os;
    os.precision(17);
    os << "tick,service,throughput,rps,completion,tp_max";
    for (const auto& c : param_cols) os << "," << c;
    os << "\n";
    for (const auto& row : log_) {
      os << row.tick << "," << row.service_key << "," << row.values.at("throughput")
         << "," << row.values.at("rps") << "," << row.values.at("completion") << ","
         << row.values.at("tp_max");
      for (const auto& c : param_cols)
        os << "," << (row.values.count(c) ? row.values.at(c) : std::nan(""));
      os << "\n";
    }
    return os.str();
  }

 private:
  struct State {
    GroundTruthModel gt;
    RequestPattern pattern;
    std::map<std::string, double> current, target, from;
    int settle_remaining = 0;
    std::int64_t backlog = 0;
    std::int64_t buffer_capacity = 0;
    Counters counters;
  };

  Registry registry_;
  int settle_ticks_;
  std::int64_t tick_ = 0;
  std::int64_t duration_ = 0;
  std::map<std::string, State> states_;
  std::vector<MetricsRow> log_;
};

}  // namespace rask
