#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rask/agents.hpp"
#include "rask/error.hpp"
#include "rask/planner.hpp"
#include "rask/registry.hpp"
#include "rask/simenv.hpp"

namespace rask {

namespace stats {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double idx = p * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(idx));
  const size_t hi = static_cast<size_t>(std::ceil(idx));
  return v[lo] + (idx - lo) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return percentile(v, 0.5); }

}  // namespace stats

struct PatternSpec {
  std::string kind = "constant";
  double max_rps = -1.0;  // negative: use the service's default_rps
  std::uint64_t seed = 0;
  std::string csv;
};

struct AgentSpec {
  std::string kind = "rask";  // rask | vpa | noop
  RaskConfig rask;
  VpaConfig vpa;
};

struct Scenario {
  std::string name = "scenario";
  std::string registry_path;
  Registry registry;
  std::map<std::string, PatternSpec> patterns;  // by container_name or service_type
  AgentSpec agent;
  std::int64_t duration_s = 600;
  int repetitions = 1;
  std::uint64_t base_seed = 0;
  int dims = 3;
  int warmup_cycles = 0;  // pre-training cycles on constant default load
  int settle_ticks = 3;
};

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error("harness.io", "cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("harness.malformed", std::string("malformed scenario: ") + e.what());
  }

  Scenario sc;
  try {
    sc.name = doc.value("name", "scenario");
    sc.registry_path = doc.at("registry").get<std::string>();
    std::filesystem::path reg_path(sc.registry_path);
    if (reg_path.is_relative())
      reg_path = std::filesystem::path(path).parent_path() / reg_path;
    sc.registry = load_registry_file(reg_path.string());
    sc.duration_s = doc.value("duration_s", 600);
    sc.repetitions = doc.value("repetitions", 1);
    sc.base_seed = doc.value("base_seed", 0);
    sc.dims = doc.value("dims", 3);
    sc.warmup_cycles = doc.value("warmup_cycles", 0);
    sc.settle_ticks = doc.value("settle_ticks", 3);
    if (sc.repetitions < 1)
      throw Error("harness.bad_scenario", "repetitions must be >= 1");

    if (doc.contains("patterns"))
      for (const auto& [key, jp] : doc.at("patterns").items()) {
        PatternSpec ps;
        ps.kind = jp.value("kind", "constant");
        ps.max_rps = jp.value("max_rps", -1.0);
        ps.seed = jp.value("seed", 0);
        ps.csv = jp.value("csv", "");
        if (!ps.csv.empty()) {
          std::filesystem::path cp(ps.csv);
          if (cp.is_relative())
            ps.csv = (std::filesystem::path(path).parent_path() / cp).string();
        }
        sc.patterns[key] = ps;
      }

    if (doc.contains("agent")) {
      const auto& ja = doc.at("agent");
      sc.agent.kind = ja.value("kind", "rask");
      sc.agent.rask.xi = ja.value("xi", 20);
      sc.agent.rask.eta = ja.value("eta", 0.0);
      sc.agent.rask.caching = ja.value("caching", true);
      sc.agent.rask.cycle_s = ja.value("cycle_s", 10);
      if (ja.contains("degree")) {
        if (ja.at("degree").is_string() && ja.at("degree") == "auto")
          sc.agent.rask.fixed_degree = std::nullopt;
        else
          sc.agent.rask.fixed_degree = ja.at("degree").get<int>();
      }
      sc.agent.rask.eta_decay = ja.value("eta_decay", false);
      sc.agent.rask.fit_window = ja.value("fit_window", 0);
      sc.agent.vpa.cycle_s = ja.value("cycle_s", 10);
    }
  } catch (const json::exception& e) {
    throw Error("harness.malformed", std::string("malformed scenario: ") + e.what());
  }
  return sc;
}

inline PatternSpec pattern_spec_for(const Scenario& sc, const ServiceDescriptor& s) {
  auto it = sc.patterns.find(s.id.container_name);
  if (it == sc.patterns.end()) it = sc.patterns.find(s.id.service_type);
  PatternSpec ps = it == sc.patterns.end() ? PatternSpec{} : it->second;
  if (ps.max_rps < 0) ps.max_rps = s.default_rps;
  return ps;
}

struct RunSummary {
  std::string label;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::vector<double> fulfillment;  // per cycle, measured
  std::vector<double> load;         // per cycle, relative
  double mean = 0.0;
  double median = 0.0;
  int violations = 0;  // cycles where some SLO is unfulfilled
  double runtime_p50_ms = 0.0, runtime_p95_ms = 0.0, runtime_max_ms = 0.0;
  std::map<std::string, double> per_service_mean;

  json to_json() const {
    json j;
    j["label"] = label;
    j["repetition"] = repetition;
    j["seed"] = seed;
    j["cycles"] = fulfillment.size();
    j["fulfillment"] = fulfillment;
    j["load"] = load;
    j["mean"] = mean;
    j["median"] = median;
    j["violations"] = violations;
    j["runtime_ms"] = {{"p50", runtime_p50_ms}, {"p95", runtime_p95_ms}, {"max", runtime_max_ms}};
    j["per_service_mean"] = per_service_mean;
    return j;
  }

  static RunSummary from_json(const json& j) {
    RunSummary s;
    s.label = j.at("label").get<std::string>();
    s.repetition = j.at("repetition").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.fulfillment = j.at("fulfillment").get<std::vector<double>>();
    s.load = j.at("load").get<std::vector<double>>();
    s.mean = j.at("mean").get<double>();
    s.median = j.at("median").get<double>();
    s.violations = j.at("violations").get<int>();
    s.runtime_p50_ms = j.at("runtime_ms").at("p50").get<double>();
    s.runtime_p95_ms = j.at("runtime_ms").at("p95").get<double>();
    s.runtime_max_ms = j.at("runtime_ms").at("max").get<double>();
    s.per_service_mean = j.at("per_service_mean").get<std::map<std::string, double>>();
    return s;
  }
};

namespace detail {

inline RunSummary summarize(const RunLog& log, const std::string& label, int rep,
                            std::uint64_t seed) {
  RunSummary s;
  s.label = label;
  s.repetition = rep;
  s.seed = seed;
  std::vector<double> runtimes;
  std::map<std::string, std::vector<double>> per_service;
  for (const auto& d : log.decisions) {
    s.fulfillment.push_back(d.global_fulfillment);
    s.load.push_back(d.load);
    runtimes.push_back(d.runtime_ms);
    double worst = 1.0;
    for (const auto& [key, f] : d.per_service_fulfillment) {
      per_service[key].push_back(f);
      worst = std::min(worst, f);
    }
    if (worst < 1.0 - 1e-9) ++s.violations;
  }
  s.mean = stats::mean(s.fulfillment);
  s.median = stats::median(s.fulfillment);
  s.runtime_p50_ms = stats::percentile(runtimes, 0.5);
  s.runtime_p95_ms = stats::percentile(runtimes, 0.95);
  s.runtime_max_ms = runtimes.empty() ? 0.0 : *std::max_element(runtimes.begin(), runtimes.end());
  for (const auto& [key, v] : per_service) s.per_service_mean[key] = stats::mean(v);
  return s;
}

inline std::string decisions_csv(const RunLog& log, const Registry& registry) {
  std::vector<std::string> param_cols;
  for (const auto& s : registry.services)
    for (const auto& p : s.params)
      if (std::find(param_cols.begin(), param_cols.end(), p.name) == param_cols.end())
        param_cols.push_back(p.name);
  std::ostringstream os;
  os.precision(17);
  os << "cycle,service";
  for (const auto& c : param_cols) os << "," << c;
  os << ",objective_estimate,solver_runtime_ms\n";
  for (const auto& d : log.decisions)
    for (const auto& s : registry.services) {
      os << d.cycle << "," << s.id.key();
      for (const auto& c : param_cols) {
        os << ",";
        if (s.find_param(c)) os << d.assignment.at(s.id.key(), c);
      }
      os << "," << d.objective_estimate << "," << d.runtime_ms << "\n";
    }
  return os.str();
}

inline std::unique_ptr<Agent> make_agent(const Scenario& sc) {
  if (sc.agent.kind == "rask") {
    RaskConfig cfg = sc.agent.rask;
    cfg.dims = sc.dims;
    return std::make_unique<RaskAgent>(sc.registry, cfg);
  }
  if (sc.agent.kind == "vpa") return std::make_unique<VpaAgent>(sc.registry, sc.agent.vpa);
  if (sc.agent.kind == "noop") return std::make_unique<NoopAgent>(sc.registry);
  throw Error("harness.bad_agent", "unknown agent kind '" + sc.agent.kind + "'");
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out)
    throw Error("harness.io", "cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace detail

struct RepetitionResult {
  RunSummary summary;
  RunLog log;
  std::string metrics_csv;
};

// One repetition: warm-up (optional), measured run, summary. Pure given the
// scenario and seed.
inline RepetitionResult run_repetition(const Scenario& sc, int rep,
                                       const std::string& label) {
  const std::uint64_t seed = sc.base_seed + static_cast<std::uint64_t>(rep);
  auto agent = detail::make_agent(sc);

  std::map<std::string, std::string> kinds;
  for (const auto& s : sc.registry.services)
    kinds[s.id.key()] = pattern_spec_for(sc, s).kind;

  if (sc.warmup_cycles > 0) {
    std::map<std::string, RequestPattern> warm_patterns;
    const std::int64_t warm_s =
        static_cast<std::int64_t>(sc.warmup_cycles) * agent->cycle_s();
    for (const auto& s : sc.registry.services)
      warm_patterns[s.id.key()] = gen_pattern("constant", warm_s, s.default_rps, seed);
    Environment warm_env(sc.registry, warm_patterns, sc.settle_ticks);
    run_agent(warm_env, *agent, warm_s, seed + 0x5eed0000u, &kinds);
  }

  std::map<std::string, RequestPattern> patterns;
  for (const auto& s : sc.registry.services) {
    const PatternSpec ps = pattern_spec_for(sc, s);
    patterns[s.id.key()] =
        gen_pattern(ps.kind, sc.duration_s, ps.max_rps, ps.seed, ps.csv);
  }
  Environment env(sc.registry, patterns, sc.settle_ticks);
  RunLog log = run_agent(env, *agent, sc.duration_s, seed, &kinds);
  RunSummary summary = detail::summarize(log, label, rep, seed);
  return {std::move(summary), std::move(log), env.metrics_csv()};
}

// All repetitions of a scenario (parallel workers); writes
// out/<scenario>/<rep>/{metrics.csv, decisions.csv, summary.json} when an
// output directory is given. Failed repetitions are recorded and do not stop
// the others.
inline std::vector<RunSummary> run_scenario(const Scenario& sc,
                                            const std::string& out_dir = "",
                                            const std::string& label_override = "") {
  const std::string label = label_override.empty() ? sc.name : label_override;
  std::vector<std::future<RepetitionResult>> futures;
  for (int rep = 0; rep < sc.repetitions; ++rep)
    futures.push_back(std::async(std::launch::async,
                                 [&, rep] { return run_repetition(sc, rep, label); }));

  std::vector<RunSummary> summaries;
  std::vector<std::string> failures;
  for (int rep = 0; rep < sc.repetitions; ++rep) {
    try {
      RepetitionResult result = futures[rep].get();
      if (!out_dir.empty()) {
        const auto dir = std::filesystem::path(out_dir) / label / std::to_string(rep);
        std::filesystem::create_directories(dir);
        detail::write_file(dir / "metrics.csv", result.metrics_csv);
        detail::write_file(dir / "decisions.csv",
                           detail::decisions_csv(result.log, sc.registry));
        detail::write_file(dir / "summary.json", result.summary.to_json().dump(2));
      }
      summaries.push_back(std::move(result.summary));
    } catch (const std::exception& e) {
      failures.push_back("repetition " + std::to_string(rep) + ": " + e.what());
    }
  }
  if (summaries.empty() && !failures.empty())
    throw Error("harness.all_failed", failures.front());
  if (!failures.empty() && !out_dir.empty()) {
    std::ostringstream os;
    for (const auto& f : failures) os << f << "\n";
    detail::write_file(std::filesystem::path(out_dir) / label / "failures.txt", os.str());
  }
  return summaries;
}

// Cross-label report: mean +/- std fulfillment series, violation reductions,
// and the low/high load-band breakdown.
inline json compare(const std::map<std::string, std::vector<RunSummary>>& labeled,
                    double load_threshold = 0.4) {
  if (labeled.empty())
    throw Error("harness.empty_compare", "nothing to compare");
  std::optional<size_t> cycles;
  for (const auto& [label, group] : labeled)
    for (const auto& s : group) {
      if (!cycles) cycles = s.fulfillment.size();
      if (s.fulfillment.size() != *cycles)
        throw Error("harness.length_mismatch",
                    "summary series lengths differ between labels");
    }

  json report;
  report["load_threshold"] = load_threshold;
  std::map<std::string, double> mean_violations;
  for (const auto& [label, group] : labeled) {
    json jl;
    std::vector<double> mean_series(*cycles, 0.0), std_series(*cycles, 0.0);
    for (size_t c = 0; c < *cycles; ++c) {
      std::vector<double> vals;
      for (const auto& s : group) vals.push_back(s.fulfillment[c]);
      mean_series[c] = stats::mean(vals);
      std_series[c] = stats::stddev(vals);
    }
    std::vector<double> violations, viol_high, viol_low, f_high, f_low;
    for (const auto& s : group) {
      violations.push_back(s.violations);
      double vh = 0, vl = 0;
      std::vector<double> fh, fl;
      for (size_t c = 0; c < *cycles; ++c) {
        const bool violated = s.fulfillment[c] < 1.0 - 1e-9;
        if (s.load[c] >= load_threshold) {
          vh += violated;
          fh.push_back(s.fulfillment[c]);
        } else {
          vl += violated;
          fl.push_back(s.fulfillment[c]);
        }
      }
      viol_high.push_back(vh);
      viol_low.push_back(vl);
      f_high.push_back(stats::mean(fh));
      f_low.push_back(stats::mean(fl));
    }
    jl["mean_series"] = mean_series;
    jl["std_series"] = std_series;
    jl["mean_violations"] = stats::mean(violations);
    jl["high_load"] = {{"mean_violations", stats::mean(viol_high)},
                       {"mean_fulfillment", stats::mean(f_high)}};
    jl["low_load"] = {{"mean_violations", stats::mean(viol_low)},
                      {"mean_fulfillment", stats::mean(f_low)}};
    mean_violations[label] = stats::mean(violations);
    report["labels"][label] = std::move(jl);
  }

  for (const auto& [a, va] : mean_violations)
    for (const auto& [b, vb] : mean_violations) {
      if (a == b) continue;
      double pct;
      if (vb > 0)
        pct = 100.0 * (vb - va) / vb;
      else
        pct = va > 0 ? -100.0 * va : 0.0;
      report["violation_reduction_pct"][a]["vs_" + b] = pct;
    }
  return report;
}

// E4 analog: one scenario run per dimensionality.
inline std::map<std::string, std::vector<RunSummary>> sweep_dims(
    Scenario sc, const std::string& out_dir = "",
    const std::vector<int>& dims = {1, 2, 3}) {
  std::map<std::string, std::vector<RunSummary>> grouped;
  for (int d : dims) {
    Scenario variant = sc;
    variant.dims = d;
    const std::string label = sc.name + "-dims" + std::to_string(d);
    grouped[label] = run_scenario(variant, out_dir, label);
  }
  return grouped;
}

// E6 analog: replicate the registry's services with fresh container names and
// a proportionally larger capacity; replicas share one regression function
// per service type but receive independent assignments.
inline Registry replicate_registry(const Registry& base, int copies) {
  if (copies < 1)
    throw Error("harness.bad_copies", "need at least one copy");
  Registry out;
  out.constraints = base.constraints;
  out.constraints.capacity = base.constraints.capacity * copies;
  for (int c = 0; c < copies; ++c)
    for (const auto& s : base.services) {
      ServiceDescriptor dup = s;
      if (c > 0) dup.id.container_name += "-r" + std::to_string(c);
      out.services.push_back(std::move(dup));
    }
  return out;
}

inline std::map<std::string, std::vector<RunSummary>> sweep_services(
    const Scenario& sc, const std::string& out_dir = "",
    const std::vector<int>& counts = {3, 6, 9}) {
  const int base_count = static_cast<int>(sc.registry.services.size());
  std::map<std::string, std::vector<RunSummary>> grouped;
  for (int count : counts) {
    if (count % base_count != 0)
      throw Error("harness.bad_count",
                  "service count must be a multiple of the registry size");
    Scenario variant = sc;
    variant.registry = replicate_registry(sc.registry, count / base_count);
    const std::string label = sc.name + "-services" + std::to_string(count);
    grouped[label] = run_scenario(variant, out_dir, label);
  }
  return grouped;
}

}  // namespace rask
