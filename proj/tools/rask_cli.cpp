// Command-line front end for the autoscaling laboratory: scenario runs,
// report comparison, dimensionality/service-count sweeps, ground-truth
// calibration and trace generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rask/harness.hpp"
#include "rask/simenv.hpp"

namespace {

struct RunFlags {
  std::string scenario_path;
  std::string out_dir = "out";
  std::int64_t seed = -1;
  int reps = -1;
  int dims = -1;
  std::int64_t duration = -1;
  bool no_cache = false;
};

void add_common_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("scenario", flags.scenario_path, "scenario JSON file")->required();
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "override base_seed");
  cmd->add_option("--reps", flags.reps, "override repetitions");
  cmd->add_option("--dims", flags.dims, "override dims (1-3)");
  cmd->add_option("--duration", flags.duration, "override duration_s");
  cmd->add_flag("--no-cache", flags.no_cache, "disable solver warm-start caching");
}

rask::Scenario load_with_overrides(const RunFlags& flags) {
  rask::Scenario sc = rask::load_scenario(flags.scenario_path);
  if (flags.seed >= 0) sc.base_seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.reps > 0) sc.repetitions = flags.reps;
  if (flags.dims > 0) sc.dims = flags.dims;
  if (flags.duration > 0) sc.duration_s = flags.duration;
  if (flags.no_cache) sc.agent.rask.caching = false;
  return sc;
}

void print_group(const std::string& label, const std::vector<rask::RunSummary>& group) {
  std::vector<double> means, medians, violations;
  for (const auto& s : group) {
    means.push_back(s.mean);
    medians.push_back(s.median);
    violations.push_back(s.violations);
  }
  std::cout << label << ": reps=" << group.size()
            << " mean_fulfillment=" << rask::stats::mean(means)
            << " median_fulfillment=" << rask::stats::mean(medians)
            << " mean_violations=" << rask::stats::mean(violations) << "\n";
}

int fail(const std::exception& e) {
  nlohmann::json record;
  record["error"] = true;
  if (const auto* err = dynamic_cast<const rask::Error*>(&e))
    record["code"] = err->code();
  record["message"] = e.what();
  std::cerr << record.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional vertical autoscaling laboratory"};
  app.require_subcommand(1);

  RunFlags run_flags, dims_flags, services_flags;
  auto* run_cmd = app.add_subcommand("run", "run a scenario");
  add_common_flags(run_cmd, run_flags);

  std::vector<std::string> summary_paths;
  std::string compare_out;
  double load_threshold = 0.4;
  auto* compare_cmd = app.add_subcommand("compare", "compare summary files");
  compare_cmd->add_option("summaries", summary_paths, "summary.json files")->required();
  compare_cmd->add_option("--out", compare_out, "write the report to a file");
  compare_cmd->add_option("--load-threshold", load_threshold, "load-band split");

  auto* sweep_dims_cmd = app.add_subcommand("sweep-dims", "run a scenario at dims 1, 2, 3");
  add_common_flags(sweep_dims_cmd, dims_flags);

  std::vector<int> counts = {3, 6, 9};
  auto* sweep_services_cmd =
      app.add_subcommand("sweep-services", "run a scenario at growing service counts");
  add_common_flags(sweep_services_cmd, services_flags);
  sweep_services_cmd->add_option("--counts", counts, "service counts");

  std::string calibrate_in, calibrate_out;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "solve sim_model anchors and write coefficients");
  calibrate_cmd->add_option("registry", calibrate_in, "registry JSON file")->required();
  calibrate_cmd->add_option("--out", calibrate_out, "output path (default: in place)");

  std::string trace_kind = "diurnal", trace_out = "trace.csv";
  std::int64_t trace_duration = 3600;
  double trace_max_rps = 100.0;
  std::uint64_t trace_seed = 0;
  auto* trace_cmd = app.add_subcommand("gen-trace", "emit a request-pattern CSV");
  trace_cmd->add_option("--kind", trace_kind, "constant|diurnal|bursty");
  trace_cmd->add_option("--duration", trace_duration, "seconds");
  trace_cmd->add_option("--max-rps", trace_max_rps, "peak request rate");
  trace_cmd->add_option("--seed", trace_seed, "pattern seed");
  trace_cmd->add_option("--out", trace_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const rask::Scenario sc = load_with_overrides(run_flags);
      const auto summaries = rask::run_scenario(sc, run_flags.out_dir);
      print_group(sc.name, summaries);
      std::cout << "outputs under " << run_flags.out_dir << "/" << sc.name << "/\n";
    } else if (*compare_cmd) {
      std::map<std::string, std::vector<rask::RunSummary>> labeled;
      for (const auto& path : summary_paths) {
        std::ifstream in(path);
        if (!in) throw rask::Error("cli.io", "cannot open '" + path + "'");
        const auto s = rask::RunSummary::from_json(nlohmann::json::parse(in));
        labeled[s.label].push_back(s);
      }
      const auto report = rask::compare(labeled, load_threshold);
      if (!compare_out.empty()) {
        std::ofstream out(compare_out);
        out << report.dump(2) << "\n";
      }
      std::cout << report.dump(2) << "\n";
    } else if (*sweep_dims_cmd) {
      const rask::Scenario sc = load_with_overrides(dims_flags);
      const auto grouped = rask::sweep_dims(sc, dims_flags.out_dir);
      for (const auto& [label, group] : grouped) print_group(label, group);
    } else if (*sweep_services_cmd) {
      const rask::Scenario sc = load_with_overrides(services_flags);
      const auto grouped = rask::sweep_services(sc, services_flags.out_dir, counts);
      for (const auto& [label, group] : grouped) print_group(label, group);
    } else if (*calibrate_cmd) {
      std::ifstream in(calibrate_in);
      if (!in) throw rask::Error("cli.io", "cannot open '" + calibrate_in + "'");
      nlohmann::json doc = nlohmann::json::parse(in);
      for (auto& js : doc.at("services")) {
        if (!js.contains("sim_model") || !js.at("sim_model").contains("anchor")) continue;
        js["sim_model"]["k"] = rask::calibrate_k(js.at("sim_model"));
        std::cout << js.at("id").at("container_name").get<std::string>() << ": k="
                  << js["sim_model"]["k"].get<double>() << "\n";
      }
      const std::string out_path = calibrate_out.empty() ? calibrate_in : calibrate_out;
      std::ofstream out(out_path);
      if (!out) throw rask::Error("cli.io", "cannot write '" + out_path + "'");
      out << doc.dump(2) << "\n";
      // Reload to confirm the calibrated registry still validates.
      rask::load_registry(doc.dump());
    } else if (*trace_cmd) {
      const auto p = rask::gen_pattern(trace_kind, trace_duration, trace_max_rps, trace_seed);
      std::ofstream out(trace_out);
      if (!out) throw rask::Error("cli.io", "cannot write '" + trace_out + "'");
      out << rask::pattern_to_csv(p);
      std::cout << "wrote " << trace_out << " (" << trace_duration << " samples)\n";
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return 0;
}
