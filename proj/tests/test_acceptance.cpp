// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line with the measured values. Failures are reported through the
// assertions as well, so the binary's exit code reflects the honest outcome.
#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rask/harness.hpp"

using namespace rask;

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double final10_mean(const RunSummary& s) {
  REQUIRE(s.fulfillment.size() >= 10);
  const std::vector<double> tail(s.fulfillment.end() - 10, s.fulfillment.end());
  return stats::mean(tail);
}

Scenario scenario(const std::string& file) {
  return load_scenario(fixtures::scenario_path(file));
}

}  // namespace

TEST_CASE("criterion 1: fulfillment and completion example table, exact") {
  Stopwatch sw;
  bool ok = true;
  auto q = [](const std::string& v, double t, double w) {
    return SloDefinition{v, t, w};
  };
  ok &= slo::fulfillment(q("tp", 30.0, 1.0), 40.0) == 1.0;
  ok &= slo::fulfillment(q("tp", 30.0, 1.0), 30.0) == 1.0;
  ok &= slo::fulfillment(q("tp", 30.0, 1.0), 15.0) == 0.5;
  ok &= slo::fulfillment(q("q", 800.0, 1.0), 0.0) == 0.0;

  ok &= slo::completion(40.0, 80.0) == 0.5;
  ok &= slo::completion(100.0, 80.0) == 1.0;
  ok &= slo::completion(0.0, 0.0) == 1.0;
  ok &= slo::completion(0.0, 10.0) == 0.0;

  MetricsRow row;
  row.values["quality"] = 550.0;
  row.values["completion"] = 0.5;
  ok &= slo::service_fulfillment({q("quality", 800.0, 0.5), q("completion", 1.0, 1.0)},
                                 row) == 0.5625;
  row.values["quality"] = 900.0;
  row.values["completion"] = 1.0;
  ok &= slo::service_fulfillment({q("quality", 800.0, 0.5), q("completion", 1.0, 1.0)},
                                 row) == 1.0;

  ok &= slo::global_fulfillment({1.0, 0.5625, 0.9}) == (1.0 + 0.5625 + 0.9) / 3.0;
  ok &= slo::global_fulfillment({0.37}) == 0.37;

  const double elapsed = sw.seconds();
  const bool pass = ok && elapsed < 1.0;
  report(1, pass, fmt("exact=%s runtime=%.3fs (limit 1s)", ok ? "yes" : "no", elapsed));
  CHECK(pass);
}

TEST_CASE("criterion 2: regression equals the normal-equations oracle") {
  Stopwatch sw;
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> sample(-1.5, 1.5);
  bool oracle_ok = true, recovery_ok = true;

  for (int trial = 0; trial < 100; ++trial) {
    const size_t arity = 1 + trial % 3;
    const int degree = 1 + trial % 4;
    const size_t m = poly::monomial_count(arity, degree);
    std::vector<double> w_true(m);
    for (auto& w : w_true) w = coef(rng);

    ObservationTable noisy{"t", {}, {}}, clean{"t", {}, {}};
    for (size_t i = 0; i < arity; ++i) {
      noisy.feature_names.push_back("f" + std::to_string(i));
      clean.feature_names.push_back("f" + std::to_string(i));
    }
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (size_t i = 0; i < 5 * m + 10; ++i) {
      std::vector<double> x(arity);
      for (auto& v : x) v = sample(rng);
      const double y = oracles::oracle_predict(w_true, x, degree);
      xs.push_back(x);
      ys.push_back(y + 0.01 * coef(rng));
      noisy.add(x, ys.back());
      clean.add(std::move(x), y);
    }

    const auto model = fit(noisy, degree);
    const auto w_oracle = oracles::normal_equations_fit(xs, ys, degree);
    const auto exact = fit(clean, degree);
    for (int i = 0; i < 8; ++i) {
      std::vector<double> x(arity);
      for (auto& v : x) v = sample(rng);
      const double a = model.predict_raw(x);
      const double b = oracles::oracle_predict(w_oracle, x, degree);
      if (std::abs(a - b) > 1e-6 * std::max(1.0, std::abs(b))) oracle_ok = false;
      const double truth = oracles::oracle_predict(w_true, x, degree);
      if (std::abs(exact.predict_raw(x) - truth) >
          1e-6 * std::max(1.0, std::abs(truth)))
        recovery_ok = false;
    }
  }

  const double elapsed = sw.seconds();
  const bool pass = oracle_ok && recovery_ok && elapsed < 10.0;
  report(2, pass,
         fmt("oracle_match=%s noise_free_recovery=%s runtime=%.2fs (limit 10s)",
             oracle_ok ? "yes" : "no", recovery_ok ? "yes" : "no", elapsed));
  CHECK(pass);
}

TEST_CASE("criterion 3: degree selection finds degree 4 under 1% noise") {
  Stopwatch sw;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    std::uniform_real_distribution<double> sample(-2.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.01);
    ObservationTable table{"t", {"x"}, {}};
    for (int i = 0; i < 200; ++i) {
      const double x = sample(rng);
      const double y = 1.0 + x - 2.0 * x * x + 0.5 * x * x * x + 0.8 * x * x * x * x;
      table.add({x}, y * (1.0 + noise(rng)));
    }
    if (select_degree(table, {1, 2, 3, 4, 5, 6}, 0.2, seed) == 4) ++hits;
  }
  const double elapsed = sw.seconds();
  const bool pass = hits >= 45 && elapsed < 30.0;
  report(3, pass, fmt("hits=%d/50 (need >= 45) runtime=%.2fs (limit 30s)", hits, elapsed));
  CHECK(pass);
}

TEST_CASE("criterion 4: solver within 1% of the grid oracle, cold and warm") {
  Stopwatch sw;
  const auto reg = fixtures::default_registry();
  const auto models = fixtures::fit_ground_truth_models(reg);
  const auto rps = fixtures::default_rps_map(reg);

  const double grid_opt =
      oracles::grid_search_objective(models, reg.services, reg.constraints, rps);
  const auto cold =
      solve(models, reg.services, reg.constraints, rps, SolverBudget{}, std::nullopt, 11);
  const double f_cold = objective(cold, models, reg.services, rps);
  const auto warm =
      solve(models, reg.services, reg.constraints, rps, SolverBudget{}, cold, 12);
  const double f_warm = objective(warm, models, reg.services, rps);

  const double elapsed = sw.seconds();
  const bool pass = f_cold >= 0.99 * grid_opt && f_warm >= 0.99 * grid_opt &&
                    elapsed < 60.0;
  report(4, pass,
         fmt("grid=%.4f cold=%.4f warm=%.4f (need >= %.4f) runtime=%.1fs (limit 60s)",
             grid_opt, f_cold, f_warm, 0.99 * grid_opt, elapsed));
  CHECK(pass);
}

TEST_CASE("criterion 5: 10000 rand_param draws stay feasible") {
  const auto reg = fixtures::default_registry();
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto a = rand_param(reg.services, reg.constraints, seed);
    double sum = 0.0;
    for (const auto& s : reg.services)
      for (const auto& p : s.params) {
        const double v = a.at(s.id.key(), p.name);
        if (v < p.min - 1e-9 || v > p.max + 1e-9) ++violations;
        if (p.name == reg.constraints.resource_name) sum += v;
      }
    if (sum > reg.constraints.capacity + 1e-9) ++violations;
  }
  const bool pass = violations == 0;
  report(5, pass, fmt("violations=%d over 10000 draws (tolerance 1e-9)", violations));
  CHECK(pass);
}

TEST_CASE("criterion 6: noise sigma calibration and eta-zero identity") {
  ServiceDescriptor s = fixtures::make_service(
      "n", {{"v", -1e9, 1e9}}, {{"v", 1.0, 1.0}}, {"v"}, {{"v", 4.0}});
  GlobalConstraints constraints{"cores", 1e18};
  Assignment base;
  base.set(s.id.key(), "v", 4.0);

  double sum = 0.0, sum_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto a = add_noise(base, {s}, constraints, 0.1, i);
    const double d = a.at(s.id.key(), "v") - 4.0;
    sum += d;
    sum_sq += d * d;
  }
  const double sigma = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  const bool sigma_ok = std::abs(sigma - 0.4) <= 0.05 * 0.4;
  const bool identity_ok = add_noise(base, {s}, constraints, 0.0, 7) == base;
  const bool pass = sigma_ok && identity_ok;
  report(6, pass,
         fmt("sigma=%.4f (want 0.4 +/- 5%%) eta0_identity=%s", sigma,
             identity_ok ? "yes" : "no"));
  CHECK(pass);
}

TEST_CASE("criterion 7: exploration comparison on the default scenario") {
  Stopwatch sw;
  Scenario with = scenario("default.json");
  Scenario without = with;
  without.agent.rask.xi = 0;
  const auto sa = run_scenario(with, "", "xi20");
  const auto sb = run_scenario(without, "", "xi0");
  REQUIRE(sa.size() == 5);
  REQUIRE(sb.size() == 5);

  std::vector<double> fa, fb;
  for (size_t r = 0; r < 5; ++r) {
    fa.push_back(final10_mean(sa[r]));
    fb.push_back(final10_mean(sb[r]));
  }
  const double mean20 = stats::mean(fa), mean0 = stats::mean(fb);
  const double elapsed = sw.seconds();
  const bool gap_ok = mean20 - mean0 >= 0.05;
  const bool level_ok = mean20 >= 0.85;
  const bool pass = gap_ok && level_ok && elapsed < 300.0;
  report(7, pass,
         fmt("xi20=%.4f xi0=%.4f gap=%+.4f (need >= 0.05) level ok=%s runtime=%.0fs",
             mean20, mean0, mean20 - mean0, level_ok ? "yes" : "no", elapsed));
  CHECK(pass);
}

TEST_CASE("criterion 8: fewer high-load violation-cycles than VPA on diurnal") {
  Scenario rask_sc = scenario("diurnal.json");
  Scenario vpa_sc = rask_sc;
  vpa_sc.agent.kind = "vpa";
  const auto rask_runs = run_scenario(rask_sc, "", "rask");
  const auto vpa_runs = run_scenario(vpa_sc, "", "vpa");
  REQUIRE(rask_runs.size() == 5);
  REQUIRE(vpa_runs.size() == 5);

  auto high_band_violations = [](const RunSummary& s) {
    int v = 0;
    for (size_t c = 0; c < s.fulfillment.size(); ++c)
      if (s.load[c] >= 0.4 && s.fulfillment[c] < 1.0 - 1e-9) ++v;
    return v;
  };
  int wins = 0;
  std::string per_seed;
  for (size_t r = 0; r < 5; ++r) {
    const int vr = high_band_violations(rask_runs[r]);
    const int vv = high_band_violations(vpa_runs[r]);
    if (vr < vv) ++wins;
    per_seed += fmt("%d/%d ", vr, vv);
  }
  const auto cmp = compare({{"rask", rask_runs}, {"vpa", vpa_runs}});
  const double reduction =
      cmp.at("violation_reduction_pct").at("rask").at("vs_vpa").get<double>();

  const bool pass = wins >= 4;
  report(8, pass,
         fmt("wins=%d/5 (need >= 4) rask/vpa per seed: %sreduction=%.1f%%", wins,
             per_seed.c_str(), reduction));
  CHECK(pass);
}

TEST_CASE("criterion 9: fulfillment grows with the scaling dimensionality") {
  const auto grouped = sweep_dims(scenario("e4.json"));
  REQUIRE(grouped.size() == 3);
  std::vector<double> medians;
  for (const auto& [label, group] : grouped) {
    std::vector<double> m;
    for (const auto& s : group) m.push_back(s.median);
    medians.push_back(stats::median(m));
  }
  const bool monotone = medians[0] <= medians[1] && medians[1] <= medians[2];
  const bool gap_ok = medians[2] - medians[0] >= 0.05;
  const bool pass = monotone && gap_ok;
  report(9, pass,
         fmt("medians dims1=%.4f dims2=%.4f dims3=%.4f gap=%.4f (need >= 0.05)",
             medians[0], medians[1], medians[2], medians[2] - medians[0]));
  CHECK(pass);
}

TEST_CASE("criterion 10: caching does not cost runtime or quality") {
  Scenario cached = scenario("default.json");
  cached.repetitions = 1;  // sequential run: wall-clock medians stay clean
  Scenario uncached = cached;
  uncached.agent.rask.caching = false;
  const auto sa = run_scenario(cached, "", "cached");
  const auto sb = run_scenario(uncached, "", "uncached");

  const bool runtime_ok = sa[0].runtime_p50_ms <= sb[0].runtime_p50_ms;
  const bool quality_ok = sa[0].median >= sb[0].median - 0.02;
  const bool pass = runtime_ok && quality_ok;
  report(10, pass,
         fmt("runtime p50 cached=%.2fms uncached=%.2fms; median cached=%.4f "
             "uncached=%.4f (allowance 0.02)",
             sa[0].runtime_p50_ms, sb[0].runtime_p50_ms, sa[0].median, sb[0].median));
  CHECK(pass);
}

TEST_CASE("criterion 11: service-count scaling stays within bounds") {
  Scenario sc = scenario("default.json");
  sc.repetitions = 1;  // sequential run: wall-clock medians stay clean
  const auto grouped = sweep_services(sc);
  REQUIRE(grouped.size() == 3);
  std::vector<double> rt, med;
  for (const auto& [label, group] : grouped) {
    rt.push_back(group[0].runtime_p50_ms);
    med.push_back(group[0].median);
  }
  const bool runtime_ok = rt[2] <= 4.0 * rt[0];
  const bool quality_ok = med[2] >= med[0] - 0.10;
  const bool pass = runtime_ok && quality_ok;
  report(11, pass,
         fmt("runtime p50 3svc=%.2fms 9svc=%.2fms ratio=%.2f (limit 4.0); median "
             "3svc=%.4f 9svc=%.4f (allowance 0.10)",
             rt[0], rt[2], rt[2] / rt[0], med[0], med[2]));
  CHECK(pass);
}

TEST_CASE("criterion 12: determinism and conservation") {
  const Scenario sc = scenario("diurnal.json");
  const auto a = run_repetition(sc, 0, "det");
  const auto b = run_repetition(sc, 0, "det");
  const bool deterministic = a.metrics_csv == b.metrics_csv;

  // Conservation identity on a driven run of every scenario in the suite.
  bool conserved = true;
  for (const std::string& file : {"default.json", "diurnal.json", "e4.json"}) {
    const Scenario s = scenario(file);
    std::map<std::string, RequestPattern> patterns;
    for (const auto& svc : s.registry.services) {
      const auto ps = pattern_spec_for(s, svc);
      patterns[svc.id.key()] =
          gen_pattern(ps.kind, s.duration_s, ps.max_rps, ps.seed, ps.csv);
    }
    Environment env(s.registry, patterns, s.settle_ticks);
    RaskConfig cfg = s.agent.rask;
    cfg.dims = s.dims;
    RaskAgent agent(s.registry, cfg);
    run_agent(env, agent, s.duration_s, s.base_seed);
    for (const auto& svc : s.registry.services) {
      const auto& c = env.counters(svc.id.key());
      if (c.arrivals != c.processed + env.backlog(svc.id.key()) + c.dropped)
        conserved = false;
    }
  }
  const bool pass = deterministic && conserved;
  report(12, pass,
         fmt("identical_metrics_csv=%s conservation=%s", deterministic ? "yes" : "no",
             conserved ? "yes" : "no"));
  CHECK(pass);
}
