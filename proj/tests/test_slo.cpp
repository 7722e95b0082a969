#include <catch2/catch_amalgamated.hpp>

#include "rask/slo.hpp"

using namespace rask;

namespace {

SloDefinition make_slo(const std::string& variable, double target, double weight) {
  return SloDefinition{variable, target, weight};
}

}  // namespace

TEST_CASE("fulfillment saturates at the target") {
  CHECK(slo::fulfillment(make_slo("tp", 30.0, 1.0), 40.0) == 1.0);
  CHECK(slo::fulfillment(make_slo("tp", 30.0, 1.0), 30.0) == 1.0);
  CHECK(slo::fulfillment(make_slo("tp", 30.0, 1.0), 15.0) == 0.5);
  CHECK(slo::fulfillment(make_slo("q", 800.0, 1.0), 0.0) == 0.0);
  CHECK_THROWS_AS(slo::fulfillment(make_slo("q", 0.0, 1.0), 1.0), Error);
}

TEST_CASE("fulfillment is monotone in the metric and anti-monotone in the target") {
  for (double t : {10.0, 100.0, 800.0}) {
    double prev = -1.0;
    for (double m = 0.0; m <= 2.0 * t; m += t / 16.0) {
      const double f = slo::fulfillment(make_slo("v", t, 1.0), m);
      CHECK(f >= prev);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      prev = f;
    }
  }
  const double m = 50.0;
  double prev = 2.0;
  for (double t = 10.0; t <= 200.0; t += 10.0) {
    const double f = slo::fulfillment(make_slo("v", t, 1.0), m);
    CHECK(f <= prev);
    prev = f;
  }
}

TEST_CASE("completion is throughput over rps, clamped") {
  CHECK(slo::completion(40.0, 80.0) == 0.5);
  CHECK(slo::completion(100.0, 80.0) == 1.0);  // backlog drain clamps at 1
  CHECK(slo::completion(0.0, 0.0) == 1.0);     // no demand, no violation
  CHECK(slo::completion(0.0, 10.0) == 0.0);
}

TEST_CASE("service_fulfillment is the weighted mean of per-SLO values") {
  // QR with quality 550 against target 800 (w 0.5) and completion 0.5 (w 1.0)
  MetricsRow row;
  row.service_key = "edge0/qr-0";
  row.values["quality"] = 550.0;
  row.values["completion"] = 0.5;
  const std::vector<SloDefinition> slos = {make_slo("quality", 800.0, 0.5),
                                           make_slo("completion", 1.0, 1.0)};
  CHECK_THAT(slo::service_fulfillment(slos, row),
             Catch::Matchers::WithinAbs(0.5625, 1e-12));
}

TEST_CASE("service_fulfillment special cases") {
  MetricsRow row;
  row.values["quality"] = 900.0;
  row.values["completion"] = 1.0;
  const std::vector<SloDefinition> all_met = {make_slo("quality", 800.0, 0.5),
                                              make_slo("completion", 1.0, 1.0)};
  CHECK(slo::service_fulfillment(all_met, row) == 1.0);

  // single SLO: the weight cancels
  row.values["quality"] = 400.0;
  for (double w : {0.1, 0.5, 1.0})
    CHECK_THAT(slo::service_fulfillment({make_slo("quality", 800.0, w)}, row),
               Catch::Matchers::WithinAbs(0.5, 1e-12));

  CHECK_THROWS_AS(slo::service_fulfillment({make_slo("missing", 1.0, 1.0)}, row), Error);
  CHECK_THROWS_AS(slo::service_fulfillment({}, row), Error);
}

TEST_CASE("scaling all weights of a service leaves the aggregate unchanged") {
  MetricsRow row;
  row.values["quality"] = 550.0;
  row.values["completion"] = 0.7;
  const std::vector<SloDefinition> base = {make_slo("quality", 800.0, 0.5),
                                           make_slo("completion", 1.0, 1.0)};
  const double reference = slo::service_fulfillment(base, row);
  for (double factor : {0.25, 0.5, 0.9}) {
    std::vector<SloDefinition> scaled = base;
    for (auto& q : scaled) q.weight *= factor;
    CHECK_THAT(slo::service_fulfillment(scaled, row),
               Catch::Matchers::WithinAbs(reference, 1e-12));
  }
}

TEST_CASE("global_fulfillment is the arithmetic mean across services") {
  CHECK_THAT(slo::global_fulfillment({1.0, 0.5625, 0.9}),
             Catch::Matchers::WithinAbs(0.8208333333333333, 1e-12));
  CHECK(slo::global_fulfillment({0.37}) == 0.37);
  CHECK(slo::global_fulfillment({0.0, 1.0}) == 0.5);
  CHECK_THROWS_AS(slo::global_fulfillment({}), Error);
}
