#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rask/error.hpp"

namespace rask {

// Training data D for one service: rows of (features per the structural
// relation, measured tp_max).
struct ObservationTable {
  std::string service_key;
  std::vector<std::string> feature_names;
  std::vector<std::pair<std::vector<double>, double>> rows;

  size_t arity() const { return feature_names.size(); }

  void add(std::vector<double> x, double y) {
    if (x.size() != arity())
      throw Error("regression.arity", "row arity mismatch in observation table");
    for (double v : x)
      if (!std::isfinite(v))
        throw Error("regression.non_finite", "non-finite feature value");
    if (!std::isfinite(y))
      throw Error("regression.non_finite", "non-finite target value");
    rows.emplace_back(std::move(x), y);
  }
};

namespace poly {

// Exponent tuples of all monomials with total degree <= degree, graded
// lexicographic: constant first, then degree 1, 2, ... Within a degree the
// leftmost feature's exponent decreases last-to-first (so (2,3) at degree 2
// expands to 1, x1, x2, x1^2, x1*x2, x2^2).
inline std::vector<std::vector<int>> exponents(size_t arity, int degree) {
  if (degree < 1)
    throw Error("regression.bad_degree", "polynomial degree must be >= 1");
  std::vector<std::vector<int>> out;
  std::vector<int> current(arity, 0);
  // All compositions of `total` into `arity` parts, lexicographically by
  // descending first component.
  auto emit = [&](auto&& self, size_t pos, int remaining) -> void {
    if (pos + 1 == arity) {
      current[pos] = remaining;
      out.push_back(current);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[pos] = e;
      self(self, pos + 1, remaining - e);
    }
  };
  for (int total = 0; total <= degree; ++total) {
    if (arity == 0) {
      if (total == 0) out.push_back({});
      continue;
    }
    emit(emit, 0, total);
  }
  return out;
}

inline size_t monomial_count(size_t arity, int degree) {
  // C(arity + degree, degree)
  size_t n = 1;
  for (int i = 1; i <= degree; ++i) n = n * (arity + i) / i;
  return n;
}

}  // namespace poly

inline std::vector<double> poly_features(const std::vector<double>& x, int degree) {
  const auto exps = poly::exponents(x.size(), degree);
  std::vector<double> out;
  out.reserve(exps.size());
  for (const auto& e : exps) {
    double m = 1.0;
    for (size_t i = 0; i < x.size(); ++i)
      for (int j = 0; j < e[i]; ++j) m *= x[i];
    out.push_back(m);
  }
  return out;
}

// Per-feature centering/scaling applied before expansion; high-degree normal
// equations over ranges like quality in [100, 1000] are unusable otherwise.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> z(x.size());
    for (size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / scale[i];
    return z;
  }
};

struct RegressionModel {
  std::string service_key;
  int degree = 2;            // effective degree used for the fit
  int requested_degree = 2;  // differs from `degree` after an underdetermined fallback
  std::vector<double> weights;
  std::vector<std::string> feature_names;
  FeatureScaler scaler;

  bool degree_reduced() const { return degree != requested_degree; }

  double predict_raw(const std::vector<double>& x) const {
    if (x.size() != feature_names.size())
      throw Error("regression.arity", "prediction arity mismatch");
    const auto phi = poly_features(scaler.apply(x), degree);
    double y = 0.0;
    for (size_t i = 0; i < phi.size(); ++i) y += weights[i] * phi[i];
    return y;
  }

  // Throughput prediction; negative extrapolations clamp to zero.
  double predict(const std::vector<double>& x) const {
    return std::max(0.0, predict_raw(x));
  }
};

inline RegressionModel fit(const ObservationTable& table, int degree) {
  if (table.rows.empty())
    throw Error("regression.empty", "cannot fit an empty observation table");
  if (degree < 1)
    throw Error("regression.bad_degree", "polynomial degree must be >= 1");

  const size_t n = table.rows.size();
  const size_t arity = table.arity();

  // Underdetermined fallback: largest degree whose basis fits the row count.
  int effective = degree;
  while (effective > 1 && poly::monomial_count(arity, effective) > n) --effective;

  RegressionModel model;
  model.service_key = table.service_key;
  model.requested_degree = degree;
  model.degree = effective;
  model.feature_names = table.feature_names;

  model.scaler.mean.assign(arity, 0.0);
  model.scaler.scale.assign(arity, 1.0);
  for (const auto& [x, y] : table.rows)
    for (size_t i = 0; i < arity; ++i) model.scaler.mean[i] += x[i];
  for (size_t i = 0; i < arity; ++i) model.scaler.mean[i] /= static_cast<double>(n);
  {
    std::vector<double> var(arity, 0.0);
    for (const auto& [x, y] : table.rows)
      for (size_t i = 0; i < arity; ++i) {
        const double d = x[i] - model.scaler.mean[i];
        var[i] += d * d;
      }
    for (size_t i = 0; i < arity; ++i) {
      const double sd = std::sqrt(var[i] / static_cast<double>(n));
      model.scaler.scale[i] = sd > 1e-12 ? sd : 1.0;
    }
  }

  const size_t m = poly::monomial_count(arity, effective);
  Eigen::MatrixXd design(n, m);
  Eigen::VectorXd target(n);
  for (size_t r = 0; r < n; ++r) {
    const auto phi = poly_features(model.scaler.apply(table.rows[r].first), effective);
    for (size_t c = 0; c < m; ++c) design(r, c) = phi[c];
    target(r) = table.rows[r].second;
  }

  // Rank-revealing least squares; returns the minimum-norm solution on
  // rank-deficient systems.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  Eigen::VectorXd w = cod.solve(target);

  model.weights.assign(w.data(), w.data() + w.size());
  for (double v : model.weights)
    if (!std::isfinite(v))
      throw Error("regression.non_finite", "non-finite weight after fit");
  return model;
}

inline double mse(const RegressionModel& model, const ObservationTable& table) {
  if (table.rows.empty())
    throw Error("regression.empty", "cannot score an empty observation table");
  double acc = 0.0;
  for (const auto& [x, y] : table.rows) {
    const double r = y - model.predict_raw(x);
    acc += r * r;
  }
  return acc / static_cast<double>(table.rows.size());
}

// Degree selection on a held-out split (ties go to the lower degree).
inline int select_degree(const ObservationTable& table,
                         const std::vector<int>& candidates,
                         double split, std::uint64_t seed) {
  if (candidates.empty())
    throw Error("regression.bad_degree", "no candidate degrees");
  const size_t n = table.rows.size();
  const size_t n_test = std::max<size_t>(1, static_cast<size_t>(std::llround(split * n)));
  if (n_test >= n)
    throw Error("regression.insufficient_rows", "not enough rows for a test split");
  const size_t n_train = n - n_test;
  for (int d : candidates)
    if (poly::monomial_count(table.arity(), d) > n_train)
      throw Error("regression.insufficient_rows",
                  "train split too small for degree " + std::to_string(d));

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  ObservationTable train{table.service_key, table.feature_names, {}};
  ObservationTable test{table.service_key, table.feature_names, {}};
  for (size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[order[i]];
    (i < n_train ? train : test).rows.push_back(row);
  }

  std::vector<std::pair<int, double>> scored;
  double best_mse = std::numeric_limits<double>::infinity();
  for (int d : candidates) {
    const double e = mse(fit(train, d), test);
    scored.emplace_back(d, e);
    best_mse = std::min(best_mse, e);
  }
  // One-standard-error band: nested bases differ only by estimation noise on
  // the split, so anything within the MSE estimate's own standard error
  // counts as a tie and the lower degree wins.
  const double band = best_mse * std::sqrt(2.0 / static_cast<double>(n_test));
  std::sort(scored.begin(), scored.end());
  for (const auto& [d, e] : scored)
    if (e <= best_mse + band + 1e-12) return d;
  return scored.front().first;
}

// CSV import/export (header: feature names..., tp_max).
inline std::string table_to_csv(const ObservationTable& table) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& f : table.feature_names) os << f << ",";
  os << "tp_max\n";
  for (const auto& [x, y] : table.rows) {
    for (double v : x) os << v << ",";
    os << y << "\n";
  }
  return os.str();
}

inline ObservationTable table_from_csv(std::istream& in, const std::string& service_key) {
  ObservationTable table;
  table.service_key = service_key;
  std::string line;
  if (!std::getline(in, line))
    throw Error("regression.csv", "empty observation CSV");
  std::stringstream header(line);
  std::string col;
  std::vector<std::string> cols;
  while (std::getline(header, col, ',')) cols.push_back(col);
  if (cols.empty() || cols.back() != "tp_max")
    throw Error("regression.csv", "observation CSV must end with a tp_max column");
  table.feature_names.assign(cols.begin(), cols.end() - 1);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::vector<double> values;
    while (std::getline(row, col, ',')) values.push_back(std::stod(col));
    if (values.size() != cols.size())
      throw Error("regression.csv", "observation CSV row width mismatch");
    const double y = values.back();
    values.pop_back();
    table.add(std::move(values), y);
  }
  return table;
}

}  // namespace rask
