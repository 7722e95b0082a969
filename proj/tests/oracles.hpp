// Test-only reference implementations, kept independent of the library's
// solution paths: a normal-equations least-squares solver (vs. the library's
// orthogonal decomposition) and a brute-force grid search (vs. the gradient
// solver).
#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rask/planner.hpp"
#include "rask/regression.hpp"
#include "rask/registry.hpp"

namespace oracles {

// Solve (X^T X) w = X^T y by Gaussian elimination with partial pivoting.
// Only valid for well-conditioned, full-rank designs.
inline std::vector<double> normal_equations_fit(
    const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
    int degree) {
  const size_t n = xs.size();
  const size_t m = rask::poly_features(xs.at(0), degree).size();

  std::vector<std::vector<double>> ata(m, std::vector<double>(m, 0.0));
  std::vector<double> aty(m, 0.0);
  for (size_t r = 0; r < n; ++r) {
    const auto phi = rask::poly_features(xs[r], degree);
    for (size_t i = 0; i < m; ++i) {
      aty[i] += phi[i] * ys[r];
      for (size_t j = 0; j < m; ++j) ata[i][j] += phi[i] * phi[j];
    }
  }

  for (size_t col = 0; col < m; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < m; ++r)
      if (std::abs(ata[r][col]) > std::abs(ata[pivot][col])) pivot = r;
    std::swap(ata[col], ata[pivot]);
    std::swap(aty[col], aty[pivot]);
    if (std::abs(ata[col][col]) < 1e-12)
      throw std::runtime_error("oracle: singular normal equations");
    for (size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = ata[r][col] / ata[col][col];
      for (size_t c = col; c < m; ++c) ata[r][c] -= f * ata[col][c];
      aty[r] -= f * aty[col];
    }
  }
  std::vector<double> w(m);
  for (size_t i = 0; i < m; ++i) w[i] = aty[i] / ata[i][i];
  return w;
}

inline double oracle_predict(const std::vector<double>& w,
                             const std::vector<double>& x, int degree) {
  const auto phi = rask::poly_features(x, degree);
  double y = 0.0;
  for (size_t i = 0; i < phi.size(); ++i) y += w[i] * phi[i];
  return y;
}

// Brute-force optimum of the planner objective over a documented grid:
// resource allocations step over the capacity simplex, and for each
// allocation every service picks its own best quality / model level
// (per-service terms are independent once cores are fixed, which makes the
// full cross product tractable).
inline double grid_search_objective(
    const rask::ModelSet& models, const std::vector<rask::ServiceDescriptor>& services,
    const rask::GlobalConstraints& constraints, const rask::RpsMap& rps,
    double cores_step = 0.25) {
  const size_t n = services.size();
  const auto terms = rask::detail::build_objective(services, models, rps);

  // Per-service grids over the non-resource parameters (one quantization unit
  // per step; 1 unit for continuous parameters).
  struct ServiceGrid {
    std::vector<std::map<std::string, double>> configs;  // without cores
  };
  std::vector<ServiceGrid> grids(n);
  for (size_t si = 0; si < n; ++si) {
    std::vector<std::map<std::string, double>> configs = {{}};
    for (const auto& p : services[si].params) {
      if (p.name == constraints.resource_name) continue;
      const double step = p.quantized() ? p.quantum() : 1.0;
      std::vector<std::map<std::string, double>> expanded;
      for (double v = p.min; v <= p.max + 1e-9; v += step)
        for (auto cfg : configs) {
          cfg[p.name] = std::min(v, p.max);
          expanded.push_back(std::move(cfg));
        }
      configs = std::move(expanded);
    }
    grids[si].configs = std::move(configs);
  }

  // Best per-service term for a given cores value (memoized per grid point).
  std::map<std::pair<size_t, long long>, double> memo;
  auto best_term = [&](size_t si, double cores) {
    const auto key = std::make_pair(si, std::llround(cores / cores_step));
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    double best = -1e300;
    for (const auto& cfg : grids[si].configs) {
      auto full = cfg;
      full[constraints.resource_name] = cores;
      best = std::max(best, terms[si].term(full, 0.0));
    }
    memo[key] = best;
    return best;
  };

  std::vector<double> core_mins(n), core_maxs(n);
  for (size_t si = 0; si < n; ++si) {
    const auto* p = services[si].find_param(constraints.resource_name);
    core_mins[si] = p->min;
    core_maxs[si] = p->max;
  }

  double best_total = -1e300;
  std::vector<double> cores(n);
  // Depth-first over the capacity simplex in cores_step increments.
  auto recurse = [&](auto&& self, size_t si, double used, double acc) -> void {
    if (si == n) {
      best_total = std::max(best_total, acc);
      return;
    }
    for (double c = core_mins[si]; c <= core_maxs[si] + 1e-9; c += cores_step) {
      double remaining_min = 0.0;
      for (size_t j = si + 1; j < n; ++j) remaining_min += core_mins[j];
      if (used + c + remaining_min > constraints.capacity + 1e-9) break;
      self(self, si + 1, used + c, acc + best_term(si, std::min(c, core_maxs[si])));
    }
  };
  recurse(recurse, 0, 0.0, 0.0);
  return best_total;
}

}  // namespace oracles
