#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rask/error.hpp"

namespace rask {

using json = nlohmann::json;

struct ServiceId {
  std::string host;
  std::string service_type;  // "qr", "cv", "pc", ...
  std::string container_name;

  // (host, container_name) is the unique key within a registry.
  std::string key() const { return host + "/" + container_name; }

  friend bool operator==(const ServiceId&, const ServiceId&) = default;
};

enum class StepRule { Continuous, Integer, MultipleOf };

struct ElasticityParameter {
  std::string name;
  std::string endpoint;
  double min = 0.0;
  double max = 0.0;
  StepRule step = StepRule::Continuous;
  double step_k = 1.0;  // quantum for MultipleOf; ignored otherwise
  std::string unit;

  bool quantized() const { return step != StepRule::Continuous; }
  double quantum() const { return step == StepRule::Integer ? 1.0 : step_k; }
};

struct SloDefinition {
  std::string variable;  // a parameter name or a derived metric ("completion")
  double target = 0.0;
  double weight = 1.0;
};

struct StructuralRelation {
  std::vector<std::string> features;
  std::string target = "tp_max";
  std::optional<int> degree_override;
};

struct ServiceDescriptor {
  ServiceId id;
  std::vector<ElasticityParameter> params;
  std::vector<SloDefinition> slos;
  StructuralRelation relation;
  std::map<std::string, double> defaults;
  double default_rps = 0.0;
  json sim_model;  // opaque here; interpreted by simenv

  const ElasticityParameter* find_param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

struct GlobalConstraints {
  std::string resource_name = "cores";
  double capacity = 0.0;
};

struct Registry {
  std::vector<ServiceDescriptor> services;
  GlobalConstraints constraints;

  const ServiceDescriptor* find(const std::string& key) const {
    for (const auto& s : services)
      if (s.id.key() == key) return &s;
    return nullptr;
  }
};

// Nearest legal value for `param`; equidistant cases round toward max.
inline double clip_assignment(const ElasticityParameter& param, double value) {
  if (!std::isfinite(value))
    throw Error("clip.non_finite",
                "cannot clip non-finite value for parameter '" + param.name + "'");
  double v = std::clamp(value, param.min, param.max);
  if (!param.quantized()) return v;

  const double k = param.quantum();
  const double eps = 1e-9;
  const double lo = std::ceil(param.min / k - eps) * k;
  const double hi = std::floor(param.max / k + eps) * k;
  if (lo > hi + eps)
    throw Error("clip.empty_range",
                "parameter '" + param.name + "' has no legal value in range");
  v = std::clamp(v, lo, hi);
  const double down = std::floor(v / k + eps) * k;
  const double up = std::ceil(v / k - eps) * k;
  double result;
  if (v - down < up - v - eps)
    result = down;
  else
    result = up;  // ties go up
  return std::clamp(result, lo, hi);
}

namespace detail {

inline StepRule parse_step(const std::string& s, double* k) {
  if (s == "continuous") return StepRule::Continuous;
  if (s == "integer") return StepRule::Integer;
  const std::string prefix = "multiple-of(";
  if (s.rfind(prefix, 0) == 0 && s.back() == ')') {
    *k = std::stod(s.substr(prefix.size(), s.size() - prefix.size() - 1));
    return StepRule::MultipleOf;
  }
  throw Error("registry.bad_step", "unknown step rule '" + s + "'");
}

inline std::string step_to_string(const ElasticityParameter& p) {
  switch (p.step) {
    case StepRule::Continuous: return "continuous";
    case StepRule::Integer: return "integer";
    case StepRule::MultipleOf: {
      std::ostringstream os;
      os << "multiple-of(" << p.step_k << ")";
      return os.str();
    }
  }
  return "continuous";
}

inline void validate_service(const ServiceDescriptor& s) {
  if (s.id.host.empty() || s.id.service_type.empty() || s.id.container_name.empty())
    throw Error("registry.bad_id", "service id fields must be non-empty");
  for (const auto& p : s.params) {
    if (!(p.min < p.max))
      throw Error("registry.bad_bounds",
                  "parameter '" + p.name + "' of " + s.id.key() + " needs min < max");
    if (p.step == StepRule::MultipleOf && p.step_k <= 0)
      throw Error("registry.bad_step", "multiple-of quantum must be positive");
    if (p.quantized()) {
      const double k = p.quantum();
      if (std::ceil(p.min / k - 1e-9) * k > p.max + 1e-9)
        throw Error("registry.empty_range",
                    "parameter '" + p.name + "' has no legal value after quantization");
    }
  }
  for (const auto& q : s.slos) {
    if (!std::isfinite(q.target))
      throw Error("registry.bad_slo", "SLO target must be finite");
    if (!(q.weight > 0.0) || q.weight > 1.0)
      throw Error("registry.bad_slo", "SLO weight must lie in (0, 1]");
    if (q.variable != "completion" && s.find_param(q.variable) == nullptr)
      throw Error("registry.unknown_slo_variable",
                  "SLO variable '" + q.variable + "' unknown in " + s.id.key());
  }
  for (const auto& f : s.relation.features)
    if (s.find_param(f) == nullptr)
      throw Error("registry.unknown_feature",
                  "relation feature '" + f + "' unknown in " + s.id.key());
  if (s.relation.degree_override &&
      (*s.relation.degree_override < 1 || *s.relation.degree_override > 6))
    throw Error("registry.bad_degree", "degree_override must lie in [1, 6]");
  for (const auto& p : s.params)
    if (!s.defaults.count(p.name))
      throw Error("registry.missing_default",
                  "no default for parameter '" + p.name + "' of " + s.id.key());
  if (s.default_rps < 0)
    throw Error("registry.bad_rps", "default_rps must be >= 0");
}

}  // namespace detail

inline Registry load_registry(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("registry.malformed", std::string("malformed registry document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("services") || !doc.contains("constraints"))
    throw Error("registry.malformed", "registry needs 'services' and 'constraints'");

  Registry reg;
  try {
    const auto& c = doc.at("constraints");
    reg.constraints.resource_name = c.value("resource", "cores");
    reg.constraints.capacity = c.at("capacity").get<double>();
    if (!(reg.constraints.capacity > 0))
      throw Error("registry.bad_capacity", "capacity must be positive");

    for (const auto& js : doc.at("services")) {
      ServiceDescriptor s;
      s.id.host = js.at("id").at("host").get<std::string>();
      s.id.service_type = js.at("id").at("service_type").get<std::string>();
      s.id.container_name = js.at("id").at("container_name").get<std::string>();
      for (const auto& jp : js.at("params")) {
        ElasticityParameter p;
        p.name = jp.at("name").get<std::string>();
        p.endpoint = jp.value("endpoint", "/" + p.name);
        p.min = jp.at("min").get<double>();
        p.max = jp.at("max").get<double>();
        p.step = detail::parse_step(jp.value("step", "continuous"), &p.step_k);
        p.unit = jp.value("unit", "");
        s.params.push_back(std::move(p));
      }
      for (const auto& jq : js.at("slos")) {
        SloDefinition q;
        q.variable = jq.at("variable").get<std::string>();
        q.target = jq.at("target").get<double>();
        q.weight = jq.at("weight").get<double>();
        s.slos.push_back(std::move(q));
      }
      const auto& jr = js.at("relation");
      s.relation.features = jr.at("features").get<std::vector<std::string>>();
      s.relation.target = jr.value("target", "tp_max");
      if (jr.contains("degree_override"))
        s.relation.degree_override = jr.at("degree_override").get<int>();
      s.defaults = js.at("defaults").get<std::map<std::string, double>>();
      s.default_rps = js.at("default_rps").get<double>();
      if (js.contains("sim_model")) s.sim_model = js.at("sim_model");

      detail::validate_service(s);
      // Defaults must be a fixed point of clipping.
      for (auto& [name, value] : s.defaults) {
        const auto* p = s.find_param(name);
        if (p == nullptr)
          throw Error("registry.unknown_default",
                      "default for unknown parameter '" + name + "'");
        value = clip_assignment(*p, value);
      }
      reg.services.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error("registry.malformed", std::string("malformed registry document: ") + e.what());
  }

  // Uniqueness of (host, container_name).
  for (size_t i = 0; i < reg.services.size(); ++i)
    for (size_t j = i + 1; j < reg.services.size(); ++j)
      if (reg.services[i].id.key() == reg.services[j].id.key())
        throw Error("registry.duplicate_service",
                    "duplicate service key " + reg.services[i].id.key());

  // Minimum bounds of the shared resource must fit the capacity.
  double min_sum = 0.0;
  for (const auto& s : reg.services)
    if (const auto* p = s.find_param(reg.constraints.resource_name)) min_sum += p->min;
  if (min_sum > reg.constraints.capacity + 1e-9)
    throw Error("registry.capacity",
                "sum of minimum '" + reg.constraints.resource_name +
                    "' bounds exceeds capacity");

  return reg;
}

inline Registry load_registry_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error("registry.io", "cannot open registry file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_registry(buf.str());
}

inline std::string save_registry(const Registry& reg) {
  json doc;
  doc["constraints"] = {{"resource", reg.constraints.resource_name},
                        {"capacity", reg.constraints.capacity}};
  doc["services"] = json::array();
  for (const auto& s : reg.services) {
    json js;
    js["id"] = {{"host", s.id.host},
                {"service_type", s.id.service_type},
                {"container_name", s.id.container_name}};
    js["params"] = json::array();
    for (const auto& p : s.params)
      js["params"].push_back({{"name", p.name},
                              {"endpoint", p.endpoint},
                              {"min", p.min},
                              {"max", p.max},
                              {"step", detail::step_to_string(p)},
                              {"unit", p.unit}});
    js["slos"] = json::array();
    for (const auto& q : s.slos)
      js["slos"].push_back(
          {{"variable", q.variable}, {"target", q.target}, {"weight", q.weight}});
    js["relation"] = {{"features", s.relation.features}, {"target", s.relation.target}};
    if (s.relation.degree_override)
      js["relation"]["degree_override"] = *s.relation.degree_override;
    js["defaults"] = s.defaults;
    js["default_rps"] = s.default_rps;
    if (!s.sim_model.is_null()) js["sim_model"] = s.sim_model;
    doc["services"].push_back(std::move(js));
  }
  return doc.dump(2);
}

}  // namespace rask
