#pragma once

#include "uasabi/error.hpp"
#include "uasabi/mcmc.hpp"
#include "uasabi/numerics.hpp"
#include "uasabi/polychaos.hpp"

#include <json.hpp>

#include <limits>
#include <set>
#include <string>
#include <vector>

namespace uasabi::detail {

using json = nlohmann::ordered_json;

/// Walks one JSON object, rejecting keys that are never read.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(path_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw SchemaError(path_ + "." + key + ": wrong type");
    }
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw SchemaError(path_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json dist_to_json(const DistributionSpec& d) {
  static const char* names[] = {"normal", "half_normal", "uniform", "beta", "scaled_beta"};
  json j;
  j["dist"] = names[static_cast<int>(d.kind())];
  j["params"] = d.params();
  return j;
}

inline DistributionSpec dist_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  std::string name;
  std::vector<double> p;
  r.get("dist", name);
  r.get("params", p);
  r.finish();
  auto need = [&](std::size_t n) {
    if (p.size() != n)
      throw SchemaError(path + ": distribution '" + name + "' takes " + std::to_string(n) +
                        " parameters");
  };
  try {
    if (name == "normal") return need(2), DistributionSpec::normal(p[0], p[1]);
    if (name == "half_normal") return need(1), DistributionSpec::half_normal(p[0]);
    if (name == "uniform") return need(2), DistributionSpec::uniform(p[0], p[1]);
    if (name == "beta") return need(2), DistributionSpec::beta(p[0], p[1]);
    if (name == "scaled_beta") return need(4), DistributionSpec::scaled_beta(p[0], p[1], p[2], p[3]);
  } catch (const InvalidParameter& e) {
    throw ConfigError(path + ": " + e.what());
  }
  throw SchemaError(path + ": unknown distribution '" + name + "'");
}

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) a.push_back(v(i));
    else a.push_back(nullptr);
  }
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& a, const std::string& path) {
  if (!a.is_array()) throw SchemaError(path + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].is_null()) v(static_cast<Eigen::Index>(i)) = std::numeric_limits<double>::quiet_NaN();
    else if (a[i].is_number()) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    else throw SchemaError(path + ": expected numbers");
  }
  return v;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_to_json(m.row(r).transpose()));
  return rows;
}

inline Eigen::MatrixXd mat_from_json(const json& a, Eigen::Index rows, Eigen::Index cols,
                                     const std::string& path) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows)
    throw SchemaError(path + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd v = vec_from_json(a[static_cast<std::size_t>(r)], path);
    if (v.size() != cols) throw SchemaError(path + ": expected " + std::to_string(cols) + " columns");
    m.row(r) = v.transpose();
  }
  return m;
}

inline json mcmc_to_json(const McmcConfig& c) {
  json j;
  j["chains"] = c.n_chains;
  j["warmup"] = c.n_warmup;
  j["draws"] = c.n_draws;
  j["thin"] = c.thin;
  j["leapfrog_steps"] = c.leapfrog_steps;
  j["target_accept"] = c.target_accept;
  j["seed"] = c.seed;
  return j;
}

inline McmcConfig mcmc_from_json(const json& j, const std::string& path, McmcConfig c = {}) {
  ObjectReader r(j, path);
  r.get("chains", c.n_chains);
  r.get("warmup", c.n_warmup);
  r.get("draws", c.n_draws);
  r.get("thin", c.thin);
  r.get("leapfrog_steps", c.leapfrog_steps);
  r.get("target_accept", c.target_accept);
  r.get("seed", c.seed);
  r.finish();
  if (c.n_chains < 1 || c.n_warmup < 0 || c.n_draws < 1 || c.thin < 1 || c.leapfrog_steps < 1)
    throw ConfigError(path + ": chains, draws, thin and leapfrog_steps must be >= 1, warmup >= 0");
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0))
    throw ConfigError(path + ": target_accept must lie in (0, 1)");
  return c;
}

inline json basis_to_json(const BasisSpec& b) {
  json a = json::array();
  for (const auto& d : b.dims) {
    json j;
    if (const auto* leg = std::get_if<LegendreOnBox>(&d)) {
      j["family"] = "legendre";
      j["lo"] = leg->lo;
      j["hi"] = leg->hi;
    } else {
      const auto& apc = std::get<ApcBasis1d>(d);
      j["family"] = "apc";
      j["shift"] = apc.shift;
      j["scale"] = apc.scale;
      j["coefficients"] = mat_to_json(apc.coefficients);
      j["weight"] = apc.weight ? dist_to_json(*apc.weight) : json(nullptr);
    }
    a.push_back(j);
  }
  return a;
}

inline BasisSpec basis_from_json(const json& a, const std::string& path) {
  if (!a.is_array()) throw SchemaError(path + ": expected an array");
  BasisSpec b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    ObjectReader r(a[i], p);
    std::string family;
    r.get("family", family);
    if (family == "legendre") {
      LegendreOnBox leg{};
      r.get("lo", leg.lo);
      r.get("hi", leg.hi);
      r.finish();
      b.dims.emplace_back(leg);
    } else if (family == "apc") {
      ApcBasis1d apc;
      r.get("shift", apc.shift);
      r.get("scale", apc.scale);
      const json& c = r.at("coefficients");
      const auto n = static_cast<Eigen::Index>(c.size());
      apc.coefficients = mat_from_json(c, n, n, p + ".coefficients");
      const json& w = r.at("weight");
      if (!w.is_null()) apc.weight = dist_from_json(w, p + ".weight");
      r.finish();
      b.dims.emplace_back(apc);
    } else {
      throw SchemaError(p + ": unknown basis family '" + family + "'");
    }
  }
  return b;
}

inline json index_set_to_json(const MultiIndexSet& s) {
  json j;
  j["dim"] = s.dim;
  j["max_total_degree"] = s.max_total_degree;
  j["indices"] = s.indices;
  return j;
}

inline MultiIndexSet index_set_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  MultiIndexSet s;
  r.get("dim", s.dim);
  r.get("max_total_degree", s.max_total_degree);
  r.get("indices", s.indices);
  r.finish();
  for (const auto& idx : s.indices)
    if (static_cast<int>(idx.size()) != s.dim) throw SchemaError(path + ": multi-index length mismatch");
  return s;
}

}  // namespace uasabi::detail
