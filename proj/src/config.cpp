#include "uasabi/config.hpp"

#include "uasabi/error.hpp"
#include "uasabi/io.hpp"
#include "json_util.hpp"

#include <algorithm>

namespace uasabi {
using detail::json;
using detail::ObjectReader;

namespace {

json prior_list_to_json(const std::vector<DistributionSpec>& d, const std::vector<std::string>& names) {
  json a = json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    json e;
    e["name"] = names[i];
    const json dj = detail::dist_to_json(d[i]);
    e["dist"] = dj["dist"];
    e["params"] = dj["params"];
    a.push_back(e);
  }
  return a;
}

void prior_list_from_json(const json& a, const std::string& path, const std::string& prefix,
                          std::vector<DistributionSpec>& dists, std::vector<std::string>& names) {
  if (!a.is_array() || a.empty()) throw ConfigError(path + ": expected a non-empty array");
  dists.clear();
  names.clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!a[i].is_object()) throw ConfigError(p + ": expected an object");
    json d = a[i];
    std::string name = prefix + std::to_string(i + 1);
    if (d.contains("name")) {
      if (!d["name"].is_string()) throw ConfigError(p + ".name: expected a string");
      name = d["name"].get<std::string>();
      d.erase("name");
    }
    if (name.rfind(prefix, 0) != 0) throw ConfigError(p + ".name: must start with '" + prefix + "'");
    dists.push_back(detail::dist_from_json(d, p));
    names.push_back(name);
  }
}

json schedule_to_json(const TrainSchedule& s) {
  json j;
  j["epochs"] = s.epochs;
  j["batches_per_epoch"] = s.batches_per_epoch;
  j["batch_size"] = s.batch_size;
  j["learning_rate"] = s.learning_rate;
  j["lr_alpha"] = s.lr_alpha;
  j["calibration_size"] = s.calibration_size;
  return j;
}

void schedule_from_json(const json& j, const std::string& path, TrainSchedule& s) {
  ObjectReader r(j, path);
  r.get("epochs", s.epochs);
  r.get("batches_per_epoch", s.batches_per_epoch);
  r.get("batch_size", s.batch_size);
  r.get("learning_rate", s.learning_rate);
  r.get("lr_alpha", s.lr_alpha);
  r.get("calibration_size", s.calibration_size);
  r.finish();
  try {
    s.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json architecture_to_json(const NpeArchitecture& a) {
  json j;
  j["element_hidden"] = a.element_hidden;
  j["element_out"] = a.element_out;
  j["post_hidden"] = a.post_hidden;
  j["summary_dim"] = a.summary_dim;
  j["coupling_blocks"] = a.coupling_blocks;
  j["coupling_hidden"] = a.coupling_hidden;
  j["clamp"] = a.clamp;
  j["activation"] = to_string(a.activation);
  return j;
}

void architecture_from_json(const json& j, const std::string& path, NpeArchitecture& a) {
  ObjectReader r(j, path);
  r.get("element_hidden", a.element_hidden);
  r.get("element_out", a.element_out);
  r.get("post_hidden", a.post_hidden);
  r.get("summary_dim", a.summary_dim);
  r.get("coupling_blocks", a.coupling_blocks);
  r.get("coupling_hidden", a.coupling_hidden);
  r.get("clamp", a.clamp);
  std::string act = to_string(a.activation);
  r.get("activation", act);
  r.finish();
  try {
    a.activation = activation_from_string(act);
  } catch (const InvalidParameter& e) {
    throw ConfigError(path + ".activation: " + e.what());
  }
  auto positive = [&](const std::vector<int>& v, const char* key) {
    for (int w : v)
      if (w < 1) throw ConfigError(path + "." + key + ": widths must be >= 1");
  };
  positive(a.element_hidden, "element_hidden");
  positive(a.post_hidden, "post_hidden");
  positive(a.coupling_hidden, "coupling_hidden");
  if (a.element_out < 1 || a.summary_dim < 1 || a.coupling_blocks < 1)
    throw ConfigError(path + ": element_out, summary_dim and coupling_blocks must be >= 1");
  if (!(a.clamp > 0.0)) throw ConfigError(path + ".clamp: must be > 0");
}

json mcmc_section_to_json(const McmcConfig& c) {
  json j = detail::mcmc_to_json(c);
  j.erase("seed");
  return j;
}

McmcConfig mcmc_section_from_json(const json& j, const std::string& path, const McmcConfig& base) {
  if (j.is_object() && j.contains("seed"))
    throw ConfigError(path + ".seed: seeds are derived from --seed, not set in the config");
  return detail::mcmc_from_json(j, path, base);
}

json epost_to_json(const EPostConfig& c) {
  json j;
  j["warmup"] = c.n_warmup;
  j["draws"] = c.n_draws;
  j["leapfrog_steps"] = c.leapfrog_steps;
  j["target_accept"] = c.target_accept;
  j["max_surrogate_draws"] = c.max_surrogate_draws ? json(*c.max_surrogate_draws) : json(nullptr);
  j["max_failure_fraction"] = c.max_failure_fraction;
  return j;
}

void epost_from_json(const json& j, const std::string& path, EPostConfig& c) {
  ObjectReader r(j, path);
  r.get("warmup", c.n_warmup);
  r.get("draws", c.n_draws);
  r.get("leapfrog_steps", c.leapfrog_steps);
  r.get("target_accept", c.target_accept);
  if (r.has("max_surrogate_draws")) {
    const json& m = r.at("max_surrogate_draws");
    if (m.is_null()) c.max_surrogate_draws.reset();
    else if (m.is_number_integer() && m.get<long>() > 0) c.max_surrogate_draws = m.get<Eigen::Index>();
    else throw ConfigError(path + ".max_surrogate_draws: expected a positive integer or null");
  }
  r.get("max_failure_fraction", c.max_failure_fraction);
  r.finish();
  if (c.n_warmup < 0 || c.n_draws < 1 || c.leapfrog_steps < 1)
    throw ConfigError(path + ": warmup >= 0, draws >= 1 and leapfrog_steps >= 1 required");
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0))
    throw ConfigError(path + ".target_accept: must lie in (0, 1)");
  if (!(c.max_failure_fraction >= 0.0 && c.max_failure_fraction <= 1.0))
    throw ConfigError(path + ".max_failure_fraction: must lie in [0, 1]");
}

json box_to_json(const std::vector<std::pair<double, double>>& box) {
  json a = json::array();
  for (const auto& [lo, hi] : box) a.push_back(json::array({lo, hi}));
  return a;
}

std::vector<std::pair<double, double>> box_from_json(const json& a, const std::string& path) {
  if (!a.is_array()) throw ConfigError(path + ": expected an array of [lo, hi] pairs");
  std::vector<std::pair<double, double>> box;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& e = a[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected [lo, hi]");
    const double lo = e[0].get<double>(), hi = e[1].get<double>();
    if (!(lo < hi)) throw ConfigError(path + "[" + std::to_string(i) + "]: lo must be < hi");
    box.emplace_back(lo, hi);
  }
  return box;
}

void overlay(const json& root, Config& c) {
  ObjectReader r(root, "config");
  // A new prior invalidates the LogSin design box unless one is given.
  if (r.has("prior")) {
    c.surrogate.design_box.clear();
    ObjectReader p(r.at("prior"), "config.prior");
    if (p.has("x"))
      prior_list_from_json(p.at("x"), "config.prior.x", "x_", c.prior.spec.x_prior, c.prior.x_names);
    if (p.has("omega"))
      prior_list_from_json(p.at("omega"), "config.prior.omega", "omega_", c.prior.spec.omega_prior,
                           c.prior.omega_names);
    p.finish();
  }
  if (r.has("surrogate")) {
    const std::string path = "config.surrogate";
    ObjectReader s(r.at("surrogate"), path);
    auto& cs = c.surrogate;
    s.get("basis", cs.basis);
    s.get("degree", cs.degree);
    s.get("n_train", cs.n_train);
    if (s.has("design_box")) cs.design_box = box_from_json(s.at("design_box"), path + ".design_box");
    if (s.has("coef_prior")) cs.prior.coef_prior = detail::dist_from_json(s.at("coef_prior"), path + ".coef_prior");
    if (s.has("sigma_prior"))
      cs.prior.sigma_prior = detail::dist_from_json(s.at("sigma_prior"), path + ".sigma_prior");
    if (s.has("fixed_sigma")) {
      const json& f = s.at("fixed_sigma");
      if (f.is_null()) cs.prior.fixed_sigma.reset();
      else if (f.is_number() && f.get<double>() > 0.0) cs.prior.fixed_sigma = f.get<double>();
      else throw ConfigError(path + ".fixed_sigma: expected a positive number or null");
    }
    s.get("rhat_threshold", cs.fit.rhat_threshold);
    s.get("allow_unconverged", cs.fit.allow_unconverged);
    s.get("apc_mc_seed", cs.apc_mc_seed);
    s.finish();
  }
  if (r.has("npe")) {
    ObjectReader n(r.at("npe"), "config.npe");
    if (n.has("schedule")) schedule_from_json(n.at("schedule"), "config.npe.schedule", c.npe.schedule);
    if (n.has("architecture"))
      architecture_from_json(n.at("architecture"), "config.npe.architecture", c.npe.architecture);
    n.get("observations_per_set", c.npe.observations_per_set);
    n.get("low_budget", c.npe.low_budget);
    n.finish();
  }
  if (r.has("mcmc")) {
    ObjectReader m(r.at("mcmc"), "config.mcmc");
    if (m.has("surrogate"))
      c.mcmc.surrogate = mcmc_section_from_json(m.at("surrogate"), "config.mcmc.surrogate", c.mcmc.surrogate);
    if (m.has("point")) c.mcmc.point = mcmc_section_from_json(m.at("point"), "config.mcmc.point", c.mcmc.point);
    if (m.has("epost")) epost_from_json(m.at("epost"), "config.mcmc.epost", c.mcmc.epost);
    m.finish();
  }
  if (r.has("study")) {
    ObjectReader s(r.at("study"), "config.study");
    auto& st = c.study;
    s.get("n_replications", st.n_replications);
    s.get("posterior_draws", st.posterior_draws);
    s.get("band_level", st.band_level);
    s.get("band_simulations", st.band_simulations);
    s.get("methods", st.methods);
    s.get("workers", st.workers);
    s.get("breakeven_runs", st.breakeven_runs);
    s.get("validation_sets", st.validation_sets);
    s.get("dataset", st.dataset);
    s.get("test_dataset", st.test_dataset);
    s.finish();
  }
  r.finish();
}

}  // namespace

void Config::validate() const {
  try {
    prior.spec.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config.prior: ") + e.what());
  }
  if (prior.x_names.size() != prior.spec.x_prior.size() ||
      prior.omega_names.size() != prior.spec.omega_prior.size())
    throw ConfigError("config.prior: one name per distribution required");
  const auto& s = surrogate;
  if (s.basis != "legendre" && s.basis != "apc")
    throw ConfigError("config.surrogate.basis: expected 'legendre' or 'apc', got '" + s.basis + "'");
  if (s.degree < 0) throw ConfigError("config.surrogate.degree: must be >= 0");
  if (s.n_train < 1) throw ConfigError("config.surrogate.n_train: must be >= 1");
  const auto inputs = static_cast<std::size_t>(prior.spec.x_dim() + prior.spec.param_dim());
  if (!s.design_box.empty() && s.design_box.size() != inputs)
    throw ConfigError("config.surrogate.design_box: expected " + std::to_string(inputs) +
                      " intervals (x then omega), got " + std::to_string(s.design_box.size()));
  if (!(s.fit.rhat_threshold > 1.0)) throw ConfigError("config.surrogate.rhat_threshold: must be > 1");
  if (npe.observations_per_set < 1) throw ConfigError("config.npe.observations_per_set: must be >= 1");
  if (npe.low_budget < 1) throw ConfigError("config.npe.low_budget: must be >= 1");
  const auto& st = study;
  if (st.n_replications < 1) throw ConfigError("config.study.n_replications: must be >= 1");
  if (st.posterior_draws < 1) throw ConfigError("config.study.posterior_draws: must be >= 1");
  if (!(st.band_level > 0.0 && st.band_level < 1.0))
    throw ConfigError("config.study.band_level: must lie in (0, 1)");
  if (st.band_simulations < 100) throw ConfigError("config.study.band_simulations: must be >= 100");
  if (st.workers < 0) throw ConfigError("config.study.workers: must be >= 0");
  if (st.validation_sets < 1) throw ConfigError("config.study.validation_sets: must be >= 1");
  for (const auto& m : st.methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      throw ConfigError("config.study.methods: unknown method '" + m + "'");
  for (int n : st.breakeven_runs)
    if (n < 0) throw ConfigError("config.study.breakeven_runs: counts must be >= 0");
}

Config logsin_config() {
  Config c;
  c.prior.spec.x_prior = {DistributionSpec::uniform(1.0, 200.0)};
  c.prior.spec.omega_prior = {DistributionSpec::normal(1.0, 0.2)};
  c.prior.x_names = {"x_1"};
  c.prior.omega_names = {"omega_1"};
  c.surrogate.design_box = {{1.0, 200.0}, {0.6, 1.4}};
  c.mcmc.surrogate.n_draws = 250;
  c.mcmc.surrogate.thin = 4;
  c.mcmc.surrogate.leapfrog_steps = 20;
  return c;
}

Config parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  Config c = logsin_config();
  try {
    overlay(root, c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::string config_to_json(const Config& c) {
  json j;
  json prior;
  prior["x"] = prior_list_to_json(c.prior.spec.x_prior, c.prior.x_names);
  prior["omega"] = prior_list_to_json(c.prior.spec.omega_prior, c.prior.omega_names);
  j["prior"] = prior;
  const auto& s = c.surrogate;
  json sj;
  sj["basis"] = s.basis;
  sj["degree"] = s.degree;
  sj["n_train"] = s.n_train;
  sj["design_box"] = box_to_json(s.design_box);
  sj["coef_prior"] = detail::dist_to_json(s.prior.coef_prior);
  sj["sigma_prior"] = detail::dist_to_json(s.prior.sigma_prior);
  sj["fixed_sigma"] = s.prior.fixed_sigma ? json(*s.prior.fixed_sigma) : json(nullptr);
  sj["rhat_threshold"] = s.fit.rhat_threshold;
  sj["allow_unconverged"] = s.fit.allow_unconverged;
  sj["apc_mc_seed"] = s.apc_mc_seed;
  j["surrogate"] = sj;
  json nj;
  nj["schedule"] = schedule_to_json(c.npe.schedule);
  nj["architecture"] = architecture_to_json(c.npe.architecture);
  nj["observations_per_set"] = c.npe.observations_per_set;
  nj["low_budget"] = c.npe.low_budget;
  j["npe"] = nj;
  json mj;
  mj["surrogate"] = mcmc_section_to_json(c.mcmc.surrogate);
  mj["point"] = mcmc_section_to_json(c.mcmc.point);
  mj["epost"] = epost_to_json(c.mcmc.epost);
  j["mcmc"] = mj;
  const auto& st = c.study;
  json stj;
  stj["n_replications"] = st.n_replications;
  stj["posterior_draws"] = st.posterior_draws;
  stj["band_level"] = st.band_level;
  stj["band_simulations"] = st.band_simulations;
  stj["methods"] = st.methods;
  stj["workers"] = st.workers;
  stj["breakeven_runs"] = st.breakeven_runs;
  stj["validation_sets"] = st.validation_sets;
  stj["dataset"] = st.dataset;
  stj["test_dataset"] = st.test_dataset;
  j["study"] = stj;
  return j.dump(1, '\t') + "\n";
}

}  // namespace uasabi
