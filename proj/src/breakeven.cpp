#include "study_detail.hpp"

#include "uasabi/error.hpp"
#include "uasabi/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace uasabi {

namespace {

double seconds_of(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BreakEvenReport run_breakeven(const Config& config, std::uint64_t seed, const std::vector<int>& n_runs,
                              int workers, const BreakEvenInputs* prepared) {
  config.validate();
  if (n_runs.empty()) throw InvalidParameter("breakeven: no run counts given");
  for (int n : n_runs)
    if (n < 0) throw InvalidParameter("breakeven: run counts must be >= 0");
  if (workers < 1) throw InvalidParameter("breakeven: workers must be >= 1");

  BreakEvenReport r;
  r.n_runs = n_runs;
  r.workers = workers;
  const SimulatorFn sim = logsin_simulator();

  BreakEvenInputs local;
  if (!prepared) {
    const SurrogateTrainingSet data =
        sobol_design_runs(sim, 1, config.surrogate.design_box, config.surrogate.n_train);
    local.surrogates = {fit_study_surrogate(config, data, seed, 0, workers)};
    const TrainResult tr = train_method("ua-sabi", config, local.surrogates, sim, seed);
    local.ua_model = tr.model;
    local.training_seconds = tr.wall_seconds;
    prepared = &local;
  }
  r.training_seconds = prepared->training_seconds;

  const int max_runs = *std::max_element(n_runs.begin(), n_runs.end());
  GeneratorMode truth_mode;
  truth_mode.source = SimulatorSource{sim, 1};
  truth_mode.observations_per_set = config.npe.observations_per_set;
  const RngStream stream = detail::study_stream(seed, detail::kBenchmarkStream);
  for (int i = 0; i < max_runs; ++i) {
    RngStream set_rng = stream.child(0).child(static_cast<std::uint64_t>(i));
    const TrainingItem item = generate_training_item(truth_mode, config.prior.spec, set_rng);
    RngStream post_rng = stream.child(1).child(static_cast<std::uint64_t>(i));
    r.ua_increments.push_back(seconds_of(
        [&] { npe_posterior(prepared->ua_model, item.set, config.study.posterior_draws, post_rng); }));
    EPostConfig ec = config.mcmc.epost;
    ec.seed = hash_combine(stream.child(2).next(), static_cast<std::uint64_t>(i));
    ec.workers = workers;
    r.epost_increments.push_back(
        seconds_of([&] { epost_posterior(prepared->surrogates, config.prior.spec, item.set, ec); }));
  }

  std::vector<double> ua_cum{r.training_seconds}, ep_cum{0.0};
  for (int i = 0; i < max_runs; ++i) {
    ua_cum.push_back(ua_cum.back() + r.ua_increments[static_cast<std::size_t>(i)]);
    ep_cum.push_back(ep_cum.back() + r.epost_increments[static_cast<std::size_t>(i)]);
  }
  r.ua_cumulative.resize(static_cast<Eigen::Index>(n_runs.size()));
  r.epost_cumulative.resize(static_cast<Eigen::Index>(n_runs.size()));
  for (std::size_t k = 0; k < n_runs.size(); ++k) {
    r.ua_cumulative(static_cast<Eigen::Index>(k)) = ua_cum[static_cast<std::size_t>(n_runs[k])];
    r.epost_cumulative(static_cast<Eigen::Index>(k)) = ep_cum[static_cast<std::size_t>(n_runs[k])];
  }
  std::vector<int> sorted = n_runs;
  std::sort(sorted.begin(), sorted.end());
  for (int n : sorted)
    if (ua_cum[static_cast<std::size_t>(n)] <= ep_cum[static_cast<std::size_t>(n)]) {
      r.crossing = n;
      break;
    }

  // Least-squares line through (n, cumulative E-Post time) for n = 0..max.
  if (max_runs >= 2) {
    const Eigen::Index m = max_runs + 1;
    const Eigen::VectorXd n = Eigen::VectorXd::LinSpaced(m, 0.0, static_cast<double>(max_runs));
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(ep_cum.data(), m);
    const double nbar = n.mean(), cbar = c.mean();
    const double sxx = (n.array() - nbar).square().sum();
    r.epost_slope = ((n.array() - nbar) * (c.array() - cbar)).sum() / sxx;
    r.epost_intercept = cbar - r.epost_slope * nbar;
    const double ss_res = (c.array() - (r.epost_intercept + r.epost_slope * n.array())).square().sum();
    const double ss_tot = (c.array() - cbar).square().sum();
    r.epost_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : std::nan("");
  } else {
    r.epost_r2 = std::nan("");
    r.warnings.push_back("fewer than 2 inference runs: no affine fit");
  }

  auto flag = [&](const std::vector<double>& inc, const char* what) {
    const auto fast = std::count_if(inc.begin(), inc.end(), [](double s) { return s < 1e-3; });
    if (fast > 0)
      r.warnings.push_back(std::string(what) + ": " + std::to_string(fast) +
                           " run(s) under 1 ms, near the timer resolution");
  };
  flag(r.ua_increments, "ua-sabi inference");
  flag(r.epost_increments, "epost inference");
  if (r.training_seconds < 1e-3) r.warnings.push_back("ua-sabi training under 1 ms, near the timer resolution");
  return r;
}

void write_breakeven_csv(const std::filesystem::path& path, const BreakEvenReport& r) {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(r.n_runs.size()), 3);
  for (std::size_t k = 0; k < r.n_runs.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    v(i, 0) = r.n_runs[k];
    v(i, 1) = r.ua_cumulative(i);
    v(i, 2) = r.epost_cumulative(i);
  }
  write_csv(path, {"runs", "ua_sabi_seconds", "epost_seconds"}, v);
}

BreakEvenReport read_breakeven_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header != std::vector<std::string>{"runs", "ua_sabi_seconds", "epost_seconds"})
    throw SchemaError(path.string() + ": expected columns runs,ua_sabi_seconds,epost_seconds");
  BreakEvenReport r;
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) r.n_runs.push_back(static_cast<int>(t.values(i, 0)));
  r.ua_cumulative = t.values.col(1);
  r.epost_cumulative = t.values.col(2);
  for (std::size_t k = 0; k < r.n_runs.size(); ++k)
    if (r.n_runs[k] == 0) r.training_seconds = r.ua_cumulative(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < r.n_runs.size(); ++k)
    if (r.ua_cumulative(static_cast<Eigen::Index>(k)) <= r.epost_cumulative(static_cast<Eigen::Index>(k)) &&
        (!r.crossing || r.n_runs[k] < *r.crossing))
      r.crossing = r.n_runs[k];
  return r;
}

}  // namespace uasabi
