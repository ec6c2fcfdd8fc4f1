#include "study_detail.hpp"

#include "uasabi/error.hpp"
#include "uasabi/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace uasabi {
namespace fs = std::filesystem;

namespace {

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> y_names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("y_" + std::to_string(i + 1));
  return out;
}

/// Draws of every method for every truth, rows = draws.
std::vector<Eigen::MatrixXd> npe_draws(const NpeModel& model, const std::vector<TrainingItem>& truths,
                                       Eigen::Index n, const RngStream& stream, int workers) {
  std::vector<Eigen::MatrixXd> out(truths.size());
  parallel_for(truths.size(), workers, [&](std::size_t i) {
    RngStream rng = stream.child(i);
    out[i] = npe_posterior(model, truths[i].set, n, rng);
  });
  return out;
}

std::vector<Eigen::MatrixXd> point_draws(const detail::StudyInputs& in, const std::vector<TrainingItem>& truths,
                                         std::uint64_t stream_seed) {
  std::vector<PceModel> models;
  std::vector<double> sigmas;
  for (const auto& s : in.surrogates) {
    models.push_back(point_surrogate(s));
    sigmas.push_back(median_sigma(s));
  }
  std::vector<Eigen::MatrixXd> out(truths.size());
  const auto& cfg = *in.config;
  parallel_for(truths.size(), in.workers, [&](std::size_t i) {
    McmcConfig mc = cfg.mcmc.point;
    mc.seed = hash_combine(stream_seed, i);
    mc.workers = 1;
    out[i] = point_mcmc_posterior(models, sigmas, cfg.prior.spec, truths[i].set, mc).draws;
  });
  return out;
}

std::vector<Eigen::MatrixXd> epost_draws(const detail::StudyInputs& in, const std::vector<TrainingItem>& truths,
                                         std::uint64_t stream_seed) {
  std::vector<Eigen::MatrixXd> out(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    EPostConfig ec = in.config->mcmc.epost;
    ec.seed = hash_combine(stream_seed, i);
    ec.workers = in.workers;
    out[i] = epost_posterior(in.surrogates, in.config->prior.spec, truths[i].set, ec).draws;
  }
  return out;
}

}  // namespace

const MethodOutcome& StudyResult::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw InvalidParameter("study result: no method '" + name + "'");
}

bool is_npe_method(const std::string& m) {
  return m == "full-abi" || m == "low-abi" || m == "sabi" || m == "ua-sabi";
}

GeneratorMode method_generator(const std::string& method, const Config& config,
                               const std::vector<SurrogatePosterior>& surrogates,
                               const std::optional<SimulatorFn>& simulator, int y_dim) {
  GeneratorMode mode;
  mode.observations_per_set = config.npe.observations_per_set;
  if (method == "full-abi" || method == "low-abi") {
    if (!simulator) throw ConfigError("method '" + method + "' needs a simulator");
    mode.source = SimulatorSource{*simulator, y_dim};
    if (method == "low-abi") {
      mode.online = false;
      mode.budget = config.npe.low_budget;
    }
  } else if (method == "sabi") {
    PointSurrogateSource src;
    for (const auto& s : surrogates) src.models.push_back(point_surrogate(s));
    mode.source = src;
  } else if (method == "ua-sabi") {
    mode.source = UncertaintyAwareSource{surrogates};
  } else {
    throw ConfigError("method '" + method + "' is not an amortized estimator");
  }
  return mode;
}

TrainResult train_method(const std::string& method, const Config& config,
                         const std::vector<SurrogatePosterior>& surrogates,
                         const std::optional<SimulatorFn>& simulator, std::uint64_t seed) {
  const int y_dim = static_cast<int>(surrogates.size());
  const GeneratorMode mode = method_generator(method, config, surrogates, simulator, y_dim);
  const RngStream stream = detail::study_stream(seed, detail::method_stream_id(method));
  RngStream init_rng = stream.child(0);
  const NpeSpec spec =
      NpeSpec::make(config.prior.spec.x_dim(), y_dim, config.prior.spec.param_dim(), config.npe.architecture);
  TrainResult tr = train_npe(mode, config.prior.spec, init_npe(spec, init_rng), config.npe.schedule, stream.child(1));
  tr.model.provenance.seed = seed;
  return tr;
}

namespace detail {

std::uint64_t method_stream_id(const std::string& method) {
  const auto& k = known_methods();
  const auto it = std::find(k.begin(), k.end(), method);
  if (it == k.end()) throw ConfigError("unknown method '" + method + "'");
  return 100 + static_cast<std::uint64_t>(it - k.begin());
}

void write_surrogates(const std::vector<SurrogatePosterior>& surrogates, PhaseLedger& ledger) {
  if (!ledger.dir()) return;
  for (std::size_t o = 0; o < surrogates.size(); ++o) {
    const std::string stem = surrogates.size() == 1 ? "surrogate" : "surrogate_y_" + std::to_string(o + 1);
    const fs::path manifest = save_surrogate(surrogates[o], *ledger.dir(), stem);
    ledger.artifact(stem, manifest);
    ledger.artifact(stem + "_draws", *ledger.dir() / (stem + "_draws.csv"));
  }
}

void write_truths(const std::vector<TrainingItem>& truths, const NamedPrior& prior, PhaseLedger& ledger) {
  if (!ledger.dir() || truths.empty()) return;
  const auto& first = truths.front();
  std::vector<std::string> header{"replication", "element"};
  header.insert(header.end(), prior.x_names.begin(), prior.x_names.end());
  const auto ys = y_names(static_cast<int>(first.set.y.cols()));
  header.insert(header.end(), ys.begin(), ys.end());
  header.insert(header.end(), prior.omega_names.begin(), prior.omega_names.end());
  Eigen::Index rows = 0;
  for (const auto& t : truths) rows += t.set.size();
  Eigen::MatrixXd v(rows, static_cast<Eigen::Index>(header.size()));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto& t = truths[i];
    for (Eigen::Index e = 0; e < t.set.size(); ++e, ++r) {
      v(r, 0) = static_cast<double>(i);
      v(r, 1) = static_cast<double>(e);
      v.row(r).segment(2, t.set.x.cols()) = t.set.x.row(e);
      v.row(r).segment(2 + t.set.x.cols(), t.set.y.cols()) = t.set.y.row(e);
      v.row(r).tail(t.omega.size()) = t.omega.transpose();
    }
  }
  const fs::path file = *ledger.dir() / "truths.csv";
  write_csv(file, header, v);
  ledger.artifact("truths", file);
}

void run_methods(const detail::StudyInputs& in, StudyResult& result, PhaseLedger& ledger) {
  const Config& cfg = *in.config;
  const auto& truths = result.truths;
  const auto& names = cfg.prior.omega_names;
  const int q = cfg.prior.spec.param_dim();

  for (const auto& method : cfg.study.methods) {
    if (!in.simulator && (method == "full-abi" || method == "low-abi")) {
      result.manifest.warnings.push_back("method '" + method + "' skipped: no simulator available");
      continue;
    }
    const auto t_method = std::chrono::steady_clock::now();
    MethodOutcome out;
    out.method = method;
    const RngStream stream = study_stream(in.seed, method_stream_id(method));

    if (is_npe_method(method)) {
      const GeneratorMode mode = method_generator(method, cfg, in.surrogates, in.simulator, in.y_dim);
      result.manifest.generator_modes.push_back(method + ": " + mode.name());
      ledger.run("train:" + method, [&] {
        out.training = train_method(method, cfg, in.surrogates, in.simulator, in.seed);
        if (ledger.dir()) {
          const fs::path model = *ledger.dir() / ("npe_" + method + ".json");
          save_npe(out.training->model, model);
          ledger.artifact("npe_" + method, model);
          Eigen::MatrixXd loss(cfg.npe.schedule.epochs, 2);
          for (int e = 0; e < cfg.npe.schedule.epochs; ++e) {
            loss(e, 0) = e;
            loss(e, 1) = out.training->epoch_loss(e);
          }
          const fs::path trace = *ledger.dir() / ("loss_" + method + ".csv");
          write_csv(trace, {"epoch", "loss"}, loss);
          ledger.artifact("loss_" + method, trace);
        }
      });
    }
    if (truths.empty()) {
      out.seconds = elapsed(t_method);
      result.methods.push_back(std::move(out));
      continue;
    }

    std::vector<Eigen::MatrixXd> draws;
    ledger.run("infer:" + method, [&] {
      if (out.training) draws = npe_draws(out.training->model, truths, cfg.study.posterior_draws, stream.child(2), in.workers);
      else if (method == "point") draws = point_draws(in, truths, stream.child(2).next());
      else draws = epost_draws(in, truths, stream.child(2).next());
    });

    ledger.run("calibrate:" + method, [&] {
      const auto n = static_cast<int>(truths.size());
      const auto L = static_cast<int>(draws.front().rows());
      for (const auto& d : draws)
        if (d.rows() != L) throw InvalidParameter(method + ": posterior draw counts differ between replications");
      out.ranks.method = method;
      out.ranks.L = L;
      out.ranks.level = cfg.study.band_level;
      out.ranks.truths.resize(n, q);
      out.ranks.ranks.assign(static_cast<std::size_t>(q), std::vector<int>(static_cast<std::size_t>(n)));
      const RngStream tie = stream.child(3);
      for (int i = 0; i < n; ++i) {
        RngStream rng = tie.child(static_cast<std::uint64_t>(i));
        out.ranks.truths.row(i) = truths[static_cast<std::size_t>(i)].omega.transpose();
        for (int p = 0; p < q; ++p)
          out.ranks.ranks[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)] =
              sbc_rank(truths[static_cast<std::size_t>(i)].omega(p), draws[static_cast<std::size_t>(i)].col(p), rng);
      }
      RngStream band_rng = study_stream(in.seed, kBandStream);
      const EcdfBand band = simultaneous_band(n, L, cfg.study.band_level, band_rng, cfg.study.band_simulations);
      for (int p = 0; p < q; ++p) {
        out.ecdf.push_back(ecdf_difference(out.ranks.ranks[static_cast<std::size_t>(p)], band));
        std::vector<Eigen::VectorXd> cols;
        for (const auto& d : draws) cols.push_back(d.col(p));
        out.recovery.push_back(recovery_stats(out.ranks.truths.col(p), cols));
      }
      if (ledger.dir()) {
        const fs::path dir = *ledger.dir();
        write_rank_csv(dir / ("ranks_" + method + ".csv"), out.ranks, names);
        write_verdict_json(dir / ("verdict_" + method + ".json"), method, names, out.ecdf);
        write_recovery_csv(dir / ("recovery_" + method + ".csv"), out.recovery, names);
        ledger.artifact("ranks_" + method, dir / ("ranks_" + method + ".csv"));
        ledger.artifact("verdict_" + method, dir / ("verdict_" + method + ".json"));
        ledger.artifact("recovery_" + method, dir / ("recovery_" + method + ".csv"));
      }
    });
    out.seconds = elapsed(t_method);
    result.methods.push_back(std::move(out));
  }
}

}  // namespace detail

double PosteriorAgreement::fraction_within(double max_mean_diff, double lo, double hi) const {
  if (mean_difference.rows() == 0) return 0.0;
  int ok = 0;
  for (Eigen::Index i = 0; i < mean_difference.rows(); ++i) {
    const bool good = (mean_difference.row(i).array() < max_mean_diff).all() &&
                      (sd_ratio.row(i).array() >= lo).all() && (sd_ratio.row(i).array() <= hi).all();
    ok += good ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(mean_difference.rows());
}

PosteriorAgreement compare_with_epost(const Config& config, std::uint64_t seed,
                                      const std::vector<SurrogatePosterior>& surrogates,
                                      const NpeModel& ua_model, const SimulatorFn& simulator, int workers) {
  const int n = config.study.validation_sets;
  const int q = config.prior.spec.param_dim();
  GeneratorMode truth_mode;
  truth_mode.source = SimulatorSource{simulator, static_cast<int>(surrogates.size())};
  truth_mode.observations_per_set = config.npe.observations_per_set;
  const RngStream stream = detail::study_stream(seed, detail::kValidationStream);

  PosteriorAgreement a;
  a.mean_difference.resize(n, q);
  a.sd_ratio.resize(n, q);
  for (int i = 0; i < n; ++i) {
    RngStream set_rng = stream.child(0).child(static_cast<std::uint64_t>(i));
    const TrainingItem item = generate_training_item(truth_mode, config.prior.spec, set_rng);
    RngStream post_rng = stream.child(1).child(static_cast<std::uint64_t>(i));
    const Eigen::MatrixXd ua = npe_posterior(ua_model, item.set, config.study.posterior_draws, post_rng);
    EPostConfig ec = config.mcmc.epost;
    ec.seed = hash_combine(stream.child(2).next(), static_cast<std::uint64_t>(i));
    ec.workers = workers;
    const Eigen::MatrixXd ep = epost_posterior(surrogates, config.prior.spec, item.set, ec).draws;
    for (int p = 0; p < q; ++p) {
      const double mu = ua.col(p).mean(), me = ep.col(p).mean();
      const double su = std::sqrt((ua.col(p).array() - mu).square().mean());
      const double se = std::sqrt((ep.col(p).array() - me).square().mean());
      a.mean_difference(i, p) = std::abs(mu - me) / se;
      a.sd_ratio(i, p) = su / se;
    }
  }
  return a;
}

}  // namespace uasabi
