#include "study_detail.hpp"

#include "uasabi/error.hpp"
#include "uasabi/parallel.hpp"

#include <cmath>

namespace uasabi {

double logsin_eval(double x, double omega) {
  if (!(x > 0.0)) throw DomainError("logsin: x must be > 0, got " + std::to_string(x));
  return omega * std::log(x) + std::sin(0.05 * x) + 0.01 * x + 1.0;
}

SimulatorFn logsin_simulator() {
  return [](const Eigen::VectorXd& x, const Eigen::VectorXd& omega) {
    Eigen::VectorXd y(1);
    y(0) = logsin_eval(x(0), omega(0));
    return y;
  };
}

SurrogateTrainingSet sobol_design_runs(const SimulatorFn& model, int x_dim,
                                       const std::vector<std::pair<double, double>>& box, int n, int output) {
  const int d = static_cast<int>(box.size());
  if (x_dim < 0 || x_dim > d) throw DimensionMismatch("design: x_dim exceeds the box dimension");
  SurrogateTrainingSet data;
  data.inputs = scale_to_box(sobol_points(d, static_cast<std::size_t>(n), true), box);
  data.x_dim = x_dim;
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row = data.inputs.row(i).transpose();
    const Eigen::VectorXd y = model(row.head(x_dim), row.tail(d - x_dim));
    if (output >= y.size()) throw DimensionMismatch("design: simulator has no output " + std::to_string(output));
    data.y(i) = y(output);
  }
  return data;
}

BasisSpec study_basis(const Config& config, const Eigen::MatrixXd& inputs) {
  const auto& s = config.surrogate;
  const auto& prior = config.prior.spec;
  const int d = prior.x_dim() + prior.param_dim();
  if (inputs.cols() != d)
    throw DimensionMismatch("surrogate inputs have " + std::to_string(inputs.cols()) + " columns, prior declares " +
                            std::to_string(d));
  if (s.basis == "apc") {
    BasisSpec b;
    for (int j = 0; j < d; ++j) {
      const auto& dist = j < prior.x_dim() ? prior.x_prior[static_cast<std::size_t>(j)]
                                           : prior.omega_prior[static_cast<std::size_t>(j - prior.x_dim())];
      b.dims.emplace_back(apc_basis_1d(dist, s.degree, s.apc_mc_seed));
    }
    return b;
  }
  std::vector<std::pair<double, double>> box = s.design_box;
  if (box.empty()) {
    for (int j = 0; j < d; ++j) {
      const double lo = inputs.col(j).minCoeff(), hi = inputs.col(j).maxCoeff();
      if (!(lo < hi)) throw ConfigError("surrogate: input column " + std::to_string(j) + " is constant; set design_box");
      box.emplace_back(lo, hi);
    }
  }
  return legendre_basis(box);
}

std::uint64_t surrogate_seed(std::uint64_t study_seed, int output) {
  return hash_combine(RngStream(study_seed).child(1).next(), static_cast<std::uint64_t>(output));
}

SurrogatePosterior fit_study_surrogate(const Config& config, const SurrogateTrainingSet& data,
                                       std::uint64_t study_seed, int output, int workers) {
  McmcConfig mc = config.mcmc.surrogate;
  mc.seed = surrogate_seed(study_seed, output);
  mc.workers = workers;
  const BasisSpec basis = study_basis(config, data.inputs);
  const MultiIndexSet set = truncation_indices(data.input_dim(), config.surrogate.degree);
  return fit_surrogate(data, basis, set, config.surrogate.prior, mc, config.surrogate.fit);
}

StudyResult run_logsin_study(const Config& config, std::uint64_t seed,
                             const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (config.prior.spec.x_dim() != 1 || config.prior.spec.param_dim() != 1)
    throw ConfigError("logsin study: the model takes one input x and one parameter omega");
  if (config.surrogate.design_box.size() != 2)
    throw ConfigError("logsin study: surrogate.design_box must give the x and omega ranges");

  StudyResult result;
  auto& m = result.manifest;
  m.study = "logsin";
  m.seed = seed;
  m.workers = resolve_workers(config.study.workers);
  m.config_json = config_to_json(config);
  detail::PhaseLedger ledger(m, out_dir);

  detail::StudyInputs in;
  in.config = &config;
  in.seed = seed;
  in.workers = m.workers;
  in.simulator = logsin_simulator();
  in.y_dim = 1;

  ledger.run("surrogate", [&] {
    const SurrogateTrainingSet data =
        sobol_design_runs(*in.simulator, 1, config.surrogate.design_box, config.surrogate.n_train);
    result.surrogates = {fit_study_surrogate(config, data, seed, 0, m.workers)};
    for (const auto& w : result.surrogates[0].provenance.warnings) m.warnings.push_back("surrogate: " + w);
    if (out_dir) {
      const auto file = *out_dir / "design.csv";
      save_dataset(file, training_set_to_table(data, config.prior));
      ledger.artifact("design", file);
    }
    detail::write_surrogates(result.surrogates, ledger);
  });
  in.surrogates = result.surrogates;

  ledger.run("truths", [&] {
    GeneratorMode mode;
    mode.source = SimulatorSource{*in.simulator, 1};
    mode.observations_per_set = config.npe.observations_per_set;
    const RngStream stream = detail::study_stream(seed, detail::kTruthStream);
    for (int i = 0; i < config.study.n_replications; ++i) {
      RngStream rng = stream.child(static_cast<std::uint64_t>(i));
      result.truths.push_back(generate_training_item(mode, config.prior.spec, rng));
    }
    detail::write_truths(result.truths, config.prior, ledger);
  });

  detail::run_methods(in, result, ledger);
  ledger.finish();
  return result;
}

}  // namespace uasabi
