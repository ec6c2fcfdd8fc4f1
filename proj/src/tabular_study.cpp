#include "study_detail.hpp"

#include "uasabi/error.hpp"
#include "uasabi/parallel.hpp"

namespace uasabi {

std::vector<TrainingItem> group_by_omega(const TabularDataset& data) {
  std::vector<TrainingItem> items;
  std::vector<std::vector<Eigen::Index>> rows;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const Eigen::VectorXd omega = data.omega.row(r).transpose();
    std::size_t g = 0;
    while (g < items.size() && items[g].omega != omega) ++g;
    if (g == items.size()) {
      items.push_back({{}, omega});
      rows.emplace_back();
    }
    rows[g].push_back(r);
  }
  for (std::size_t g = 0; g < items.size(); ++g) {
    auto& set = items[g].set;
    set.x = data.x(rows[g], Eigen::all);
    set.y = data.y(rows[g], Eigen::all);
  }
  return items;
}

TabularDataset training_set_to_table(const SurrogateTrainingSet& data, const NamedPrior& prior,
                                     const std::string& y_name) {
  if (static_cast<int>(prior.x_names.size()) != data.x_dim ||
      static_cast<int>(prior.omega_names.size()) != data.input_dim() - data.x_dim)
    throw DimensionMismatch("training table: prior names do not match the training inputs");
  TabularDataset t;
  t.x_names = prior.x_names;
  t.omega_names = prior.omega_names;
  t.y_names = {y_name};
  t.x = data.inputs.leftCols(data.x_dim);
  t.omega = data.inputs.rightCols(data.input_dim() - data.x_dim);
  t.y = data.y;
  return t;
}

StudyResult run_tabular_study(const Config& config, std::uint64_t seed,
                              const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (config.study.dataset.empty()) throw ConfigError("tabular study: config.study.dataset is not set");

  StudyResult result;
  auto& m = result.manifest;
  m.study = "tabular";
  m.seed = seed;
  m.workers = resolve_workers(config.study.workers);
  m.config_json = config_to_json(config);
  m.observation_design = config.study.test_dataset.empty() ? "none" : "held-out-table";
  detail::PhaseLedger ledger(m, out_dir);

  detail::StudyInputs in;
  in.config = &config;
  in.seed = seed;
  in.workers = m.workers;

  TabularDataset data;
  ledger.run("ingest", [&] {
    data = load_dataset(config.study.dataset, config.prior.x_names, config.prior.omega_names);
    if (out_dir) {
      const auto file = *out_dir / "dataset.csv";
      save_dataset(file, data);
      ledger.artifact("dataset", file);
    }
  });
  in.y_dim = static_cast<int>(data.y.cols());

  ledger.run("surrogate", [&] {
    Eigen::MatrixXd inputs(data.rows(), data.x.cols() + data.omega.cols());
    inputs << data.x, data.omega;
    for (int o = 0; o < in.y_dim; ++o) {
      SurrogateTrainingSet ts;
      ts.inputs = inputs;
      ts.y = data.y.col(o);
      ts.x_dim = static_cast<int>(data.x.cols());
      result.surrogates.push_back(fit_study_surrogate(config, ts, seed, o, m.workers));
      for (const auto& w : result.surrogates.back().provenance.warnings)
        m.warnings.push_back(data.y_names[static_cast<std::size_t>(o)] + " surrogate: " + w);
    }
    detail::write_surrogates(result.surrogates, ledger);
  });
  in.surrogates = result.surrogates;

  if (!config.study.test_dataset.empty()) {
    ledger.run("truths", [&] {
      const TabularDataset test =
          load_dataset(config.study.test_dataset, config.prior.x_names, config.prior.omega_names);
      if (test.y.cols() != data.y.cols()) throw SchemaError(config.study.test_dataset + ": output columns differ from the training table");
      result.truths = group_by_omega(test);
      if (static_cast<int>(result.truths.size()) > config.study.n_replications)
        result.truths.resize(static_cast<std::size_t>(config.study.n_replications));
      detail::write_truths(result.truths, config.prior, ledger);
    });
  } else {
    m.warnings.push_back("no test_dataset: estimators trained, calibration skipped");
  }

  detail::run_methods(in, result, ledger);
  ledger.finish();
  return result;
}

}  // namespace uasabi
