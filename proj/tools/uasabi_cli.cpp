#include "uasabi/error.hpp"
#include "uasabi/parallel.hpp"
#include "uasabi/workbench.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace uasabi;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config (LogSin defaults when omitted)");
  cmd->add_option("--seed", c.seed, "study seed");
  cmd->add_option("--out", c.out, "output directory");
}

Config config_of(const Common& c) { return c.config.empty() ? logsin_config() : load_config(c.config); }

/// Manifest for single-phase commands.
class CommandLedger {
 public:
  CommandLedger(const std::string& name, const Common& c, const Config& cfg)
      : dir_(c.out), t0_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
    m_.study = name;
    m_.seed = c.seed;
    m_.workers = resolve_workers(cfg.study.workers);
    m_.config_json = config_to_json(cfg);
  }
  ExperimentManifest& manifest() { return m_; }
  const fs::path& dir() const { return dir_; }
  void artifact(const std::string& name, const fs::path& file) { m_.add_artifact(name, dir_, file); }
  void finish() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    m_.phases.push_back({m_.study, s});
    m_.completed_phases.push_back(m_.study);
    m_.total_seconds = s;
    write_manifest(dir_ / "manifest.json", m_);
  }

 private:
  fs::path dir_;
  std::chrono::steady_clock::time_point t0_;
  ExperimentManifest m_;
};

std::vector<SurrogatePosterior> fit_surrogates(const Config& cfg, std::uint64_t seed, int workers,
                                               CommandLedger& ledger) {
  std::vector<SurrogatePosterior> out;
  if (cfg.study.dataset.empty()) {
    const auto data = sobol_design_runs(logsin_simulator(), 1, cfg.surrogate.design_box, cfg.surrogate.n_train);
    save_dataset(ledger.dir() / "design.csv", training_set_to_table(data, cfg.prior));
    ledger.artifact("design", ledger.dir() / "design.csv");
    out.push_back(fit_study_surrogate(cfg, data, seed, 0, workers));
  } else {
    const auto table = load_dataset(cfg.study.dataset, cfg.prior.x_names, cfg.prior.omega_names);
    Eigen::MatrixXd inputs(table.rows(), table.x.cols() + table.omega.cols());
    inputs << table.x, table.omega;
    for (Eigen::Index o = 0; o < table.y.cols(); ++o) {
      SurrogateTrainingSet ts{inputs, table.y.col(o), static_cast<int>(table.x.cols())};
      out.push_back(fit_study_surrogate(cfg, ts, seed, static_cast<int>(o), workers));
    }
  }
  return out;
}

std::vector<SurrogatePosterior> load_surrogates(const std::vector<std::string>& paths) {
  std::vector<SurrogatePosterior> out;
  for (const auto& p : paths) out.push_back(load_surrogate(p));
  return out;
}

void save_surrogates(const std::vector<SurrogatePosterior>& s, CommandLedger& ledger) {
  for (std::size_t o = 0; o < s.size(); ++o) {
    const std::string stem = s.size() == 1 ? "surrogate" : "surrogate_y_" + std::to_string(o + 1);
    ledger.artifact(stem, save_surrogate(s[o], ledger.dir(), stem));
    ledger.artifact(stem + "_draws", ledger.dir() / (stem + "_draws.csv"));
  }
}

void print_study(const StudyResult& r, const std::vector<std::string>& names, const fs::path& out) {
  for (const auto& m : r.methods) {
    for (std::size_t p = 0; p < m.ecdf.size(); ++p)
      std::printf("%-9s %-10s %s (max excess %.3f)\n", m.method.c_str(), names[p].c_str(),
                  m.ecdf[p].inside ? "inside band" : "outside band", m.ecdf[p].max_excess);
  }
  for (const auto& w : r.manifest.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("artifacts in %s\n", out.string().c_str());
}

int run(int argc, char** argv) {
  CLI::App app{"Surrogate-based amortized Bayesian inference workbench"};
  app.require_subcommand(1);

  Common fit_c, train_c, infer_c, sbc_c, bench_c, plot_c, ingest_c;
  auto* fit = app.add_subcommand("fit-surrogate", "fit the Bayesian PCE surrogate(s)");
  add_common(fit, fit_c);

  auto* train = app.add_subcommand("train", "train one amortized estimator");
  add_common(train, train_c);
  std::string train_method = "ua-sabi";
  std::vector<std::string> train_surrogates;
  train->add_option("--method", train_method, "full-abi, low-abi, sabi or ua-sabi");
  train->add_option("--surrogate", train_surrogates, "surrogate manifest(s); fitted in-run when omitted");

  auto* infer = app.add_subcommand("infer", "posterior draws for one observation set");
  add_common(infer, infer_c);
  std::string infer_model, infer_obs, infer_method = "npe";
  std::vector<std::string> infer_surrogates;
  infer->add_option("--observations", infer_obs, "observation CSV (x_*, y_*)")->required();
  infer->add_option("--model", infer_model, "NPE manifest (for --method npe)");
  infer->add_option("--method", infer_method, "npe, epost or point");
  infer->add_option("--surrogate", infer_surrogates, "surrogate manifest(s) for epost / point");

  auto* sbc = app.add_subcommand("sbc", "run the calibration study (LogSin, or the configured table)");
  add_common(sbc, sbc_c);

  auto* bench = app.add_subcommand("benchmark", "break-even wall-time comparison of UA-SABI and E-Post");
  add_common(bench, bench_c);
  std::vector<int> bench_runs;
  int bench_workers = 0;
  bench->add_option("--runs", bench_runs, "inference run counts");
  bench->add_option("--workers", bench_workers, "E-Post workers (UASABI_WORKERS when omitted)");

  auto* plot = app.add_subcommand("plot", "render SVG figures from a study directory");
  add_common(plot, plot_c);
  std::string plot_study;
  plot->add_option("--study", plot_study, "study output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "validate a simulator table, or export the LogSin design as one");
  add_common(ingest, ingest_c);
  std::string ingest_dataset;
  bool ingest_logsin = false;
  ingest->add_option("--dataset", ingest_dataset, "dataset CSV (defaults to study.dataset)");
  ingest->add_flag("--logsin", ingest_logsin, "write the LogSin Sobol design as a table");

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    const Config cfg = config_of(fit_c);
    CommandLedger ledger("fit-surrogate", fit_c, cfg);
    const auto s = fit_surrogates(cfg, fit_c.seed, ledger.manifest().workers, ledger);
    save_surrogates(s, ledger);
    for (const auto& p : s)
      for (const auto& w : p.provenance.warnings) ledger.manifest().warnings.push_back(w);
    ledger.finish();
    for (const auto& p : s)
      std::printf("surrogate: %lld draws, median sigma %.4f, max R-hat %.4f\n", static_cast<long long>(p.n_draws()),
                  median_sigma(p), p.provenance.rhat.maxCoeff());
  } else if (train->parsed()) {
    const Config cfg = config_of(train_c);
    CommandLedger ledger("train", train_c, cfg);
    const int workers = ledger.manifest().workers;
    std::vector<SurrogatePosterior> s;
    if (train_surrogates.empty()) {
      s = fit_surrogates(cfg, train_c.seed, workers, ledger);
      save_surrogates(s, ledger);
    } else {
      s = load_surrogates(train_surrogates);
    }
    std::optional<SimulatorFn> sim;
    if (cfg.study.dataset.empty()) sim = logsin_simulator();
    const GeneratorMode mode = method_generator(train_method, cfg, s, sim, static_cast<int>(s.size()));
    ledger.manifest().generator_modes.push_back(train_method + ": " + mode.name());
    const TrainResult tr = uasabi::train_method(train_method, cfg, s, sim, train_c.seed);
    const fs::path model = ledger.dir() / ("npe_" + train_method + ".json");
    save_npe(tr.model, model);
    ledger.artifact("npe_" + train_method, model);
    ledger.finish();
    std::printf("trained %s in %.1f s, final epoch loss %.4f\n", train_method.c_str(), tr.wall_seconds,
                tr.epoch_loss(cfg.npe.schedule.epochs - 1));
  } else if (infer->parsed()) {
    const Config cfg = config_of(infer_c);
    CommandLedger ledger("infer", infer_c, cfg);
    const ObservationSet obs = read_observation_csv(infer_obs);
    Eigen::MatrixXd draws;
    if (infer_method == "npe") {
      if (infer_model.empty()) throw ConfigError("infer: --model is required for --method npe");
      RngStream rng = RngStream(infer_c.seed).child(2);
      draws = npe_posterior(load_npe(infer_model), obs, cfg.study.posterior_draws, rng);
    } else if (infer_method == "epost" || infer_method == "point") {
      if (infer_surrogates.empty()) throw ConfigError("infer: --surrogate is required for --method " + infer_method);
      const auto s = load_surrogates(infer_surrogates);
      if (infer_method == "epost") {
        EPostConfig ec = cfg.mcmc.epost;
        ec.seed = infer_c.seed;
        ec.workers = ledger.manifest().workers;
        const auto r = epost_posterior(s, cfg.prior.spec, obs, ec);
        draws = r.draws;
        for (const auto& f : r.failures) ledger.manifest().warnings.push_back(f);
      } else {
        std::vector<PceModel> models;
        std::vector<double> sigmas;
        for (const auto& p : s) {
          models.push_back(point_surrogate(p));
          sigmas.push_back(median_sigma(p));
        }
        McmcConfig mc = cfg.mcmc.point;
        mc.seed = infer_c.seed;
        mc.workers = ledger.manifest().workers;
        draws = point_mcmc_posterior(models, sigmas, cfg.prior.spec, obs, mc).draws;
      }
    } else {
      throw ConfigError("infer: unknown method '" + infer_method + "'");
    }
    const fs::path file = ledger.dir() / "draws.csv";
    write_draws_csv(file, draws, cfg.prior.omega_names);
    ledger.artifact("draws", file);
    ledger.finish();
    std::printf("%lld draws written to %s\n", static_cast<long long>(draws.rows()), file.string().c_str());
  } else if (sbc->parsed()) {
    const Config cfg = config_of(sbc_c);
    const StudyResult r = cfg.study.dataset.empty() ? run_logsin_study(cfg, sbc_c.seed, fs::path(sbc_c.out))
                                                    : run_tabular_study(cfg, sbc_c.seed, fs::path(sbc_c.out));
    print_study(r, cfg.prior.omega_names, sbc_c.out);
  } else if (bench->parsed()) {
    const Config cfg = config_of(bench_c);
    CommandLedger ledger("benchmark", bench_c, cfg);
    const int workers = resolve_workers(bench_workers > 0 ? bench_workers : cfg.study.workers);
    ledger.manifest().workers = workers;
    const auto runs = bench_runs.empty() ? cfg.study.breakeven_runs : bench_runs;
    const BreakEvenReport r = run_breakeven(cfg, bench_c.seed, runs, workers);
    const fs::path file = ledger.dir() / "breakeven.csv";
    write_breakeven_csv(file, r);
    ledger.artifact("breakeven", file);
    for (const auto& w : r.warnings) ledger.manifest().warnings.push_back(w);
    ledger.finish();
    std::printf("training %.2f s, E-Post %.3f s/run (R^2 %.4f), workers %d\n", r.training_seconds, r.epost_slope,
                r.epost_r2, r.workers);
    if (r.crossing) std::printf("break-even after %d inference runs\n", *r.crossing);
    else std::printf("no break-even within the listed run counts\n");
  } else if (plot->parsed()) {
    const auto files = emit_plots(plot_study, plot_c.out);
    std::printf("%zu SVG files written to %s\n", files.size(), plot_c.out.c_str());
  } else if (ingest->parsed()) {
    const Config cfg = config_of(ingest_c);
    CommandLedger ledger("ingest", ingest_c, cfg);
    TabularDataset table;
    if (ingest_logsin) {
      const auto data = sobol_design_runs(logsin_simulator(), 1, cfg.surrogate.design_box, cfg.surrogate.n_train);
      table = training_set_to_table(data, cfg.prior);
    } else {
      const std::string path = ingest_dataset.empty() ? cfg.study.dataset : ingest_dataset;
      if (path.empty()) throw ConfigError("ingest: give --dataset or set study.dataset");
      table = load_dataset(path, cfg.prior.x_names, cfg.prior.omega_names);
    }
    const fs::path file = ledger.dir() / "dataset.csv";
    save_dataset(file, table);
    ledger.artifact("dataset", file);
    ledger.finish();
    std::printf("%lld rows, %zu x, %zu omega, %zu y columns -> %s\n", static_cast<long long>(table.rows()),
                table.x_names.size(), table.omega_names.size(), table.y_names.size(), file.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceFailure& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
