#pragma once

#include "uasabi/calibration.hpp"
#include "uasabi/neural.hpp"
#include "uasabi/surrogate.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace uasabi {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Strict parse of a whole field; `context` names the field in errors.
double parse_double(std::string_view text, const std::string& context);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
/// FNV-1a of a file's bytes as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  Eigen::Index column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::string csv_text(const std::vector<std::string>& header, const Eigen::MatrixXd& values);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

/// Simulator runs with columns x_*, omega_*, y_*.
struct TabularDataset {
  std::vector<std::string> x_names;
  std::vector<std::string> omega_names;
  std::vector<std::string> y_names;
  Eigen::MatrixXd x;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd y;

  Eigen::Index rows() const { return y.rows(); }
};

/// Loads a dataset; every expected x/omega column must be present. Empty
/// expectations accept whatever x_* / omega_* columns the file has.
TabularDataset load_dataset(const std::filesystem::path& path,
                            const std::vector<std::string>& expected_x = {},
                            const std::vector<std::string>& expected_omega = {});
void save_dataset(const std::filesystem::path& path, const TabularDataset& data);

/// Posterior draws with columns omega_1..omega_q (or the given names).
void write_draws_csv(const std::filesystem::path& path, const Eigen::MatrixXd& draws,
                     std::vector<std::string> names = {});

/// Observation set CSV with columns x_* then y_*.
ObservationSet read_observation_csv(const std::filesystem::path& path);
void write_observation_csv(const std::filesystem::path& path, const ObservationSet& set);

/// Writes `<stem>.json` and `<stem>_draws.csv` (c_0..c_{K-1},sigma) into
/// `dir`; returns the manifest path.
std::filesystem::path save_surrogate(const SurrogatePosterior& posterior,
                                     const std::filesystem::path& dir,
                                     const std::string& stem = "surrogate");
/// Loads a surrogate manifest and its draws, checking the draw file digest.
SurrogatePosterior load_surrogate(const std::filesystem::path& manifest);

std::string npe_to_json(const NpeModel& model);
NpeModel npe_from_json(const std::string& text);
void save_npe(const NpeModel& model, const std::filesystem::path& path);
NpeModel load_npe(const std::filesystem::path& path);

/// Rank CSV: replication,parameter,truth,rank,L.
void write_rank_csv(const std::filesystem::path& path, const RankExperiment& experiment,
                    const std::vector<std::string>& names);
RankExperiment read_rank_csv(const std::filesystem::path& path, const std::string& method);

/// Verdict summary: band half width, level, inside flag per parameter.
void write_verdict_json(const std::filesystem::path& path, const std::string& method,
                        const std::vector<std::string>& names,
                        const std::vector<EcdfDifference>& curves);
struct VerdictRecord {
  std::string method;
  std::string parameter;
  int n_ranks = 0;
  int L = 0;
  double level = 0.95;
  double half_width = 0.0;
  bool inside = false;
};
std::vector<VerdictRecord> read_verdict_json(const std::filesystem::path& path);

/// Recovery CSV: replication,parameter,truth,median,deviation.
void write_recovery_csv(const std::filesystem::path& path, const std::vector<RecoverySummary>& per_param,
                        const std::vector<std::string>& names);
/// Inverse of write_recovery_csv; fills `names` in order of first appearance.
std::vector<RecoverySummary> read_recovery_csv(const std::filesystem::path& path,
                                               std::vector<std::string>& names);

struct ArtifactRecord {
  std::string name;
  std::string path;  // relative to the manifest directory
  std::string digest;
};

struct PhaseTime {
  std::string phase;
  double seconds = 0.0;
};

/// Provenance of one study run.
struct ExperimentManifest {
  std::string study;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string observation_design = "iid-prior";
  std::string config_json;
  std::vector<std::string> generator_modes;
  std::vector<std::string> completed_phases;
  std::vector<PhaseTime> phases;
  double total_seconds = 0.0;
  std::vector<ArtifactRecord> artifacts;
  std::vector<std::string> warnings;

  /// Records a file written under `dir`.
  void add_artifact(const std::string& name, const std::filesystem::path& dir,
                    const std::filesystem::path& file);
};

void write_manifest(const std::filesystem::path& path, const ExperimentManifest& manifest);
ExperimentManifest read_manifest(const std::filesystem::path& path);
/// Every referenced artifact exists and matches its digest; throws IoError
/// naming the first offender.
void verify_manifest(const std::filesystem::path& path);

}  // namespace uasabi
