#pragma once

#include "uasabi/workbench.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

namespace uasabi::detail {

/// Times phases into the manifest. A phase that throws leaves the manifest of
/// completed phases on disk before the exception propagates.
class PhaseLedger {
 public:
  PhaseLedger(ExperimentManifest& manifest, std::optional<std::filesystem::path> dir)
      : manifest_(manifest), dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    if (dir_) std::filesystem::create_directories(*dir_);
  }

  template <typename F>
  void run(const std::string& phase, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (...) {
      manifest_.warnings.push_back("phase '" + phase + "' failed");
      finish();
      throw;
    }
    manifest_.phases.push_back({phase, seconds_since(t0)});
    manifest_.completed_phases.push_back(phase);
  }

  const std::optional<std::filesystem::path>& dir() const { return dir_; }

  /// Records `file` (relative to the study directory) as an artifact.
  void artifact(const std::string& name, const std::filesystem::path& file) {
    manifest_.add_artifact(name, *dir_, file);
  }

  void finish() {
    manifest_.total_seconds = seconds_since(start_);
    if (dir_) write_manifest(*dir_ / "manifest.json", manifest_);
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  ExperimentManifest& manifest_;
  std::optional<std::filesystem::path> dir_;
  std::chrono::steady_clock::time_point start_;
};

struct StudyInputs {
  const Config* config = nullptr;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<SurrogatePosterior> surrogates;
  std::optional<SimulatorFn> simulator;
  int y_dim = 1;
};

/// Streams of a study keyed by role so that adding or removing methods never
/// shifts another method's randomness.
inline RngStream study_stream(std::uint64_t seed, std::uint64_t role) { return RngStream(seed).child(role); }
inline constexpr std::uint64_t kTruthStream = 2;
inline constexpr std::uint64_t kBandStream = 5;
inline constexpr std::uint64_t kValidationStream = 6;
inline constexpr std::uint64_t kBenchmarkStream = 7;
std::uint64_t method_stream_id(const std::string& method);

/// Writes the surrogate artifacts of every output.
void write_surrogates(const std::vector<SurrogatePosterior>& surrogates, PhaseLedger& ledger);
void write_truths(const std::vector<TrainingItem>& truths, const NamedPrior& prior, PhaseLedger& ledger);

/// Trains (when needed), infers and calibrates every configured method.
void run_methods(const StudyInputs& in, StudyResult& result, PhaseLedger& ledger);

}  // namespace uasabi::detail
