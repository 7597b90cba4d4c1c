#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causecast/dataset.hpp"
#include "causecast/evaluation.hpp"
#include "causecast/generator.hpp"
#include "causecast/model.hpp"
#include "causecast/training.hpp"

namespace causecast {

inline constexpr std::string_view kVersion = "0.1.0";

// key = value text, one per line, '#' starts a comment.
struct ExperimentConfig {
  std::filesystem::path data_dir;
  double split_train = 0.64;
  double split_dev = 0.16;
  std::uint64_t split_seed = 0;

  ModelConfig model;  // variables/statics are filled from the dataset
  TrainConfig train;

  std::string table1_model;
  std::filesystem::path checkpoint;
  std::string ablation_drug;
  double alpha = 0.05;
  std::filesystem::path grid_file;
  std::vector<std::string> metrics;  // empty: full report

  static ExperimentConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& file);

  void validate() const;
  // Every key that influences training, in a fixed order; parsing it back gives the same run.
  std::string canonical() const;
  // First 8 hex digits of the FNV-1a hash of canonical().
  std::string hash() const;
};

// Table 1 ids "1".."24", "linear", "dlinear"; Informer and Autoformer are rejected.
void apply_table1_model(std::string_view id, ExperimentConfig& config);

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

// Patient-level shuffle; train and dev sizes are floor(fraction * n), test takes the rest.
Splits split_patients(std::size_t patients, double train, double dev, std::uint64_t seed);

struct PreparedData {
  Dataset dataset;
  Splits splits;
  StandardizationStats stats;
  std::vector<WindowPair> train;
  std::vector<WindowPair> dev;
  std::vector<WindowPair> test;
  std::size_t observations = 0;
  std::size_t discarded = 0;
};

// Loads the dataset, splits it, fits standardization on the training patients
// (unless `stats` is given) and cuts standardized windows.
PreparedData prepare_data(const ExperimentConfig& config, const StandardizationStats* stats = nullptr);
std::vector<WindowPair> patient_windows(const SparseSeries& raw, const StandardizationStats& stats,
                                        std::size_t variables);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  FitResult fit;
};

// Run context loaded back from a checkpoint.
struct TrainedRun {
  ExperimentConfig config;
  ForecastModel model;
  VariableCatalog catalog;
  StandardizationStats stats;
};

// Writes a file that must not exist yet.
void write_new_file(const std::filesystem::path& path, const std::string& contents);

void run_synth(const GeneratorConfig& generator, std::uint64_t seed, const std::filesystem::path& out);
TrainOutcome run_train(const ExperimentConfig& config, const std::filesystem::path& out);
TrainedRun load_run(const ExperimentConfig& config, const std::filesystem::path& out);
void run_forecast(const ExperimentConfig& config, const std::filesystem::path& out);
void run_score(const ExperimentConfig& config, const std::filesystem::path& out);
EvalReport run_evaluate(const ExperimentConfig& config, const std::filesystem::path& out);
AblationResult run_ablate(const ExperimentConfig& config, const std::filesystem::path& out);

// Standardized forecasts for each window, destandardized when `raw` is set.
std::vector<DenseGrid> forecast_windows(const ForecastModel& model, const std::vector<WindowPair>& windows,
                                        const StandardizationStats* raw = nullptr, std::size_t batch_size = 64);

// Clinical outcomes of each patient's admission window (hours 0-23 observed, 24-47 forecast).
std::vector<PatientOutcome> admission_outcomes(const ForecastModel& model, const std::vector<SparseSeries>& patients,
                                               const VariableCatalog& catalog, const StandardizationStats& stats);

EvalReport evaluate_split(const ForecastModel& model, const std::vector<WindowPair>& windows,
                          const std::vector<SparseSeries>& patients, const VariableCatalog& catalog,
                          const StandardizationStats& stats);

}  // namespace causecast
