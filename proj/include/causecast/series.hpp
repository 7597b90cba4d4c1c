#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causecast/catalog.hpp"

namespace causecast {

inline constexpr std::size_t kObservationHours = 24;
inline constexpr std::size_t kHorizon = 24;
inline constexpr std::size_t kWindowStride = 4;
inline constexpr double kWindowSpanCap = 120.0;

struct Observation {
  double t = 0.0;  // hours since admission (or since window start)
  std::size_t variable = 0;
  double value = 0.0;
};

// Irregular record of one stay as (time, variable, value) triplets.
struct SparseSeries {
  std::string patient_id;
  std::vector<Observation> observations;  // sorted by t, ties in ingestion order
  std::vector<double> statics;            // aligned with catalog statics; NaN = unknown

  double span() const;
  void sort_observations();
};

// Hourly binned values with a parallel observation mask.
struct DenseGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::vector<double> statics;
  std::size_t discarded = 0;  // observations dropped because an earlier one held the bucket

  DenseGrid() = default;
  DenseGrid(std::size_t rows, std::size_t cols, double fill = 0.0);

  double value(std::size_t h, std::size_t f) const { return values[h * cols + f]; }
  double& value(std::size_t h, std::size_t f) { return values[h * cols + f]; }
  bool observed(std::size_t h, std::size_t f) const { return mask[h * cols + f] != 0; }
  std::size_t observed_count() const;
};

// Rows cover hours [0, floor(span)] so an observation at an exact integer span keeps its bucket.
DenseGrid bin_to_grid(const SparseSeries& series, std::size_t variables, double imputation = 0.0);
// Buckets [start + h, start + h + 1) for h in [0, hours).
DenseGrid bin_range(const SparseSeries& series, std::size_t variables, double start, std::size_t hours,
                    double imputation = 0.0);

class StandardizationStats {
 public:
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<bool> degenerate;  // sd forced to 1
  std::vector<double> static_mean;
  std::vector<double> static_sd;

  static StandardizationStats compute(const std::vector<SparseSeries>& training, const VariableCatalog& catalog);

  double standardize(std::size_t f, double v) const { return (v - mean[f]) / sd[f]; }
  double destandardize(std::size_t f, double z) const { return z * sd[f] + mean[f]; }

  nlohmann::json to_json() const;
  static StandardizationStats from_json(const nlohmann::json& j);
};

SparseSeries standardize(const SparseSeries& series, const StandardizationStats& stats);
SparseSeries destandardize(const SparseSeries& series, const StandardizationStats& stats);
DenseGrid destandardize(const DenseGrid& grid, const StandardizationStats& stats);

struct WindowPair {
  std::string patient_id;
  std::size_t start_hour = 0;
  SparseSeries observation;  // triplets in [start, start+24), times rebased to the window start
  DenseGrid observation_grid;
  DenseGrid target;  // hours [start+24, start+48)
};

std::size_t window_count(double span);
std::vector<std::size_t> window_starts(double span);
std::vector<WindowPair> sliding_windows(const SparseSeries& series, std::size_t variables);
WindowPair make_window(const SparseSeries& series, std::size_t variables, std::size_t start_hour);

}  // namespace causecast
