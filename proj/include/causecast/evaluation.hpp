#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causecast/catalog.hpp"
#include "causecast/model.hpp"
#include "causecast/scores.hpp"
#include "causecast/series.hpp"

namespace causecast {

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

// mean +/- 1.96 * sd / sqrt(n) with the sample sd; n < 2 is an undefined-metric error.
Interval confidence_interval(const std::vector<double>& samples);

// Per-window (1/|range|) * sum over hours first..last (1-based, inclusive) of ||(y - yhat) * m||^2.
std::vector<double> windowed_squared_errors(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred,
                                            std::size_t first_hour, std::size_t last_hour);
double masked_mse(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred, std::size_t first_hour,
                  std::size_t last_hour);

// Squared l2 distance between SOFA subscore vectors.
double sofa_distance(const SofaSubscores& gold, const SofaSubscores& forecast);
double mse_sofa(const std::vector<SofaSubscores>& gold, const std::vector<SofaSubscores>& forecast);
double mse_saps(const std::vector<int>& gold, const std::vector<int>& forecast);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  // Percentages; nullopt when undefined.
  std::optional<double> accuracy() const;
  std::optional<double> f1() const;
};

// Labels of the infected cohort only.
Confusion confusion(const std::vector<SepsisLabel>& labels);
// Percentage of matching labels; an empty cohort is an undefined-metric error.
double acc_sepsis(const std::vector<SepsisLabel>& labels);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sided Welch unequal-variance t-test.
TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);
// Two-sided Mann-Whitney U (statistic = U of `a`). Exact null distribution over
// midranks when both groups have at most 20 samples, otherwise the normal
// approximation with tie and continuity correction.
TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);
// (mean(b) - mean(a)) / pooled sd; 0 when both the difference and the spread vanish.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

// Quartiles (linear interpolation between order statistics) of the positive doses.
std::pair<double, double> positive_quartiles(std::vector<double> values);

struct AblationRow {
  std::string variable;
  double mean_q1 = 0.0;
  double mean_q3 = 0.0;
  double diff = 0.0;
  double t_p = 1.0;
  double mw_p = 1.0;
  bool significant = false;
  double cohens_d = 0.0;
};

struct AblationResult {
  std::string drug;
  double q1 = 0.0;  // raw units
  double q3 = 0.0;
  double alpha = 0.05;
  double threshold = 0.0;  // alpha / tested variables
  std::size_t inputs = 0;
  std::vector<AblationRow> rows;

  std::size_t significant_count() const;
};

// Decodes every window twice with the drug's fed-back channel clamped to q1 and
// q3 (raw units), averages each other variable over the 24 forecast steps (raw
// units) and compares the two groups per variable.
AblationResult drug_ablation(const ForecastModel& model, const std::vector<WindowPair>& windows,
                             const VariableCatalog& catalog, const StandardizationStats& stats,
                             const std::string& drug, double q1, double q3, double alpha = 0.05,
                             std::size_t batch_size = 64);

inline constexpr std::string_view kAblationHeader = "variable,mean_q1,mean_q3,diff,t_p,mw_p,significant,cohens_d";

// Admission-window clinical scores for one patient: gold from hours 24-47,
// forecast (raw units) masked to the gold observations.
struct PatientOutcome {
  std::string patient_id;
  SofaSubscores sofa_gold;
  SofaSubscores sofa_forecast;
  int saps_gold = 0;
  int saps_forecast = 0;
  SepsisLabel label;
};

PatientOutcome patient_outcome(const std::string& patient_id, const DenseGrid& first, const DenseGrid& gold_second,
                               const DenseGrid& forecast, const VariableCatalog& catalog);

struct MetricRow {
  std::string name;
  std::optional<double> value;
  std::optional<Interval> ci;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<MetricRow> rows;
  std::vector<PatientOutcome> patients;
  Confusion sepsis;

  const MetricRow& row(std::string_view name) const;
  // Keeps only the named rows, in report order; unknown names are a config error.
  void select(const std::vector<std::string>& names);
  std::string to_csv() const;
  std::string patients_csv() const;
};

inline constexpr std::string_view kReportMetrics[] = {"mse",       "mse_1_8", "mse_9_24", "mse_sofa",
                                                      "mse_saps",  "acc_sepsis", "tp", "fp",
                                                      "fn",        "tn",      "f1"};

// gold/pred: standardized targets and forecasts of every scored window.
EvalReport build_report(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred,
                        std::vector<PatientOutcome> patients);

}  // namespace causecast
