#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "causecast/catalog.hpp"
#include "causecast/series.hpp"

namespace causecast {

// Scoring operates on destandardized 24-hour grids; only cells with mask 1 are
// visible. Continuous values are placed in a table row by its lower bound, so
// e.g. creatinine 1.95 falls in the 1.2 to 2.0 row.

struct SofaSubscores {
  int cns = 0;
  int cardio = 0;
  int resp = 0;
  int coag = 0;
  int liver = 0;
  int renal = 0;

  int total() const { return cns + cardio + resp + coag + liver + renal; }
  std::array<int, 6> values() const { return {cns, cardio, resp, coag, liver, renal}; }
};

namespace sofa {
int cns_points(double gcs_total);
int map_points(double map);
// Doses in ug/kg/min; non-positive doses count as not given.
int vasopressor_points(double dopamine, double dobutamine, double epinephrine, double norepinephrine);
int respiration_points(double pao2_fio2, bool ventilated);
int coagulation_points(double platelets);
int liver_points(double bilirubin);
int creatinine_points(double creatinine);
int urine_points(double urine_per_day);
}  // namespace sofa

SofaSubscores sofa_score(const DenseGrid& window, const VariableCatalog& catalog);

enum class SapsComponent {
  heart_rate,
  sbp,
  temperature,
  gcs,
  pao2_fio2,
  bun,
  urine,
  sodium,
  potassium,
  bicarbonate,
  wbc,
  bilirubin,
};
inline constexpr std::size_t kSapsComponents = 12;
std::string_view saps_component_name(SapsComponent c);

namespace saps {
int heart_rate_points(double hr);
int sbp_points(double sbp);
int temperature_points(double celsius);
int gcs_points(double gcs_total);
int pao2_fio2_points(double ratio, bool ventilated);
int bun_points(double bun);
int urine_points(double ml_per_day);
int sodium_points(double sodium);
int potassium_points(double potassium);
int bicarbonate_points(double bicarbonate);
int wbc_points(double wbc);
int bilirubin_points(double bilirubin);
}  // namespace saps

struct SapsPoints {
  std::array<int, kSapsComponents> points{};
  std::array<bool, kSapsComponents> observed{};  // false: component scored 0 for lack of data

  int total() const;
  int operator[](SapsComponent c) const { return points[static_cast<std::size_t>(c)]; }
};

SapsPoints saps_score(const DenseGrid& window, const VariableCatalog& catalog);

// FiO2 as a fraction; values above 1 are read as percentages.
double normalize_fio2(double fio2);

// Antibiotic and blood culture both observed with a positive value in the window.
bool infection_suspected(const DenseGrid& admission_window, const VariableCatalog& catalog);

inline bool sofa_increase(int first_window, int second_window) { return second_window - first_window >= 2; }

// Forecast values restricted to the cells observed in the gold grid.
DenseGrid mask_to_gold(const DenseGrid& forecast, const DenseGrid& gold);

struct SepsisLabel {
  bool infected = false;
  int sofa_first = 0;
  int sofa_gold = 0;
  int sofa_forecast = 0;
  bool chi = false;
  bool chi_hat = false;
};

// first: gold hours 0-23; gold_second: gold hours 24-47; forecast: predicted hours 24-47.
SepsisLabel sepsis_label(const DenseGrid& first, const DenseGrid& gold_second, const DenseGrid* forecast,
                         const VariableCatalog& catalog);

}  // namespace causecast
