#include "causecast/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "causecast/error.hpp"

namespace causecast {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<std::size_t> role_column(const VariableCatalog& catalog, ClinicalRole role) {
  return catalog.find_role(role);
}

// Observed hourly values of one role, empty when the role is absent.
std::vector<std::optional<double>> hourly(const DenseGrid& w, const VariableCatalog& catalog, ClinicalRole role) {
  std::vector<std::optional<double>> out(w.rows);
  auto col = role_column(catalog, role);
  if (!col) return out;
  for (std::size_t h = 0; h < w.rows; ++h)
    if (w.observed(h, *col)) out[h] = w.value(h, *col);
  return out;
}

struct Extremes {
  bool any = false;
  double min = kInf;
  double max = -kInf;
  double sum = 0.0;

  void add(double v) {
    any = true;
    min = std::min(min, v);
    max = std::max(max, v);
    sum += v;
  }
};

Extremes extremes(const std::vector<std::optional<double>>& values) {
  Extremes e;
  for (const auto& v : values)
    if (v) e.add(*v);
  return e;
}

Extremes gcs_totals(const DenseGrid& w, const VariableCatalog& catalog) {
  auto eye = hourly(w, catalog, ClinicalRole::gcs_eye);
  auto motor = hourly(w, catalog, ClinicalRole::gcs_motor);
  auto verbal = hourly(w, catalog, ClinicalRole::gcs_verbal);
  Extremes e;
  for (std::size_t h = 0; h < w.rows; ++h)
    if (eye[h] && motor[h] && verbal[h]) e.add(*eye[h] + *motor[h] + *verbal[h]);
  return e;
}

Extremes horowitz(const DenseGrid& w, const VariableCatalog& catalog) {
  auto pao2 = hourly(w, catalog, ClinicalRole::pao2);
  auto fio2 = hourly(w, catalog, ClinicalRole::fio2);
  Extremes e;
  for (std::size_t h = 0; h < w.rows; ++h) {
    if (!pao2[h] || !fio2[h]) continue;
    const double f = normalize_fio2(*fio2[h]);
    if (!(f > 0.0)) continue;
    e.add(*pao2[h] / f);
  }
  return e;
}

bool ventilated(const DenseGrid& w, const VariableCatalog& catalog) {
  for (const auto& v : hourly(w, catalog, ClinicalRole::mech_vent))
    if (v && *v != 0.0) return true;
  return false;
}

double max_dose(const DenseGrid& w, const VariableCatalog& catalog, ClinicalRole role) {
  const Extremes e = extremes(hourly(w, catalog, role));
  return e.any ? e.max : 0.0;
}

}  // namespace

double normalize_fio2(double fio2) { return fio2 > 1.0 ? fio2 / 100.0 : fio2; }

namespace sofa {

int cns_points(double gcs) {
  if (gcs >= 15) return 0;
  if (gcs >= 13) return 1;
  if (gcs >= 10) return 2;
  if (gcs >= 6) return 3;
  return 4;
}

int map_points(double map) { return map < 70 ? 1 : 0; }

int vasopressor_points(double dopamine, double dobutamine, double epinephrine, double norepinephrine) {
  if (dopamine > 15 || epinephrine > 0.1 || norepinephrine > 0.1) return 4;
  if (dopamine > 5 || epinephrine > 0 || norepinephrine > 0) return 3;
  if (dopamine > 0 || dobutamine > 0) return 2;
  return 0;
}

int respiration_points(double ratio, bool mv) {
  if (mv && ratio < 100) return 4;
  if (mv && ratio < 200) return 3;
  if (ratio < 300) return 2;
  if (ratio < 400) return 1;
  return 0;
}

int coagulation_points(double platelets) {
  if (platelets < 20) return 4;
  if (platelets < 50) return 3;
  if (platelets < 100) return 2;
  if (platelets < 150) return 1;
  return 0;
}

int liver_points(double bilirubin) {
  if (bilirubin >= 12) return 4;
  if (bilirubin >= 6) return 3;
  if (bilirubin >= 2) return 2;
  if (bilirubin >= 1.2) return 1;
  return 0;
}

int creatinine_points(double creatinine) {
  if (creatinine >= 5) return 4;
  if (creatinine >= 3.5) return 3;
  if (creatinine >= 2) return 2;
  if (creatinine >= 1.2) return 1;
  return 0;
}

int urine_points(double urine) {
  if (urine < 200) return 4;
  if (urine < 500) return 3;
  return 0;
}

}  // namespace sofa

SofaSubscores sofa_score(const DenseGrid& w, const VariableCatalog& catalog) {
  if (w.cols != catalog.size()) fail(ErrorCategory::dimension, "scoring grid width does not match catalog");
  SofaSubscores s;
  if (const auto gcs = gcs_totals(w, catalog); gcs.any) s.cns = sofa::cns_points(gcs.min);

  auto sbp = hourly(w, catalog, ClinicalRole::sbp);
  auto dbp = hourly(w, catalog, ClinicalRole::dbp);
  Extremes map;
  for (std::size_t h = 0; h < w.rows; ++h)
    if (sbp[h] && dbp[h]) map.add((*sbp[h] + 2.0 * *dbp[h]) / 3.0);
  const int pressors =
      sofa::vasopressor_points(max_dose(w, catalog, ClinicalRole::dopamine), max_dose(w, catalog, ClinicalRole::dobutamine),
                               max_dose(w, catalog, ClinicalRole::epinephrine),
                               max_dose(w, catalog, ClinicalRole::norepinephrine));
  s.cardio = std::max(map.any ? sofa::map_points(map.min) : 0, pressors);

  if (const auto pf = horowitz(w, catalog); pf.any) s.resp = sofa::respiration_points(pf.min, ventilated(w, catalog));
  if (const auto p = extremes(hourly(w, catalog, ClinicalRole::platelets)); p.any) s.coag = sofa::coagulation_points(p.min);
  if (const auto b = extremes(hourly(w, catalog, ClinicalRole::bilirubin)); b.any) s.liver = sofa::liver_points(b.max);
  const auto cr = extremes(hourly(w, catalog, ClinicalRole::creatinine));
  const auto uo = extremes(hourly(w, catalog, ClinicalRole::urine));
  s.renal = std::max(cr.any ? sofa::creatinine_points(cr.max) : 0, uo.any ? sofa::urine_points(uo.sum) : 0);
  return s;
}

std::string_view saps_component_name(SapsComponent c) {
  switch (c) {
    case SapsComponent::heart_rate: return "heart_rate";
    case SapsComponent::sbp: return "sbp";
    case SapsComponent::temperature: return "temperature";
    case SapsComponent::gcs: return "gcs";
    case SapsComponent::pao2_fio2: return "pao2_fio2";
    case SapsComponent::bun: return "bun";
    case SapsComponent::urine: return "urine";
    case SapsComponent::sodium: return "sodium";
    case SapsComponent::potassium: return "potassium";
    case SapsComponent::bicarbonate: return "bicarbonate";
    case SapsComponent::wbc: return "wbc";
    case SapsComponent::bilirubin: return "bilirubin";
  }
  return "unknown";
}

namespace saps {

int heart_rate_points(double hr) {
  if (hr < 40) return 11;
  if (hr < 70) return 2;
  if (hr < 120) return 0;
  if (hr < 160) return 4;
  return 7;
}

int sbp_points(double sbp) {
  if (sbp < 70) return 13;
  if (sbp < 100) return 5;
  if (sbp < 200) return 0;
  return 2;
}

int temperature_points(double t) { return t >= 39 ? 3 : 0; }

int gcs_points(double gcs) {
  if (gcs >= 14) return 0;
  if (gcs >= 11) return 5;
  if (gcs >= 9) return 7;
  if (gcs >= 6) return 13;
  return 26;
}

int pao2_fio2_points(double ratio, bool mv) {
  if (!mv) return 0;
  if (ratio < 100) return 11;
  if (ratio < 200) return 9;
  return 6;
}

int bun_points(double bun) {
  if (bun < 28) return 0;
  if (bun < 84) return 6;
  return 10;
}

int urine_points(double ml) {
  if (ml < 500) return 11;
  if (ml < 1000) return 4;
  return 0;
}

int sodium_points(double na) {
  if (na < 125) return 5;
  if (na < 145) return 0;
  return 1;
}

int potassium_points(double k) { return (k < 3 || k >= 5) ? 3 : 0; }

int bicarbonate_points(double hco3) {
  if (hco3 < 15) return 6;
  if (hco3 < 20) return 3;
  return 0;
}

int wbc_points(double wbc) {
  if (wbc < 1) return 12;
  if (wbc < 20) return 0;
  return 3;
}

int bilirubin_points(double b) {
  if (b < 4) return 0;
  if (b < 6) return 4;
  return 9;
}

}  // namespace saps

int SapsPoints::total() const {
  int t = 0;
  for (int p : points) t += p;
  return t;
}

SapsPoints saps_score(const DenseGrid& w, const VariableCatalog& catalog) {
  if (w.cols != catalog.size()) fail(ErrorCategory::dimension, "scoring grid width does not match catalog");
  SapsPoints s;
  auto set = [&](SapsComponent c, bool observed, int points) {
    s.observed[static_cast<std::size_t>(c)] = observed;
    s.points[static_cast<std::size_t>(c)] = observed ? points : 0;
  };
  auto worst = [&](SapsComponent c, ClinicalRole role, int (*table)(double)) {
    const auto e = extremes(hourly(w, catalog, role));
    set(c, e.any, e.any ? std::max(table(e.min), table(e.max)) : 0);
  };
  auto largest = [&](SapsComponent c, ClinicalRole role, int (*table)(double)) {
    const auto e = extremes(hourly(w, catalog, role));
    set(c, e.any, e.any ? table(e.max) : 0);
  };
  worst(SapsComponent::heart_rate, ClinicalRole::heart_rate, saps::heart_rate_points);
  worst(SapsComponent::sbp, ClinicalRole::sbp, saps::sbp_points);
  largest(SapsComponent::temperature, ClinicalRole::temperature, saps::temperature_points);
  const auto gcs = gcs_totals(w, catalog);
  set(SapsComponent::gcs, gcs.any, gcs.any ? saps::gcs_points(gcs.min) : 0);
  const auto pf = horowitz(w, catalog);
  set(SapsComponent::pao2_fio2, pf.any, pf.any ? saps::pao2_fio2_points(pf.min, ventilated(w, catalog)) : 0);
  largest(SapsComponent::bun, ClinicalRole::bun, saps::bun_points);
  const auto uo = extremes(hourly(w, catalog, ClinicalRole::urine));
  set(SapsComponent::urine, uo.any, uo.any ? saps::urine_points(uo.sum) : 0);
  worst(SapsComponent::sodium, ClinicalRole::sodium, saps::sodium_points);
  worst(SapsComponent::potassium, ClinicalRole::potassium, saps::potassium_points);
  const auto hco3 = extremes(hourly(w, catalog, ClinicalRole::bicarbonate));
  set(SapsComponent::bicarbonate, hco3.any, hco3.any ? saps::bicarbonate_points(hco3.min) : 0);
  worst(SapsComponent::wbc, ClinicalRole::wbc, saps::wbc_points);
  largest(SapsComponent::bilirubin, ClinicalRole::bilirubin, saps::bilirubin_points);
  return s;
}

bool infection_suspected(const DenseGrid& w, const VariableCatalog& catalog) {
  if (w.cols != catalog.size()) fail(ErrorCategory::dimension, "scoring grid width does not match catalog");
  auto positive = [&](std::size_t col) {
    for (std::size_t h = 0; h < w.rows; ++h)
      if (w.observed(h, col) && w.value(h, col) > 0.0) return true;
    return false;
  };
  bool antibiotic = false;
  for (std::size_t col : catalog.all_with_role(ClinicalRole::antibiotic)) antibiotic = antibiotic || positive(col);
  auto culture = catalog.find_role(ClinicalRole::blood_culture);
  return antibiotic && culture && positive(*culture);
}

DenseGrid mask_to_gold(const DenseGrid& forecast, const DenseGrid& gold) {
  if (forecast.rows != gold.rows || forecast.cols != gold.cols) {
    fail(ErrorCategory::dimension, "forecast and gold grids differ in shape");
  }
  DenseGrid out = forecast;
  out.mask = gold.mask;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    if (!out.mask[i]) out.values[i] = 0.0;
  return out;
}

SepsisLabel sepsis_label(const DenseGrid& first, const DenseGrid& gold_second, const DenseGrid* forecast,
                         const VariableCatalog& catalog) {
  if (forecast == nullptr) fail(ErrorCategory::scoring, "sepsis label needs a forecast for hours 24-47");
  SepsisLabel label;
  label.infected = infection_suspected(first, catalog);
  label.sofa_first = sofa_score(first, catalog).total();
  label.sofa_gold = sofa_score(gold_second, catalog).total();
  label.sofa_forecast = sofa_score(mask_to_gold(*forecast, gold_second), catalog).total();
  label.chi = sofa_increase(label.sofa_first, label.sofa_gold);
  label.chi_hat = sofa_increase(label.sofa_first, label.sofa_forecast);
  return label;
}

}  // namespace causecast
