#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causecast/catalog.hpp"
#include "causecast/dataset.hpp"

namespace causecast {

enum class VariableKind { continuous, drug, state, event };

std::string_view kind_name(VariableKind kind);
VariableKind parse_kind(std::string_view name);

struct GenVariable {
  std::string name;
  ClinicalRole role = ClinicalRole::none;
  VariableKind kind = VariableKind::continuous;
  // continuous: physiological mean/sd and clamp range.
  // drug: mean dose while running (lognormal, `sd` is the log-scale spread).
  double mean = 0.0;
  double sd = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double missingness = 0.5;  // probability an hour carries no observation
  double extra_rate = 0.0;   // mean additional observations inside an observed hour
  std::string panel;         // members share observation times
  // drug/state/event on-off chain, per hour
  double on_prob = 0.0;
  double switch_on = 0.0;
  double switch_off = 0.0;
  // continuous: latent shift in sd units at full deterioration;
  // drug/state: added to switch_on once deterioration starts
  double deterioration = 0.0;
};

struct GenStatic {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool binary = false;  // Bernoulli(mean) when set
};

// target latent += effect * level(source at hour floor(t) - lag), where level is
// dose / mean dose for drugs and 0/1 for states.
struct Coupling {
  std::string source;
  std::string target;
  std::size_t lag_hours = 1;
  double effect = 0.0;  // in target sd units
};

struct GeneratorConfig {
  std::size_t patients = 200;
  double stay_min = 50.0;
  double stay_max = 72.0;
  double oscillation = 0.6;        // typical latent amplitude, sd units
  double offset_sd = 0.5;          // between-patient baseline spread, sd units
  double process_noise = 0.3;      // hourly AR(1) latent noise, sd units
  double observation_noise = 0.1;  // per-observation noise, sd units
  double infection_rate = 0.3;
  double deterioration_infected = 0.5;
  double deterioration_other = 0.1;
  std::vector<GenVariable> variables;
  std::vector<GenStatic> statics;
  std::vector<Coupling> couplings;

  // Full clinical catalog with every scoring role.
  static GeneratorConfig clinical();
  // Small anonymous catalog: `continuous` variables X0.., one drug DrugA and an
  // optional +2 sd coupling DrugA -> X0 at lag 1 h.
  static GeneratorConfig compact(std::size_t continuous, bool coupled);
  static GeneratorConfig preset(const std::string& name);

  VariableCatalog catalog() const;
  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// Per-patient latent parameters of one continuous variable.
struct LatentParams {
  double offset = 0.0;
  double amplitude = 0.0;
  double decay = 0.0;  // per hour
  double omega = 0.0;  // rad per hour
  double phase = 0.0;
};

struct PatientTruth {
  std::string patient_id;
  double stay = 0.0;
  bool infected = false;
  double deterioration_onset = std::numeric_limits<double>::infinity();
  std::vector<LatentParams> latent;             // per variable (continuous only meaningful)
  std::vector<std::vector<double>> levels;      // per variable, per hour: dose or state (drug/state)
  std::vector<std::vector<double>> noise_path;  // per variable, per hour AR(1) latent noise
};

// Noise-free latent in sd units for a continuous variable at time t,
// excluding coupling and process noise terms.
double latent_trajectory(const LatentParams& p, double deterioration, double onset, double t);
// Deterioration ramp in [0, 1]: 0 before onset, linear over 6 h, then 1.
double deterioration_ramp(double onset, double t);

struct GeneratedCohort {
  Dataset dataset;
  std::vector<PatientTruth> truth;
  nlohmann::json manifest;
};

GeneratedCohort synth_generate(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace causecast
