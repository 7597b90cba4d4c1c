#include "causecast/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "causecast/error.hpp"
#include "causecast/random.hpp"

namespace causecast {
namespace {

constexpr double kNoiseCorrelation = 0.8;
constexpr double kRampHours = 6.0;
constexpr double kMaxExtraRate = 59.0;  // minute resolution: at most 60 distinct times per hour

GenVariable continuous(std::string name, ClinicalRole role, double mean, double sd, double lo, double hi,
                       double missingness, std::string panel, double deterioration) {
  GenVariable v;
  v.name = std::move(name);
  v.role = role;
  v.kind = VariableKind::continuous;
  v.mean = mean;
  v.sd = sd;
  v.lo = lo;
  v.hi = hi;
  v.missingness = missingness;
  v.panel = std::move(panel);
  v.deterioration = deterioration;
  return v;
}

GenVariable drug(std::string name, ClinicalRole role, double dose, double missingness, double on_prob,
                 double switch_on, double switch_off, double deterioration) {
  GenVariable v;
  v.name = std::move(name);
  v.role = role;
  v.kind = VariableKind::drug;
  v.mean = dose;
  v.sd = 0.4;
  v.lo = 0.0;
  v.missingness = missingness;
  v.on_prob = on_prob;
  v.switch_on = switch_on;
  v.switch_off = switch_off;
  v.deterioration = deterioration;
  return v;
}

double json_bound(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<double>();
}

nlohmann::json bound_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCategory::config, what + " must lie in [0, 1]");
}

std::vector<double> markov_levels(const GenVariable& v, std::size_t hours, double onset, Rng& rng) {
  std::vector<double> levels(hours, 0.0);
  bool on = rng.bernoulli(v.on_prob);
  double dose = 0.0;
  auto draw_dose = [&] {
    if (v.kind == VariableKind::state) return 1.0;
    return v.mean * std::exp(v.sd * rng.normal() - 0.5 * v.sd * v.sd);
  };
  if (on) dose = draw_dose();
  for (std::size_t h = 0; h < hours; ++h) {
    if (h > 0) {
      const double boost = static_cast<double>(h) >= onset ? v.deterioration : 0.0;
      if (on) {
        on = !rng.bernoulli(v.switch_off);
      } else if (rng.bernoulli(std::min(1.0, v.switch_on + boost))) {
        on = true;
        dose = draw_dose();
      }
    }
    levels[h] = on ? dose : 0.0;
  }
  return levels;
}

double minute_time(std::size_t hour, Rng& rng) {
  return static_cast<double>(hour) + static_cast<double>(rng.below(60)) / 60.0;
}

}  // namespace

std::string_view kind_name(VariableKind kind) {
  switch (kind) {
    case VariableKind::continuous: return "continuous";
    case VariableKind::drug: return "drug";
    case VariableKind::state: return "state";
    case VariableKind::event: return "event";
  }
  return "continuous";
}

VariableKind parse_kind(std::string_view name) {
  for (auto k : {VariableKind::continuous, VariableKind::drug, VariableKind::state, VariableKind::event})
    if (kind_name(k) == name) return k;
  fail(ErrorCategory::config, "unknown variable kind: " + std::string(name));
}

GeneratorConfig GeneratorConfig::clinical() {
  using R = ClinicalRole;
  GeneratorConfig c;
  c.variables = {
      continuous("Heart Rate", R::heart_rate, 85, 15, 30, 200, 0.10, "vitals", 1.0),
      continuous("Systolic Blood Pressure", R::sbp, 120, 18, 50, 220, 0.10, "vitals", -1.5),
      continuous("Diastolic Blood Pressure", R::dbp, 62, 10, 25, 130, 0.10, "vitals", -1.2),
      continuous("Temperature", R::temperature, 37.0, 0.6, 34, 41.5, 0.70, "", 1.0),
      continuous("GCS - Eye Opening", R::gcs_eye, 3.5, 0.6, 1, 4, 0.80, "gcs", -1.5),
      continuous("GCS - Motor Response", R::gcs_motor, 5.5, 0.8, 1, 6, 0.80, "gcs", -1.5),
      continuous("GCS - Verbal Response", R::gcs_verbal, 4.0, 1.0, 1, 5, 0.80, "gcs", -1.5),
      continuous("PO2", R::pao2, 110, 35, 40, 400, 0.90, "bloodgas", -1.5),
      continuous("Inspired O2 Fraction", R::fio2, 0.45, 0.15, 0.21, 1.0, 0.90, "bloodgas", 1.0),
      continuous("Platelet Count", R::platelets, 200, 70, 5, 600, 0.93, "labs", -1.5),
      continuous("Bilirubin (Total)", R::bilirubin, 1.2, 1.5, 0.1, 30, 0.93, "labs", 1.5),
      continuous("Creatinine Blood", R::creatinine, 1.3, 0.9, 0.2, 12, 0.93, "labs", 1.5),
      continuous("Blood Urea Nitrogen", R::bun, 25, 15, 2, 150, 0.93, "labs", 1.0),
      continuous("Sodium", R::sodium, 139, 4, 115, 165, 0.93, "labs", 0.0),
      continuous("Potassium", R::potassium, 4.1, 0.5, 2.2, 7, 0.93, "labs", 0.0),
      continuous("Bicarbonate", R::bicarbonate, 24, 4, 8, 40, 0.93, "labs", -1.0),
      continuous("White Blood Cells", R::wbc, 11, 5, 0.3, 50, 0.93, "labs", 1.0),
      continuous("Urine", R::urine, 120, 60, 0, 800, 0.50, "", -1.5),
      drug("Dopamine", R::dopamine, 6.0, 0.3, 0.05, 0.02, 0.15, 0.03),
      drug("Dobutamine", R::dobutamine, 5.0, 0.3, 0.03, 0.01, 0.15, 0.01),
      drug("Epinephrine", R::epinephrine, 0.08, 0.3, 0.03, 0.01, 0.2, 0.02),
      drug("Norepinephrine", R::norepinephrine, 0.12, 0.3, 0.10, 0.03, 0.12, 0.15),
      drug("Vancomycin", R::antibiotic, 1000, 0.3, 0.05, 0.01, 0.3, 0.0),
  };
  GenVariable mv;
  mv.name = "Mechanically ventilated";
  mv.role = R::mech_vent;
  mv.kind = VariableKind::state;
  mv.mean = 1.0;
  mv.sd = 0.0;
  mv.lo = 0.0;
  mv.hi = 1.0;
  mv.missingness = 0.5;
  mv.on_prob = 0.3;
  mv.switch_on = 0.02;
  mv.switch_off = 0.03;
  mv.deterioration = 0.1;
  c.variables.push_back(mv);
  GenVariable culture;
  culture.name = "Blood Culture";
  culture.role = R::blood_culture;
  culture.kind = VariableKind::event;
  culture.mean = 1.0;
  culture.sd = 0.0;
  culture.missingness = 1.0;
  culture.switch_on = 0.005;
  c.variables.push_back(culture);
  c.statics = {{"Age", 65, 15, 18, 95, false}, {"Gender", 0.5, 0, 0, 1, true}};
  c.couplings = {{"Norepinephrine", "Systolic Blood Pressure", 1, 1.0},
                 {"Norepinephrine", "Diastolic Blood Pressure", 1, 0.8},
                 {"Dopamine", "Heart Rate", 1, 1.0},
                 {"Dobutamine", "Heart Rate", 1, 0.5}};
  return c;
}

GeneratorConfig GeneratorConfig::compact(std::size_t n, bool coupled) {
  GeneratorConfig c;
  c.deterioration_infected = 0.0;
  c.deterioration_other = 0.0;
  c.infection_rate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = n > 1 ? 0.3 + 0.4 * static_cast<double>(i) / static_cast<double>(n - 1) : 0.3;
    c.variables.push_back(continuous("X" + std::to_string(i), ClinicalRole::none, 50.0, 10.0,
                                     -std::numeric_limits<double>::infinity(),
                                     std::numeric_limits<double>::infinity(), m, "", 0.0));
  }
  c.variables.push_back(drug("DrugA", ClinicalRole::none, 5.0, 0.2, 0.3, 0.08, 0.15, 0.0));
  c.variables.back().sd = 0.3;
  c.statics = {{"Age", 65, 15, 18, 95, false}, {"Gender", 0.5, 0, 0, 1, true}};
  if (coupled && n > 0) c.couplings = {{"DrugA", "X0", 1, 2.0}};
  return c;
}

GeneratorConfig GeneratorConfig::preset(const std::string& name) {
  if (name == "clinical") return clinical();
  if (name == "compact") return compact(7, true);
  if (name == "compact_uncoupled") return compact(7, false);
  fail(ErrorCategory::config, "unknown generator preset: " + name);
}

VariableCatalog GeneratorConfig::catalog() const {
  std::vector<VariableInfo> vars;
  for (const auto& v : variables) vars.push_back({v.name, v.role});
  std::vector<std::string> names;
  for (const auto& s : statics) names.push_back(s.name);
  return VariableCatalog(std::move(vars), std::move(names));
}

void GeneratorConfig::validate() const {
  if (patients == 0) fail(ErrorCategory::config, "generator needs at least one patient");
  if (!(stay_min >= 0.0 && stay_min <= stay_max && std::isfinite(stay_max))) {
    fail(ErrorCategory::config, "stay range must satisfy 0 <= stay_min <= stay_max < inf");
  }
  if (variables.empty()) fail(ErrorCategory::config, "generator needs at least one variable");
  for (double v : {oscillation, offset_sd, process_noise, observation_noise}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCategory::config, "noise and amplitude settings must be >= 0");
  }
  check_probability(infection_rate, "infection_rate");
  check_probability(deterioration_infected, "deterioration_infected");
  check_probability(deterioration_other, "deterioration_other");
  try {
    (void)catalog();
  } catch (const Error& e) {
    fail(ErrorCategory::config, e.what());
  }
  std::map<std::string, const GenVariable*> panels;
  for (const auto& v : variables) {
    check_probability(v.missingness, v.name + ": missingness");
    check_probability(v.on_prob, v.name + ": on_prob");
    check_probability(v.switch_on, v.name + ": switch_on");
    check_probability(v.switch_off, v.name + ": switch_off");
    if (!(v.extra_rate >= 0.0 && v.extra_rate <= kMaxExtraRate)) {
      fail(ErrorCategory::config, v.name + ": extra_rate must lie in [0, 59] (minute time resolution)");
    }
    switch (v.kind) {
      case VariableKind::continuous:
        if (!(v.sd > 0.0) || !std::isfinite(v.mean)) fail(ErrorCategory::config, v.name + ": sd must be > 0");
        if (!(v.lo < v.hi)) fail(ErrorCategory::config, v.name + ": clamp range is empty");
        break;
      case VariableKind::drug:
        if (!(v.mean > 0.0) || !(v.sd >= 0.0)) fail(ErrorCategory::config, v.name + ": dose must be > 0");
        if (!v.panel.empty()) fail(ErrorCategory::config, v.name + ": only continuous variables form panels");
        break;
      case VariableKind::state:
      case VariableKind::event:
        if (!v.panel.empty()) fail(ErrorCategory::config, v.name + ": only continuous variables form panels");
        break;
    }
    if (!v.panel.empty()) {
      auto [it, inserted] = panels.emplace(v.panel, &v);
      if (!inserted && (it->second->missingness != v.missingness || it->second->extra_rate != v.extra_rate)) {
        fail(ErrorCategory::config, "panel " + v.panel + ": members must share missingness and extra_rate");
      }
    }
  }
  for (const auto& s : statics) {
    if (s.name.empty()) fail(ErrorCategory::config, "static variable without a name");
    if (s.binary) check_probability(s.mean, s.name + ": mean");
  }
  const auto cat = catalog();
  for (const auto& c : couplings) {
    auto src = cat.index_of(c.source);
    auto dst = cat.index_of(c.target);
    if (!src || !dst) fail(ErrorCategory::config, "coupling references unknown variable");
    if (variables[*src].kind != VariableKind::drug && variables[*src].kind != VariableKind::state) {
      fail(ErrorCategory::config, "coupling source " + c.source + " must be a drug or state variable");
    }
    if (variables[*dst].kind != VariableKind::continuous) {
      fail(ErrorCategory::config, "coupling target " + c.target + " must be continuous");
    }
    if (!std::isfinite(c.effect)) fail(ErrorCategory::config, "coupling effect must be finite");
  }
}

nlohmann::json GeneratorConfig::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : variables) {
    vars.push_back({{"name", v.name},
                    {"role", std::string(role_name(v.role))},
                    {"kind", std::string(kind_name(v.kind))},
                    {"mean", v.mean},
                    {"sd", v.sd},
                    {"lo", bound_json(v.lo)},
                    {"hi", bound_json(v.hi)},
                    {"missingness", v.missingness},
                    {"extra_rate", v.extra_rate},
                    {"panel", v.panel},
                    {"on_prob", v.on_prob},
                    {"switch_on", v.switch_on},
                    {"switch_off", v.switch_off},
                    {"deterioration", v.deterioration}});
  }
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : statics) {
    stats.push_back({{"name", s.name},
                     {"mean", s.mean},
                     {"sd", s.sd},
                     {"lo", bound_json(s.lo)},
                     {"hi", bound_json(s.hi)},
                     {"binary", s.binary}});
  }
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& c : couplings) {
    cps.push_back({{"source", c.source}, {"target", c.target}, {"lag_hours", c.lag_hours}, {"effect", c.effect}});
  }
  return {{"patients", patients},
          {"stay_min", stay_min},
          {"stay_max", stay_max},
          {"oscillation", oscillation},
          {"offset_sd", offset_sd},
          {"process_noise", process_noise},
          {"observation_noise", observation_noise},
          {"infection_rate", infection_rate},
          {"deterioration_infected", deterioration_infected},
          {"deterioration_other", deterioration_other},
          {"variables", vars},
          {"statics", stats},
          {"couplings", cps}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kTop{"preset",
                                          "patients",
                                          "stay_min",
                                          "stay_max",
                                          "oscillation",
                                          "offset_sd",
                                          "process_noise",
                                          "observation_noise",
                                          "infection_rate",
                                          "deterioration_infected",
                                          "deterioration_other",
                                          "variables",
                                          "statics",
                                          "couplings"};
  try {
    if (!j.is_object()) fail(ErrorCategory::config, "generator config must be a JSON object");
    for (const auto& [key, value] : j.items())
      if (!kTop.count(key)) fail(ErrorCategory::config, "unknown generator key: " + key);
    GeneratorConfig c = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : GeneratorConfig{};
    c.patients = j.value("patients", c.patients);
    c.stay_min = j.value("stay_min", c.stay_min);
    c.stay_max = j.value("stay_max", c.stay_max);
    c.oscillation = j.value("oscillation", c.oscillation);
    c.offset_sd = j.value("offset_sd", c.offset_sd);
    c.process_noise = j.value("process_noise", c.process_noise);
    c.observation_noise = j.value("observation_noise", c.observation_noise);
    c.infection_rate = j.value("infection_rate", c.infection_rate);
    c.deterioration_infected = j.value("deterioration_infected", c.deterioration_infected);
    c.deterioration_other = j.value("deterioration_other", c.deterioration_other);
    if (j.contains("variables")) {
      c.variables.clear();
      for (const auto& v : j.at("variables")) {
        GenVariable g;
        g.name = v.at("name").get<std::string>();
        g.role = parse_role(v.value("role", std::string("none")));
        g.kind = parse_kind(v.value("kind", std::string("continuous")));
        g.mean = v.value("mean", g.mean);
        g.sd = v.value("sd", g.sd);
        g.lo = json_bound(v, "lo", g.lo);
        g.hi = json_bound(v, "hi", g.hi);
        g.missingness = v.value("missingness", g.missingness);
        g.extra_rate = v.value("extra_rate", g.extra_rate);
        g.panel = v.value("panel", g.panel);
        g.on_prob = v.value("on_prob", g.on_prob);
        g.switch_on = v.value("switch_on", g.switch_on);
        g.switch_off = v.value("switch_off", g.switch_off);
        g.deterioration = v.value("deterioration", g.deterioration);
        c.variables.push_back(std::move(g));
      }
    }
    if (j.contains("statics")) {
      c.statics.clear();
      for (const auto& s : j.at("statics")) {
        GenStatic g;
        g.name = s.at("name").get<std::string>();
        g.mean = s.value("mean", g.mean);
        g.sd = s.value("sd", g.sd);
        g.lo = json_bound(s, "lo", g.lo);
        g.hi = json_bound(s, "hi", g.hi);
        g.binary = s.value("binary", g.binary);
        c.statics.push_back(std::move(g));
      }
    }
    if (j.contains("couplings")) {
      c.couplings.clear();
      for (const auto& s : j.at("couplings")) {
        Coupling cp;
        cp.source = s.at("source").get<std::string>();
        cp.target = s.at("target").get<std::string>();
        cp.lag_hours = s.value("lag_hours", cp.lag_hours);
        cp.effect = s.value("effect", cp.effect);
        c.couplings.push_back(std::move(cp));
      }
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::config, std::string("malformed generator config: ") + e.what());
  }
}

double deterioration_ramp(double onset, double t) {
  if (!(t > onset)) return 0.0;
  return std::min(1.0, (t - onset) / kRampHours);
}

double latent_trajectory(const LatentParams& p, double deterioration, double onset, double t) {
  return p.offset + p.amplitude * std::exp(-p.decay * t) * std::cos(p.omega * t + p.phase) +
         deterioration * deterioration_ramp(onset, t);
}

GeneratedCohort synth_generate(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  GeneratedCohort out;
  out.dataset.catalog = config.catalog();
  const std::size_t nf = config.variables.size();
  const auto& cat = out.dataset.catalog;

  struct ResolvedCoupling {
    std::size_t source, target, lag;
    double effect;
  };
  std::vector<ResolvedCoupling> couplings;
  for (const auto& c : config.couplings)
    couplings.push_back({cat.require(c.source), cat.require(c.target), c.lag_hours, c.effect});

  // Observation groups: each panel once, every other variable on its own.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> panel_group;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& v = config.variables[f];
    if (v.kind == VariableKind::event) continue;
    if (v.panel.empty()) {
      groups.push_back({f});
    } else {
      auto [it, inserted] = panel_group.emplace(v.panel, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(f);
    }
  }

  std::vector<double> observed_hours(nf, 0.0);
  double total_hours = 0.0;
  std::size_t infected_count = 0;
  const std::size_t width = std::max<std::size_t>(5, std::to_string(config.patients).size());

  for (std::size_t p = 0; p < config.patients; ++p) {
    Rng rng = Rng::derive(seed, p);
    PatientTruth truth;
    std::string id = std::to_string(p + 1);
    truth.patient_id = "P" + std::string(width - id.size(), '0') + id;
    truth.stay = rng.uniform(config.stay_min, config.stay_max);
    truth.infected = rng.bernoulli(config.infection_rate);
    if (truth.infected) ++infected_count;
    const double det_p = truth.infected ? config.deterioration_infected : config.deterioration_other;
    if (rng.bernoulli(det_p)) truth.deterioration_onset = rng.uniform(20.0, 40.0);
    const auto full_hours = static_cast<std::size_t>(std::floor(truth.stay));
    const std::size_t level_hours = full_hours + 1;

    truth.latent.resize(nf);
    truth.levels.assign(nf, {});
    truth.noise_path.assign(nf, {});
    SparseSeries series;
    series.patient_id = truth.patient_id;

    for (std::size_t f = 0; f < nf; ++f) {
      const auto& v = config.variables[f];
      switch (v.kind) {
        case VariableKind::continuous: {
          LatentParams lp;
          lp.offset = rng.normal(0.0, config.offset_sd);
          lp.amplitude = config.oscillation * rng.uniform(0.5, 1.5);
          lp.decay = rng.uniform(0.0, 0.03);
          lp.omega = 2.0 * std::numbers::pi / rng.uniform(12.0, 36.0);
          lp.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
          truth.latent[f] = lp;
          auto& path = truth.noise_path[f];
          path.resize(level_hours);
          double n = rng.normal();
          for (std::size_t h = 0; h < level_hours; ++h) {
            if (h > 0) n = kNoiseCorrelation * n + std::sqrt(1.0 - kNoiseCorrelation * kNoiseCorrelation) * rng.normal();
            path[h] = n;
          }
          break;
        }
        case VariableKind::drug:
        case VariableKind::state:
          if (v.role == ClinicalRole::antibiotic && truth.infected) {
            auto& lv = truth.levels[f];
            lv.assign(level_hours, 0.0);
            const auto start = static_cast<std::size_t>(rng.below(20));
            const double dose = v.mean * std::exp(v.sd * rng.normal() - 0.5 * v.sd * v.sd);
            for (std::size_t h = start; h < level_hours; ++h) lv[h] = dose;
          } else {
            truth.levels[f] = markov_levels(v, level_hours, truth.deterioration_onset, rng);
          }
          break;
        case VariableKind::event: {
          if (truth.infected && v.role == ClinicalRole::blood_culture) {
            series.observations.push_back({minute_time(rng.below(20), rng), f, v.mean});
          }
          for (std::size_t h = 0; h < full_hours; ++h)
            if (rng.bernoulli(v.switch_on)) series.observations.push_back({minute_time(h, rng), f, v.mean});
          break;
        }
      }
    }

    auto latent_at = [&](std::size_t f, double t) {
      const auto& v = config.variables[f];
      const auto hour = static_cast<std::size_t>(std::floor(t));
      double z = latent_trajectory(truth.latent[f], v.deterioration, truth.deterioration_onset, t);
      z += config.process_noise * truth.noise_path[f][hour];
      for (const auto& c : couplings) {
        if (c.target != f || hour < c.lag) continue;
        const auto& src = config.variables[c.source];
        const double level = truth.levels[c.source][hour - c.lag];
        z += c.effect * (src.kind == VariableKind::drug ? level / src.mean : level);
      }
      return z;
    };

    for (const auto& group : groups) {
      const auto& lead = config.variables[group.front()];
      for (std::size_t h = 0; h < full_hours; ++h) {
        if (rng.bernoulli(lead.missingness)) continue;
        std::vector<double> times{minute_time(h, rng)};
        const int extra = rng.poisson(lead.extra_rate);
        for (int k = 0; k < extra; ++k) times.push_back(minute_time(h, rng));
        std::sort(times.begin(), times.end());
        for (std::size_t f : group) {
          observed_hours[f] += 1.0;
          const auto& v = config.variables[f];
          for (double t : times) {
            double value = 0.0;
            if (v.kind == VariableKind::continuous) {
              const double noise = config.observation_noise > 0.0 ? config.observation_noise * rng.normal() : 0.0;
              value = std::clamp(v.mean + v.sd * (latent_at(f, t) + noise), v.lo, v.hi);
            } else {
              value = truth.levels[f][h];
            }
            series.observations.push_back({t, f, value});
          }
        }
      }
    }
    total_hours += static_cast<double>(full_hours);

    series.statics.resize(config.statics.size());
    for (std::size_t s = 0; s < config.statics.size(); ++s) {
      const auto& st = config.statics[s];
      series.statics[s] = st.binary ? (rng.bernoulli(st.mean) ? 1.0 : 0.0)
                                    : std::clamp(rng.normal(st.mean, st.sd), st.lo, st.hi);
    }
    series.sort_observations();
    out.dataset.patients.push_back(std::move(series));
    out.truth.push_back(std::move(truth));
  }

  nlohmann::json miss = nlohmann::json::object();
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& v = config.variables[f];
    if (v.kind == VariableKind::event) continue;
    miss[v.name] = {{"configured", v.missingness},
                    {"measured", total_hours > 0 ? 1.0 - observed_hours[f] / total_hours : 1.0}};
  }
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& c : config.couplings) {
    cps.push_back({{"source", c.source},
                   {"target", c.target},
                   {"lag_hours", c.lag_hours},
                   {"effect_sd", c.effect},
                   {"sign", c.effect > 0 ? "+" : (c.effect < 0 ? "-" : "0")}});
  }
  out.manifest = {{"format", "causecast-synth-manifest"},
                  {"version", 1},
                  {"seed", seed},
                  {"patient_seed_rule", "stream = patient index"},
                  {"patients", config.patients},
                  {"infected", infected_count},
                  {"couplings", cps},
                  {"missingness", miss},
                  {"config", config.to_json()}};
  return out;
}

}  // namespace causecast
