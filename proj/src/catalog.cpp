#include "causecast/catalog.hpp"

#include <array>
#include <set>
#include <utility>

#include "causecast/error.hpp"

namespace causecast {
namespace {

constexpr std::array<std::pair<ClinicalRole, std::string_view>, 26> kRoleNames{{
    {ClinicalRole::none, "none"},
    {ClinicalRole::gcs_eye, "gcs_eye"},
    {ClinicalRole::gcs_motor, "gcs_motor"},
    {ClinicalRole::gcs_verbal, "gcs_verbal"},
    {ClinicalRole::sbp, "sbp"},
    {ClinicalRole::dbp, "dbp"},
    {ClinicalRole::dopamine, "dopamine"},
    {ClinicalRole::dobutamine, "dobutamine"},
    {ClinicalRole::epinephrine, "epinephrine"},
    {ClinicalRole::norepinephrine, "norepinephrine"},
    {ClinicalRole::pao2, "pao2"},
    {ClinicalRole::fio2, "fio2"},
    {ClinicalRole::platelets, "platelets"},
    {ClinicalRole::bilirubin, "bilirubin"},
    {ClinicalRole::creatinine, "creatinine"},
    {ClinicalRole::urine, "urine"},
    {ClinicalRole::mech_vent, "mech_vent"},
    {ClinicalRole::heart_rate, "heart_rate"},
    {ClinicalRole::temperature, "temperature"},
    {ClinicalRole::bun, "bun"},
    {ClinicalRole::sodium, "sodium"},
    {ClinicalRole::potassium, "potassium"},
    {ClinicalRole::bicarbonate, "bicarbonate"},
    {ClinicalRole::wbc, "wbc"},
    {ClinicalRole::antibiotic, "antibiotic"},
    {ClinicalRole::blood_culture, "blood_culture"},
}};

}  // namespace

std::string_view role_name(ClinicalRole role) {
  for (const auto& [r, n] : kRoleNames)
    if (r == role) return n;
  return "none";
}

ClinicalRole parse_role(std::string_view name) {
  for (const auto& [r, n] : kRoleNames)
    if (n == name) return r;
  fail(ErrorCategory::catalog, "unknown clinical role: " + std::string(name));
}

bool feeds_sofa(ClinicalRole role) {
  switch (role) {
    case ClinicalRole::gcs_eye:
    case ClinicalRole::gcs_motor:
    case ClinicalRole::gcs_verbal:
    case ClinicalRole::sbp:
    case ClinicalRole::dbp:
    case ClinicalRole::dopamine:
    case ClinicalRole::dobutamine:
    case ClinicalRole::epinephrine:
    case ClinicalRole::norepinephrine:
    case ClinicalRole::pao2:
    case ClinicalRole::fio2:
    case ClinicalRole::platelets:
    case ClinicalRole::bilirubin:
    case ClinicalRole::creatinine:
    case ClinicalRole::urine:
      return true;
    default:
      return false;
  }
}

bool feeds_saps(ClinicalRole role) {
  switch (role) {
    case ClinicalRole::heart_rate:
    case ClinicalRole::sbp:
    case ClinicalRole::temperature:
    case ClinicalRole::gcs_eye:
    case ClinicalRole::gcs_motor:
    case ClinicalRole::gcs_verbal:
    case ClinicalRole::pao2:
    case ClinicalRole::fio2:
    case ClinicalRole::mech_vent:
    case ClinicalRole::bun:
    case ClinicalRole::urine:
    case ClinicalRole::sodium:
    case ClinicalRole::potassium:
    case ClinicalRole::bicarbonate:
    case ClinicalRole::wbc:
    case ClinicalRole::bilirubin:
      return true;
    default:
      return false;
  }
}

bool is_infection_proxy(ClinicalRole role) {
  return role == ClinicalRole::antibiotic || role == ClinicalRole::blood_culture;
}

VariableCatalog::VariableCatalog(std::vector<VariableInfo> dynamic, std::vector<std::string> statics)
    : dynamic_(std::move(dynamic)), statics_(std::move(statics)) {
  std::set<std::string> names;
  std::set<ClinicalRole> roles;
  for (const auto& v : dynamic_) {
    if (v.name.empty()) fail(ErrorCategory::catalog, "empty variable name");
    if (!names.insert(v.name).second) fail(ErrorCategory::catalog, "duplicate variable: " + v.name);
    // Several antibiotics may coexist; every other role names one variable.
    if (v.role != ClinicalRole::none && v.role != ClinicalRole::antibiotic && !roles.insert(v.role).second) {
      fail(ErrorCategory::catalog, "role assigned twice: " + std::string(role_name(v.role)));
    }
  }
  for (const auto& s : statics_) {
    if (s.empty()) fail(ErrorCategory::catalog, "empty static name");
    if (!names.insert(s).second) fail(ErrorCategory::catalog, "duplicate variable: " + s);
  }
}

std::optional<std::size_t> VariableCatalog::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < dynamic_.size(); ++i)
    if (dynamic_[i].name == name) return i;
  return std::nullopt;
}

std::size_t VariableCatalog::require(std::string_view name) const {
  if (auto idx = index_of(name)) return *idx;
  fail(ErrorCategory::catalog, "unknown variable: " + std::string(name));
}

std::optional<std::size_t> VariableCatalog::static_index_of(std::string_view name) const {
  for (std::size_t i = 0; i < statics_.size(); ++i)
    if (statics_[i] == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> VariableCatalog::find_role(ClinicalRole role) const {
  for (std::size_t i = 0; i < dynamic_.size(); ++i)
    if (dynamic_[i].role == role) return i;
  return std::nullopt;
}

std::vector<std::size_t> VariableCatalog::all_with_role(ClinicalRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dynamic_.size(); ++i)
    if (dynamic_[i].role == role) out.push_back(i);
  return out;
}

nlohmann::json VariableCatalog::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : dynamic_) vars.push_back({{"name", v.name}, {"role", std::string(role_name(v.role))}});
  return {{"variables", vars}, {"statics", statics_}};
}

VariableCatalog VariableCatalog::from_json(const nlohmann::json& j) {
  try {
    std::vector<VariableInfo> vars;
    for (const auto& v : j.at("variables")) {
      vars.push_back({v.at("name").get<std::string>(), parse_role(v.value("role", std::string("none")))});
    }
    std::vector<std::string> statics = j.value("statics", std::vector<std::string>{});
    return VariableCatalog(std::move(vars), std::move(statics));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::catalog, std::string("malformed catalog: ") + e.what());
  }
}

}  // namespace causecast
