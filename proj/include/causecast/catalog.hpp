#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace causecast {

// Clinical identity of a dynamic variable, used by the scoring engines.
enum class ClinicalRole {
  none,
  gcs_eye,
  gcs_motor,
  gcs_verbal,
  sbp,
  dbp,
  dopamine,
  dobutamine,
  epinephrine,
  norepinephrine,
  pao2,
  fio2,
  platelets,
  bilirubin,
  creatinine,
  urine,
  mech_vent,
  heart_rate,
  temperature,
  bun,
  sodium,
  potassium,
  bicarbonate,
  wbc,
  antibiotic,
  blood_culture,
};

std::string_view role_name(ClinicalRole role);
ClinicalRole parse_role(std::string_view name);
bool feeds_sofa(ClinicalRole role);
bool feeds_saps(ClinicalRole role);
bool is_infection_proxy(ClinicalRole role);

struct VariableInfo {
  std::string name;
  ClinicalRole role = ClinicalRole::none;
};

class VariableCatalog {
 public:
  VariableCatalog() = default;
  VariableCatalog(std::vector<VariableInfo> dynamic, std::vector<std::string> statics);

  std::size_t size() const { return dynamic_.size(); }
  std::size_t static_count() const { return statics_.size(); }
  const VariableInfo& variable(std::size_t index) const { return dynamic_.at(index); }
  const std::vector<VariableInfo>& variables() const { return dynamic_; }
  const std::vector<std::string>& statics() const { return statics_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require(std::string_view name) const;
  std::optional<std::size_t> static_index_of(std::string_view name) const;
  // First variable holding the role; absent roles are reported as nullopt.
  std::optional<std::size_t> find_role(ClinicalRole role) const;
  std::vector<std::size_t> all_with_role(ClinicalRole role) const;

  nlohmann::json to_json() const;
  static VariableCatalog from_json(const nlohmann::json& j);

 private:
  std::vector<VariableInfo> dynamic_;
  std::vector<std::string> statics_;
};

}  // namespace causecast
