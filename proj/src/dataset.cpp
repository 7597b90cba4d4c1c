#include "causecast/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "causecast/error.hpp"

namespace causecast {
namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool is_header(const std::vector<std::string_view>& fields) { return !fields.empty() && fields[0] == "patient_id"; }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) fail(ErrorCategory::io, "cannot format number");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view context) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(ErrorCategory::data, "invalid number '" + std::string(text) + "' in " + std::string(context));
  }
  return v;
}

std::vector<SparseSeries> read_observations(std::istream& in, const VariableCatalog& catalog) {
  std::vector<SparseSeries> patients;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (is_header(fields)) continue;
    const std::string ctx = "observations line " + std::to_string(line_no);
    if (fields.size() != 4) fail(ErrorCategory::data, ctx + ": expected 4 fields");
    const std::string pid(fields[0]);
    const double t = parse_double(fields[1], ctx);
    if (!(t >= 0.0) || !std::isfinite(t)) fail(ErrorCategory::data, ctx + ": time must be non-negative");
    const std::size_t var = catalog.require(fields[2]);
    const double value = parse_double(fields[3], ctx);
    auto [it, inserted] = index.try_emplace(pid, patients.size());
    if (inserted) {
      SparseSeries s;
      s.patient_id = pid;
      s.statics.assign(catalog.static_count(), std::numeric_limits<double>::quiet_NaN());
      patients.push_back(std::move(s));
    }
    patients[it->second].observations.push_back({t, var, value});
  }
  for (auto& p : patients) p.sort_observations();
  return patients;
}

void read_statics(std::istream& in, const VariableCatalog& catalog, std::vector<SparseSeries>& patients) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < patients.size(); ++i) index.emplace(patients[i].patient_id, i);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (is_header(fields)) continue;
    const std::string ctx = "statics line " + std::to_string(line_no);
    if (fields.size() != 3) fail(ErrorCategory::data, ctx + ": expected 3 fields");
    auto sidx = catalog.static_index_of(fields[1]);
    if (!sidx) fail(ErrorCategory::catalog, "unknown static variable: " + std::string(fields[1]));
    auto it = index.find(std::string(fields[0]));
    if (it == index.end()) continue;  // statics for a patient without dynamic data
    patients[it->second].statics[*sidx] = parse_double(fields[2], ctx);
  }
}

void write_observations(std::ostream& out, const Dataset& dataset) {
  out << "patient_id,t_hours,variable,value\n";
  for (const auto& p : dataset.patients)
    for (const auto& o : p.observations)
      out << p.patient_id << ',' << format_double(o.t) << ',' << dataset.catalog.variable(o.variable).name << ','
          << format_double(o.value) << '\n';
}

void write_statics(std::ostream& out, const Dataset& dataset) {
  out << "patient_id,variable,value\n";
  for (const auto& p : dataset.patients)
    for (std::size_t i = 0; i < p.statics.size(); ++i) {
      if (std::isnan(p.statics[i])) continue;
      out << p.patient_id << ',' << dataset.catalog.statics()[i] << ',' << format_double(p.statics[i]) << '\n';
    }
}

VariableCatalog load_catalog(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return VariableCatalog::from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCategory::catalog, "cannot parse " + path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.catalog = load_catalog(dir / "catalog.json");
  auto obs = open_input(dir / "observations.csv");
  ds.patients = read_observations(obs, ds.catalog);
  if (std::filesystem::exists(dir / "statics.csv")) {
    auto st = open_input(dir / "statics.csv");
    read_statics(st, ds.catalog, ds.patients);
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream obs;
  write_observations(obs, dataset);
  write_file_atomically(dir / "observations.csv", obs.str());
  std::ostringstream st;
  write_statics(st, dataset);
  write_file_atomically(dir / "statics.csv", st.str());
  write_file_atomically(dir / "catalog.json", dataset.catalog.to_json().dump(2) + "\n");
}

void write_grid_header(std::ostream& out) { out << "patient_id,hour,variable,value\n"; }

void write_grid_cells(std::ostream& out, const std::string& patient_id, const DenseGrid& grid,
                      std::size_t hour_offset, const VariableCatalog& catalog, bool observed_only) {
  for (std::size_t h = 0; h < grid.rows; ++h)
    for (std::size_t f = 0; f < grid.cols; ++f) {
      if (observed_only && !grid.observed(h, f)) continue;
      out << patient_id << ',' << (h + hour_offset) << ',' << catalog.variable(f).name << ','
          << format_double(grid.value(h, f)) << '\n';
    }
}

std::map<std::string, DenseGrid> read_grid_file(std::istream& in, const VariableCatalog& catalog, std::size_t hours) {
  std::map<std::string, DenseGrid> grids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (is_header(fields)) continue;
    const std::string ctx = "grid line " + std::to_string(line_no);
    if (fields.size() != 4) fail(ErrorCategory::data, ctx + ": expected 4 fields");
    const double hour = parse_double(fields[1], ctx);
    if (hour < 0 || hour != std::floor(hour)) fail(ErrorCategory::data, ctx + ": hour must be a non-negative integer");
    const std::size_t var = catalog.require(fields[2]);
    const double value = parse_double(fields[3], ctx);
    auto [it, inserted] = grids.try_emplace(std::string(fields[0]), hours, catalog.size(), 0.0);
    const auto h = static_cast<std::size_t>(hour);
    if (h >= hours) continue;
    it->second.value(h, var) = value;
    it->second.mask[h * catalog.size() + var] = 1;
  }
  return grids;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) fail(ErrorCategory::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCategory::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace causecast
