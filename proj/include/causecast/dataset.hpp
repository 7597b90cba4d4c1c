#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "causecast/catalog.hpp"
#include "causecast/series.hpp"

namespace causecast {

struct Dataset {
  VariableCatalog catalog;
  std::vector<SparseSeries> patients;  // file order of first appearance
};

// Shortest text form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view context);

// observations.csv: `patient_id,t_hours,variable,value`
// statics.csv:      `patient_id,variable,value`
// catalog.json:     variable list with clinical roles, static names
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::vector<SparseSeries> read_observations(std::istream& in, const VariableCatalog& catalog);
void read_statics(std::istream& in, const VariableCatalog& catalog, std::vector<SparseSeries>& patients);
void write_observations(std::ostream& out, const Dataset& dataset);
void write_statics(std::ostream& out, const Dataset& dataset);

VariableCatalog load_catalog(const std::filesystem::path& path);

// Long-format grid file `patient_id,hour,variable,value`; one line per observed
// cell, hour counted from admission.
struct GridRecord {
  std::string patient_id;
  std::size_t hour = 0;
  std::size_t variable = 0;
  double value = 0.0;
};
void write_grid_header(std::ostream& out);
void write_grid_cells(std::ostream& out, const std::string& patient_id, const DenseGrid& grid,
                      std::size_t hour_offset, const VariableCatalog& catalog, bool observed_only);
// Grids keyed by patient id, covering hours [0, hours); unlisted cells are masked.
std::map<std::string, DenseGrid> read_grid_file(std::istream& in, const VariableCatalog& catalog, std::size_t hours);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace causecast
