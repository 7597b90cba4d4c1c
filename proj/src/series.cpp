#include "causecast/series.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "causecast/error.hpp"

namespace causecast {

double SparseSeries::span() const {
  double d = 0.0;
  for (const auto& o : observations) d = std::max(d, o.t);
  return d;
}

void SparseSeries::sort_observations() {
  std::stable_sort(observations.begin(), observations.end(),
                   [](const Observation& a, const Observation& b) { return a.t < b.t; });
}

DenseGrid::DenseGrid(std::size_t r, std::size_t c, double fill)
    : rows(r), cols(c), values(r * c, fill), mask(r * c, 0) {}

std::size_t DenseGrid::observed_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

namespace {

void fill_statics(DenseGrid& grid, const SparseSeries& series, double imputation) {
  grid.statics.resize(series.statics.size());
  for (std::size_t i = 0; i < series.statics.size(); ++i)
    grid.statics[i] = std::isnan(series.statics[i]) ? imputation : series.statics[i];
}

}  // namespace

DenseGrid bin_range(const SparseSeries& series, std::size_t variables, double start, std::size_t hours,
                    double imputation) {
  DenseGrid grid(hours, variables, imputation);
  fill_statics(grid, series, imputation);
  std::vector<std::size_t> order(series.observations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return series.observations[a].t < series.observations[b].t;
  });
  const double end = start + static_cast<double>(hours);
  for (std::size_t idx : order) {
    const Observation& o = series.observations[idx];
    if (o.t < start || o.t >= end) continue;
    if (o.variable >= variables) fail(ErrorCategory::catalog, "observation variable index out of range");
    const auto h = static_cast<std::size_t>(std::floor(o.t - start));
    if (h >= hours) continue;
    const std::size_t cell = h * variables + o.variable;
    if (grid.mask[cell]) {
      ++grid.discarded;
      continue;
    }
    grid.mask[cell] = 1;
    grid.values[cell] = o.value;
  }
  return grid;
}

DenseGrid bin_to_grid(const SparseSeries& series, std::size_t variables, double imputation) {
  if (series.observations.empty()) {
    DenseGrid grid(0, variables, imputation);
    fill_statics(grid, series, imputation);
    return grid;
  }
  const auto rows = static_cast<std::size_t>(std::floor(series.span())) + 1;
  return bin_range(series, variables, 0.0, rows, imputation);
}

StandardizationStats StandardizationStats::compute(const std::vector<SparseSeries>& training,
                                                   const VariableCatalog& catalog) {
  const std::size_t nf = catalog.size();
  const std::size_t ns = catalog.static_count();
  std::vector<double> sum(nf, 0.0), sumsq(nf, 0.0), count(nf, 0.0);
  std::vector<double> ssum(ns, 0.0), ssumsq(ns, 0.0), scount(ns, 0.0);
  for (const auto& s : training) {
    for (const auto& o : s.observations) {
      if (o.variable >= nf) fail(ErrorCategory::catalog, "observation variable index out of range");
      sum[o.variable] += o.value;
      count[o.variable] += 1.0;
    }
    for (std::size_t i = 0; i < std::min(ns, s.statics.size()); ++i) {
      if (std::isnan(s.statics[i])) continue;
      ssum[i] += s.statics[i];
      scount[i] += 1.0;
    }
  }
  StandardizationStats stats;
  stats.mean.resize(nf);
  stats.sd.resize(nf);
  stats.degenerate.assign(nf, false);
  for (std::size_t f = 0; f < nf; ++f) stats.mean[f] = count[f] > 0 ? sum[f] / count[f] : 0.0;
  for (const auto& s : training)
    for (const auto& o : s.observations) {
      const double d = o.value - stats.mean[o.variable];
      sumsq[o.variable] += d * d;
    }
  for (std::size_t f = 0; f < nf; ++f) {
    const double sd = count[f] > 1 ? std::sqrt(sumsq[f] / (count[f] - 1.0)) : 0.0;
    if (!(sd > 1e-12) || !std::isfinite(sd)) {
      stats.sd[f] = 1.0;
      stats.degenerate[f] = true;
    } else {
      stats.sd[f] = sd;
    }
  }
  stats.static_mean.resize(ns);
  stats.static_sd.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) stats.static_mean[i] = scount[i] > 0 ? ssum[i] / scount[i] : 0.0;
  for (const auto& s : training)
    for (std::size_t i = 0; i < std::min(ns, s.statics.size()); ++i) {
      if (std::isnan(s.statics[i])) continue;
      const double d = s.statics[i] - stats.static_mean[i];
      ssumsq[i] += d * d;
    }
  for (std::size_t i = 0; i < ns; ++i) {
    const double sd = scount[i] > 1 ? std::sqrt(ssumsq[i] / (scount[i] - 1.0)) : 0.0;
    stats.static_sd[i] = (sd > 1e-12 && std::isfinite(sd)) ? sd : 1.0;
  }
  return stats;
}

nlohmann::json StandardizationStats::to_json() const {
  return {{"mean", mean},
          {"sd", sd},
          {"degenerate", degenerate},
          {"static_mean", static_mean},
          {"static_sd", static_sd}};
}

StandardizationStats StandardizationStats::from_json(const nlohmann::json& j) {
  StandardizationStats s;
  try {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.sd = j.at("sd").get<std::vector<double>>();
    s.degenerate = j.at("degenerate").get<std::vector<bool>>();
    s.static_mean = j.at("static_mean").get<std::vector<double>>();
    s.static_sd = j.at("static_sd").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, std::string("malformed standardization stats: ") + e.what());
  }
  if (s.mean.size() != s.sd.size()) fail(ErrorCategory::data, "standardization stats size mismatch");
  return s;
}

SparseSeries standardize(const SparseSeries& series, const StandardizationStats& stats) {
  SparseSeries out = series;
  for (auto& o : out.observations) {
    if (o.variable >= stats.mean.size()) fail(ErrorCategory::catalog, "no statistics for variable index");
    o.value = stats.standardize(o.variable, o.value);
  }
  for (std::size_t i = 0; i < out.statics.size(); ++i) {
    if (i >= stats.static_mean.size()) fail(ErrorCategory::catalog, "no statistics for static variable");
    if (!std::isnan(out.statics[i])) out.statics[i] = (out.statics[i] - stats.static_mean[i]) / stats.static_sd[i];
  }
  return out;
}

SparseSeries destandardize(const SparseSeries& series, const StandardizationStats& stats) {
  SparseSeries out = series;
  for (auto& o : out.observations) o.value = stats.destandardize(o.variable, o.value);
  for (std::size_t i = 0; i < out.statics.size(); ++i)
    if (!std::isnan(out.statics[i])) out.statics[i] = out.statics[i] * stats.static_sd[i] + stats.static_mean[i];
  return out;
}

DenseGrid destandardize(const DenseGrid& grid, const StandardizationStats& stats) {
  if (grid.cols != stats.mean.size()) fail(ErrorCategory::dimension, "grid width does not match statistics");
  DenseGrid out = grid;
  for (std::size_t h = 0; h < grid.rows; ++h)
    for (std::size_t f = 0; f < grid.cols; ++f) out.value(h, f) = stats.destandardize(f, grid.value(h, f));
  for (std::size_t i = 0; i < out.statics.size() && i < stats.static_mean.size(); ++i)
    out.statics[i] = out.statics[i] * stats.static_sd[i] + stats.static_mean[i];
  return out;
}

std::vector<std::size_t> window_starts(double span) {
  std::vector<std::size_t> starts;
  const double limit = std::min(span, kWindowSpanCap);
  const double length = static_cast<double>(kObservationHours + kHorizon);
  for (std::size_t s = 0; static_cast<double>(s) + length <= limit; s += kWindowStride) starts.push_back(s);
  return starts;
}

std::size_t window_count(double span) { return window_starts(span).size(); }

WindowPair make_window(const SparseSeries& series, std::size_t variables, std::size_t start_hour) {
  WindowPair w;
  w.patient_id = series.patient_id;
  w.start_hour = start_hour;
  const double start = static_cast<double>(start_hour);
  const double obs_end = start + static_cast<double>(kObservationHours);
  w.observation.patient_id = series.patient_id;
  w.observation.statics = series.statics;
  for (const auto& o : series.observations) {
    if (o.t >= start && o.t < obs_end) w.observation.observations.push_back({o.t - start, o.variable, o.value});
  }
  w.observation.sort_observations();
  w.observation_grid = bin_range(series, variables, start, kObservationHours);
  w.target = bin_range(series, variables, obs_end, kHorizon);
  return w;
}

std::vector<WindowPair> sliding_windows(const SparseSeries& series, std::size_t variables) {
  std::vector<WindowPair> out;
  for (std::size_t s : window_starts(series.span())) out.push_back(make_window(series, variables, s));
  return out;
}

}  // namespace causecast
