#include "causecast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "causecast/dataset.hpp"
#include "causecast/error.hpp"

namespace causecast {

namespace {

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(const std::vector<double>& x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

void need_two(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
  if (a.size() < 2 || b.size() < 2)
    fail(ErrorCategory::undefined_metric, std::string(what) + " needs at least two samples per group");
}

}  // namespace

Interval confidence_interval(const std::vector<double>& samples) {
  if (samples.size() < 2) fail(ErrorCategory::undefined_metric, "confidence interval needs at least two samples");
  const double m = mean_of(samples);
  const double half = 1.96 * std::sqrt(sample_variance(samples, m)) / std::sqrt(static_cast<double>(samples.size()));
  return {m, m - half, m + half, samples.size()};
}

std::vector<double> windowed_squared_errors(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred,
                                            std::size_t first_hour, std::size_t last_hour) {
  if (gold.size() != pred.size())
    fail(ErrorCategory::dimension, "gold and forecast counts differ (" + std::to_string(gold.size()) + " vs " +
                                       std::to_string(pred.size()) + ")");
  if (first_hour < 1 || last_hour < first_hour) fail(ErrorCategory::config, "empty hour range");
  std::vector<double> out;
  out.reserve(gold.size());
  const double len = static_cast<double>(last_hour - first_hour + 1);
  for (std::size_t n = 0; n < gold.size(); ++n) {
    const DenseGrid& g = gold[n];
    const DenseGrid& p = pred[n];
    if (g.rows != p.rows || g.cols != p.cols) fail(ErrorCategory::dimension, "gold and forecast grids differ in shape");
    if (last_hour > g.rows) fail(ErrorCategory::config, "hour range exceeds the forecast horizon");
    double s = 0.0;
    for (std::size_t h = first_hour - 1; h < last_hour; ++h)
      for (std::size_t f = 0; f < g.cols; ++f)
        if (g.observed(h, f)) {
          const double d = g.value(h, f) - p.value(h, f);
          s += d * d;
        }
    out.push_back(s / len);
  }
  return out;
}

double masked_mse(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred, std::size_t first_hour,
                  std::size_t last_hour) {
  const auto e = windowed_squared_errors(gold, pred, first_hour, last_hour);
  if (e.empty()) fail(ErrorCategory::empty_input, "no windows to score");
  return mean_of(e);
}

double sofa_distance(const SofaSubscores& gold, const SofaSubscores& forecast) {
  const auto a = gold.values();
  const auto b = forecast.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>((a[i] - b[i]) * (a[i] - b[i]));
  return s;
}

double mse_sofa(const std::vector<SofaSubscores>& gold, const std::vector<SofaSubscores>& forecast) {
  if (gold.size() != forecast.size()) fail(ErrorCategory::dimension, "SOFA lists differ in length");
  if (gold.empty()) fail(ErrorCategory::undefined_metric, "no patients for MSE-SOFA");
  double s = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) s += sofa_distance(gold[i], forecast[i]);
  return s / static_cast<double>(gold.size());
}

double mse_saps(const std::vector<int>& gold, const std::vector<int>& forecast) {
  if (gold.size() != forecast.size()) fail(ErrorCategory::dimension, "SAPS lists differ in length");
  if (gold.empty()) fail(ErrorCategory::undefined_metric, "no patients for MSE-SAPS");
  double s = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) s += static_cast<double>((gold[i] - forecast[i]) * (gold[i] - forecast[i]));
  return s / static_cast<double>(gold.size());
}

std::optional<double> Confusion::accuracy() const {
  if (total() == 0) return std::nullopt;
  return 100.0 * static_cast<double>(tp + tn) / static_cast<double>(total());
}

std::optional<double> Confusion::f1() const {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return 100.0 * static_cast<double>(2 * tp) / static_cast<double>(denom);
}

Confusion confusion(const std::vector<SepsisLabel>& labels) {
  Confusion c;
  for (const SepsisLabel& l : labels) {
    if (!l.infected) continue;
    if (l.chi && l.chi_hat) ++c.tp;
    else if (!l.chi && l.chi_hat) ++c.fp;
    else if (l.chi && !l.chi_hat) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double acc_sepsis(const std::vector<SepsisLabel>& labels) {
  std::size_t n = 0, hit = 0;
  for (const SepsisLabel& l : labels) {
    if (!l.infected) continue;
    ++n;
    hit += l.chi == l.chi_hat ? 1 : 0;
  }
  if (n == 0) fail(ErrorCategory::undefined_metric, "sepsis cohort is empty");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  need_two(a, b, "t-test");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) {
    if (ma == mb) return {0.0, 1.0};
    return {mb > ma ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), 0.0};
  }
  const double t = (mb - ma) / std::sqrt(se2);
  const double df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, std::min(1.0, p)};
}

TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) fail(ErrorCategory::undefined_metric, "Mann-Whitney U needs two nonempty groups");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<std::pair<double, int>> all;
  all.reserve(n);
  for (double v : a) all.emplace_back(v, 0);
  for (double v : b) all.emplace_back(v, 1);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  std::vector<long> doubled(n);  // 2 * midrank
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].first == all[i].first) ++j;
    for (std::size_t k = i; k <= j; ++k) doubled[k] = static_cast<long>(i + j + 2);
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long r1 = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (all[k].second == 0) r1 += doubled[k];
  const double u = static_cast<double>(r1) / 2.0 - static_cast<double>(n1 * (n1 + 1)) / 2.0;
  const double mu = static_cast<double>(n1 * n2) / 2.0;

  if (std::max(n1, n2) > 20) {
    const double nn = static_cast<double>(n);
    const double var = static_cast<double>(n1 * n2) / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0.0) return {u, 1.0};
    const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
    return {u, std::min(1.0, std::erfc(z / std::sqrt(2.0)))};
  }

  // Exact: count subsets of size n1 by their doubled rank sum.
  const long max_sum = static_cast<long>(n * (n + 1));
  std::vector<std::vector<long double>> ways(n1 + 1, std::vector<long double>(static_cast<std::size_t>(max_sum) + 1, 0.0L));
  ways[0][0] = 1.0L;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = std::min(k + 1, n1); c >= 1; --c)
      for (long s = max_sum; s >= doubled[k]; --s)
        ways[c][static_cast<std::size_t>(s)] += ways[c - 1][static_cast<std::size_t>(s - doubled[k])];
  const long centre2 = static_cast<long>(n1 * (n + 1));  // 2 * E[R1] in doubled units
  const long observed = std::labs(r1 - centre2);
  long double extreme = 0.0L, total = 0.0L;
  for (long s = 0; s <= max_sum; ++s) {
    const long double w = ways[n1][static_cast<std::size_t>(s)];
    if (w == 0.0L) continue;
    total += w;
    if (std::labs(s - centre2) >= observed) extreme += w;
  }
  return {u, std::min(1.0, static_cast<double>(extreme / total))};
}

double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  need_two(a, b, "Cohen's d");
  const double ma = mean_of(a), mb = mean_of(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double pooled =
      std::sqrt(((na - 1.0) * sample_variance(a, ma) + (nb - 1.0) * sample_variance(b, mb)) / (na + nb - 2.0));
  if (pooled == 0.0) {
    if (ma == mb) return 0.0;
    return mb > ma ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return (mb - ma) / pooled;
}

std::pair<double, double> positive_quartiles(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !(v > 0.0); }), values.end());
  if (values.empty()) fail(ErrorCategory::data, "no positive doses to take quartiles from");
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {q(0.25), q(0.75)};
}

std::size_t AblationResult::significant_count() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.significant; }));
}

AblationResult drug_ablation(const ForecastModel& model, const std::vector<WindowPair>& windows,
                             const VariableCatalog& catalog, const StandardizationStats& stats,
                             const std::string& drug, double q1, double q3, double alpha, std::size_t batch_size) {
  const auto idx = catalog.index_of(drug);
  if (!idx) fail(ErrorCategory::config, "drug '" + drug + "' not in catalog");
  if (model.config().decoder != DecoderKind::ims)
    fail(ErrorCategory::config, "ablation clamps the decoder input and needs an ims model");
  if (windows.size() < 2) fail(ErrorCategory::empty_input, "ablation needs at least two input windows");
  if (catalog.size() < 2) fail(ErrorCategory::config, "ablation needs a variable besides the drug");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCategory::config, "alpha must lie in (0, 1)");
  if (batch_size == 0) fail(ErrorCategory::config, "batch size must be positive");

  const std::size_t f = catalog.size();
  const std::size_t n = windows.size();
  AblationResult out;
  out.drug = drug;
  out.q1 = q1;
  out.q3 = q3;
  out.alpha = alpha;
  out.threshold = alpha / static_cast<double>(f - 1);
  out.inputs = n;

  std::vector<std::vector<double>> means[2];  // [group][variable][window]
  for (auto& g : means) g.assign(f, std::vector<double>(n, 0.0));
  const double levels[2] = {stats.standardize(*idx, q1), stats.standardize(*idx, q3)};
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    std::vector<const WindowPair*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&windows[i]);
    const Batch batch = make_batch(ptrs, model.config().variables, model.config().statics);
    for (int g = 0; g < 2; ++g) {
      ImsOptions o;
      o.clamp = std::make_pair(*idx, levels[g]);
      const Tensor y = model.forecast(batch, {}, o);
      const auto v = y.values();
      for (std::size_t i = 0; i < batch.size; ++i)
        for (std::size_t var = 0; var < f; ++var) {
          double s = 0.0;
          for (std::size_t t = 0; t < kHorizon; ++t) s += stats.destandardize(var, v[(i * kHorizon + t) * f + var]);
          means[g][var][begin + i] = s / static_cast<double>(kHorizon);
        }
    }
  }

  for (std::size_t var = 0; var < f; ++var) {
    if (var == *idx) continue;
    AblationRow row;
    row.variable = catalog.variable(var).name;
    const auto& a = means[0][var];
    const auto& b = means[1][var];
    row.mean_q1 = mean_of(a);
    row.mean_q3 = mean_of(b);
    row.diff = row.mean_q3 - row.mean_q1;
    row.t_p = welch_t_test(a, b).p_value;
    row.mw_p = mann_whitney_u(a, b).p_value;
    row.significant = row.t_p < out.threshold && row.mw_p < out.threshold;
    row.cohens_d = cohens_d(a, b);
    out.rows.push_back(row);
  }
  return out;
}

PatientOutcome patient_outcome(const std::string& patient_id, const DenseGrid& first, const DenseGrid& gold_second,
                               const DenseGrid& forecast, const VariableCatalog& catalog) {
  PatientOutcome out;
  out.patient_id = patient_id;
  const DenseGrid masked = mask_to_gold(forecast, gold_second);
  out.sofa_gold = sofa_score(gold_second, catalog);
  out.sofa_forecast = sofa_score(masked, catalog);
  out.saps_gold = saps_score(gold_second, catalog).total();
  out.saps_forecast = saps_score(masked, catalog).total();
  out.label = sepsis_label(first, gold_second, &forecast, catalog);
  return out;
}

const MetricRow& EvalReport::row(std::string_view name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  fail(ErrorCategory::config, "report has no metric '" + std::string(name) + "'");
}

void EvalReport::select(const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (std::find(std::begin(kReportMetrics), std::end(kReportMetrics), n) == std::end(kReportMetrics))
      fail(ErrorCategory::config, "unknown metric '" + n + "'");
  std::vector<MetricRow> kept;
  for (auto& r : rows)
    if (std::find(names.begin(), names.end(), r.name) != names.end()) kept.push_back(std::move(r));
  rows = std::move(kept);
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

MetricRow sample_row(std::string name, const std::vector<double>& samples) {
  MetricRow r;
  r.name = std::move(name);
  r.n = samples.size();
  if (!samples.empty()) r.value = mean_of(samples);
  if (samples.size() >= 2) r.ci = confidence_interval(samples);
  return r;
}

MetricRow count_row(std::string name, std::size_t count, std::size_t n) {
  MetricRow r;
  r.name = std::move(name);
  r.value = static_cast<double>(count);
  r.n = n;
  return r;
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::string out = "metric,value,ci_lo,ci_hi,n\n";
  for (const auto& r : rows) {
    out += r.name + "," + cell(r.value) + ",";
    out += r.ci ? format_double(r.ci->lo) + "," + format_double(r.ci->hi) : std::string("undefined,undefined");
    out += "," + std::to_string(r.n) + "\n";
  }
  return out;
}

std::string EvalReport::patients_csv() const {
  std::string out = "patient_id,sofa_gold,sofa_forecast,saps_gold,saps_forecast,infected,chi,chi_hat\n";
  for (const auto& p : patients) {
    out += p.patient_id + "," + std::to_string(p.sofa_gold.total()) + "," + std::to_string(p.sofa_forecast.total()) +
           "," + std::to_string(p.saps_gold) + "," + std::to_string(p.saps_forecast) + "," +
           std::to_string(int(p.label.infected)) + "," + std::to_string(int(p.label.chi)) + "," +
           std::to_string(int(p.label.chi_hat)) + "\n";
  }
  return out;
}

EvalReport build_report(const std::vector<DenseGrid>& gold, const std::vector<DenseGrid>& pred,
                        std::vector<PatientOutcome> patients) {
  EvalReport report;
  report.rows.push_back(sample_row("mse", windowed_squared_errors(gold, pred, 1, kHorizon)));
  report.rows.push_back(sample_row("mse_1_8", windowed_squared_errors(gold, pred, 1, 8)));
  report.rows.push_back(sample_row("mse_9_24", windowed_squared_errors(gold, pred, 9, kHorizon)));

  std::vector<double> sofa, saps, match;
  std::vector<SepsisLabel> labels;
  for (const auto& p : patients) {
    sofa.push_back(sofa_distance(p.sofa_gold, p.sofa_forecast));
    const double d = static_cast<double>(p.saps_gold - p.saps_forecast);
    saps.push_back(d * d);
    labels.push_back(p.label);
    if (p.label.infected) match.push_back(p.label.chi == p.label.chi_hat ? 100.0 : 0.0);
  }
  report.rows.push_back(sample_row("mse_sofa", sofa));
  report.rows.push_back(sample_row("mse_saps", saps));
  report.sepsis = confusion(labels);
  MetricRow acc = sample_row("acc_sepsis", match);
  acc.value = report.sepsis.accuracy();
  report.rows.push_back(acc);
  const std::size_t cohort = report.sepsis.total();
  report.rows.push_back(count_row("tp", report.sepsis.tp, cohort));
  report.rows.push_back(count_row("fp", report.sepsis.fp, cohort));
  report.rows.push_back(count_row("fn", report.sepsis.fn, cohort));
  report.rows.push_back(count_row("tn", report.sepsis.tn, cohort));
  MetricRow f1;
  f1.name = "f1";
  f1.value = report.sepsis.f1();
  f1.n = cohort;
  report.rows.push_back(f1);
  report.patients = std::move(patients);
  return report;
}

}  // namespace causecast
