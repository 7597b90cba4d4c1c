#include "causecast/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "causecast/error.hpp"
#include "causecast/random.hpp"
#include "causecast/scores.hpp"

namespace causecast {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    fail(ErrorCategory::config, key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v, key);
  } catch (const Error&) {
    fail(ErrorCategory::config, key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string s = lower(v);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  fail(ErrorCategory::config, key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

std::string fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

using Setter = void (*)(ExperimentConfig&, const std::string& key, const std::string& value);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"data_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }},
      {"split_train",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.split_train = to_double(k, v); }},
      {"split_dev", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.split_dev = to_double(k, v); }},
      {"split_seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.split_seed = to_u64(k, v); }},
      {"encoder", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.model.encoder = parse_encoder(v); }},
      {"decoder", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.model.decoder = parse_decoder(v); }},
      {"curriculum",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.curriculum.kind = parse_curriculum(v); }},
      {"eps_start",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.curriculum.eps_start = to_double(k, v); }},
      {"eps_end",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.curriculum.eps_end = to_double(k, v); }},
      {"curriculum_length",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.curriculum.length = to_size(k, v); }},
      {"selection",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.curriculum.selection = parse_selection(v); }},
      {"bp_through_predictions",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.curriculum.bp_through_predictions = to_bool(k, v);
       }},
      {"embedding_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.embedding_size = to_size(k, v); }},
      {"hidden_size_encoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.hidden_size_encoder = to_size(k, v); }},
      {"hidden_size_dms_decoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.hidden_size_dms_decoder = to_size(k, v);
       }},
      {"hidden_size_ims_decoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.hidden_size_ims_decoder = lower(v) == "output" ? 0 : to_size(k, v);
         if (lower(v) != "output" && c.model.hidden_size_ims_decoder == 0)
           fail(ErrorCategory::config, k + ": expected 'output' or a positive width");
       }},
      {"ims_ffn_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.ims_ffn_size = to_size(k, v); }},
      {"encoder_layers",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.encoder_layers = to_size(k, v); }},
      {"dms_decoder_layers",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.dms_decoder_layers = to_size(k, v); }},
      {"ims_decoder_layers",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.ims_decoder_layers = to_size(k, v); }},
      {"attention_heads_encoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.attention_heads_encoder = to_size(k, v);
       }},
      {"attention_heads_dms_decoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.attention_heads_dms_decoder = to_size(k, v);
       }},
      {"attention_heads_ims_decoder",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.attention_heads_ims_decoder = to_size(k, v);
       }},
      {"regression_head",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.regression_head = to_bool(k, v); }},
      {"dropout", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.dropout = to_double(k, v); }},
      {"learning_rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = to_double(k, v); }},
      {"batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_size(k, v); }},
      {"epochs", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.epochs = to_size(k, v); }},
      {"patience", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.patience = to_size(k, v); }},
      {"grad_clip",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.grad_clip = to_double(k, v); }},
      {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.seed = to_u64(k, v); }},
      {"record_wall_time",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.record_wall_time = to_bool(k, v); }},
      {"checkpoint", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"ablation_drug", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.ablation_drug = v; }},
      {"alpha", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.alpha = to_double(k, v); }},
      {"grid_file", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.grid_file = v; }},
      {"metrics", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.metrics = to_list(v); }},
  };
  return table;
}

void anchor(fs::path& p, const fs::path& base) {
  if (!p.empty() && p.is_relative() && !base.empty()) p = base / p;
  if (!p.empty()) p = fs::weakly_canonical(p);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text, const fs::path& base_dir) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::string preset;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      fail(ErrorCategory::config, "line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) fail(ErrorCategory::config, "line " + std::to_string(no) + ": empty key");
    if (!seen.insert(key).second) fail(ErrorCategory::config, "line " + std::to_string(no) + ": duplicate key " + key);
    if (key == "table1_model") {
      preset = value;
    } else {
      if (!setters().count(key)) fail(ErrorCategory::config, "line " + std::to_string(no) + ": unknown key " + key);
      entries.emplace_back(key, value);
    }
  }
  ExperimentConfig c;
  if (!preset.empty()) apply_table1_model(preset, c);
  for (const auto& [key, value] : entries) setters().at(key)(c, key, value);
  anchor(c.data_dir, base_dir);
  anchor(c.checkpoint, base_dir);
  anchor(c.grid_file, base_dir);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  if (!fs::exists(file)) fail(ErrorCategory::io, "config file not found: " + file.string());
  return parse(read_text_file(file), fs::absolute(file).parent_path());
}

void ExperimentConfig::validate() const {
  if (!(split_train > 0.0 && split_dev > 0.0 && split_train + split_dev < 1.0))
    fail(ErrorCategory::config, "split fractions need train > 0, dev > 0 and train + dev < 1");
  const CurriculumKind kind = train.curriculum.kind;
  switch (model.decoder) {
    case DecoderKind::dms:
      if (kind != CurriculumKind::none)
        fail(ErrorCategory::config,
             "the dms decoder has no decoding history, so curriculum must be 'none' (got '" +
                 std::string(curriculum_name(kind)) + "')");
      break;
    case DecoderKind::ims:
      if (kind == CurriculumKind::none)
        fail(ErrorCategory::config, "the ims decoder needs a curriculum: teacher, student or scheduled");
      break;
    case DecoderKind::linear:
    case DecoderKind::dlinear:
      if (model.encoder != EncoderKind::dense)
        fail(ErrorCategory::config, std::string(decoder_name(model.decoder)) + " needs the dense encoder");
      if (kind != CurriculumKind::none)
        fail(ErrorCategory::config, std::string(decoder_name(model.decoder)) + " takes curriculum 'none'");
      break;
  }
  ModelConfig probe = model;
  probe.variables = std::max<std::size_t>(model.attention_heads_ims_decoder, 1);
  probe.statics = 0;
  probe.validate();
  train.curriculum.validate();
  if (!(train.learning_rate > 0.0)) fail(ErrorCategory::config, "learning_rate must be positive");
  if (train.batch_size == 0) fail(ErrorCategory::config, "batch_size must be positive");
  if (train.epochs == 0) fail(ErrorCategory::config, "epochs must be positive");
  if (!(train.grad_clip >= 0.0)) fail(ErrorCategory::config, "grad_clip must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCategory::config, "alpha must lie in (0, 1)");
  for (const auto& m : metrics)
    if (std::find(std::begin(kReportMetrics), std::end(kReportMetrics), m) == std::end(kReportMetrics))
      fail(ErrorCategory::config, "unknown metric '" + m + "'");
}

std::string ExperimentConfig::canonical() const {
  const Curriculum& cu = train.curriculum;
  std::ostringstream o;
  o << "data_dir = " << data_dir.generic_string() << "\n"
    << "split_train = " << format_double(split_train) << "\n"
    << "split_dev = " << format_double(split_dev) << "\n"
    << "split_seed = " << split_seed << "\n"
    << "encoder = " << encoder_name(model.encoder) << "\n"
    << "decoder = " << decoder_name(model.decoder) << "\n"
    << "curriculum = " << curriculum_name(cu.kind) << "\n"
    << "eps_start = " << format_double(cu.eps_start) << "\n"
    << "eps_end = " << format_double(cu.eps_end) << "\n"
    << "curriculum_length = " << cu.length << "\n"
    << "selection = " << selection_name(cu.selection) << "\n"
    << "bp_through_predictions = " << yes_no(cu.bp_through_predictions) << "\n"
    << "embedding_size = " << model.embedding_size << "\n"
    << "hidden_size_encoder = " << model.hidden_size_encoder << "\n"
    << "hidden_size_dms_decoder = " << model.hidden_size_dms_decoder << "\n"
    << "hidden_size_ims_decoder = "
    << (model.hidden_size_ims_decoder ? std::to_string(model.hidden_size_ims_decoder) : std::string("output")) << "\n"
    << "ims_ffn_size = " << model.ims_ffn_size << "\n"
    << "encoder_layers = " << model.encoder_layers << "\n"
    << "dms_decoder_layers = " << model.dms_decoder_layers << "\n"
    << "ims_decoder_layers = " << model.ims_decoder_layers << "\n"
    << "attention_heads_encoder = " << model.attention_heads_encoder << "\n"
    << "attention_heads_dms_decoder = " << model.attention_heads_dms_decoder << "\n"
    << "attention_heads_ims_decoder = " << model.attention_heads_ims_decoder << "\n"
    << "regression_head = " << yes_no(model.regression_head) << "\n"
    << "dropout = " << format_double(model.dropout) << "\n"
    << "learning_rate = " << format_double(train.learning_rate) << "\n"
    << "batch_size = " << train.batch_size << "\n"
    << "epochs = " << train.epochs << "\n"
    << "patience = " << train.patience << "\n"
    << "grad_clip = " << format_double(train.grad_clip) << "\n"
    << "seed = " << train.seed << "\n"
    << "record_wall_time = " << yes_no(train.record_wall_time) << "\n";
  return o.str();
}

std::string ExperimentConfig::hash() const { return fnv1a(canonical()); }

void apply_table1_model(std::string_view id, ExperimentConfig& c) {
  const std::string name = lower(trim(id));
  if (name == "informer" || name == "autoformer")
    fail(ErrorCategory::config, "table 1 model '" + std::string(id) + "' is unsupported (no implementation provided)");
  Curriculum& cu = c.train.curriculum;
  if (name == "linear" || name == "dlinear") {
    c.model.encoder = EncoderKind::dense;
    c.model.decoder = name == "linear" ? DecoderKind::linear : DecoderKind::dlinear;
    cu.kind = CurriculumKind::none;
    return;
  }
  std::size_t row = 0;
  const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), row);
  if (ec != std::errc() || ptr != name.data() + name.size() || row < 1 || row > 24)
    fail(ErrorCategory::config, "unknown table 1 model '" + std::string(id) + "'");
  c.model.encoder = row <= 12 ? EncoderKind::triplet : EncoderKind::dense;
  const std::size_t k = (row - 1) % 12;  // 0 = DMS, 1 = TF, 2..3 = SF, 4..11 = scheduled
  if (k == 0) {
    c.model.decoder = DecoderKind::dms;
    cu.kind = CurriculumKind::none;
    return;
  }
  c.model.decoder = DecoderKind::ims;
  cu.bp_through_predictions = true;
  if (k == 1) {
    cu.kind = CurriculumKind::teacher;
    return;
  }
  if (k <= 3) {
    cu.kind = CurriculumKind::student;
    cu.bp_through_predictions = k == 3;
    return;
  }
  // Pairs (no BP, BP) for SS-DI, SS-DD, SS-RI, SS-RD.
  const std::size_t variant = (k - 4) / 2;
  cu.kind = CurriculumKind::scheduled;
  cu.bp_through_predictions = (k - 4) % 2 == 1;
  cu.selection = variant < 2 ? Selection::deterministic : Selection::random;
  const bool increasing = variant % 2 == 0;
  cu.eps_start = increasing ? 0.25 : 1.0;
  cu.eps_end = increasing ? 1.0 : 0.25;
  cu.length = 200;
}

Splits split_patients(std::size_t patients, double train, double dev, std::uint64_t seed) {
  std::vector<std::size_t> order(patients);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_train = static_cast<std::size_t>(std::floor(train * static_cast<double>(patients)));
  const auto n_dev = static_cast<std::size_t>(std::floor(dev * static_cast<double>(patients)));
  if (n_train == 0 || n_dev == 0 || n_train + n_dev >= patients)
    fail(ErrorCategory::config, "split of " + std::to_string(patients) + " patients leaves an empty partition");
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  s.dev.assign(order.begin() + static_cast<long>(n_train), order.begin() + static_cast<long>(n_train + n_dev));
  s.test.assign(order.begin() + static_cast<long>(n_train + n_dev), order.end());
  for (auto* part : {&s.train, &s.dev, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<WindowPair> patient_windows(const SparseSeries& raw, const StandardizationStats& stats,
                                        std::size_t variables) {
  return sliding_windows(standardize(raw, stats), variables);
}

PreparedData prepare_data(const ExperimentConfig& config, const StandardizationStats* stats) {
  if (config.data_dir.empty()) fail(ErrorCategory::config, "data_dir is not set");
  PreparedData d;
  d.dataset = load_dataset(config.data_dir);
  d.splits = split_patients(d.dataset.patients.size(), config.split_train, config.split_dev, config.split_seed);
  if (stats) {
    d.stats = *stats;
  } else {
    std::vector<SparseSeries> train;
    for (std::size_t i : d.splits.train) train.push_back(d.dataset.patients[i]);
    d.stats = StandardizationStats::compute(train, d.dataset.catalog);
  }
  const std::size_t f = d.dataset.catalog.size();
  const auto cut = [&](const std::vector<std::size_t>& ids, std::vector<WindowPair>& out) {
    for (std::size_t i : ids) {
      auto w = patient_windows(d.dataset.patients[i], d.stats, f);
      for (auto& pair : w) {
        d.discarded += pair.observation_grid.discarded + pair.target.discarded;
        out.push_back(std::move(pair));
      }
    }
  };
  cut(d.splits.train, d.train);
  cut(d.splits.dev, d.dev);
  cut(d.splits.test, d.test);
  for (const auto& w : d.train) d.observations += w.observation.observations.size();
  for (const auto& w : d.dev) d.observations += w.observation.observations.size();
  for (const auto& w : d.test) d.observations += w.observation.observations.size();
  if (d.train.empty() || d.dev.empty())
    fail(ErrorCategory::empty_input, "no 48 h windows in the training or development split");
  return d;
}

void write_new_file(const fs::path& path, const std::string& contents) {
  if (fs::exists(path)) fail(ErrorCategory::io, "refusing to overwrite existing file " + path.string());
  write_file_atomically(path, contents);
}

namespace {

void require_absent(const std::vector<fs::path>& paths) {
  for (const auto& p : paths)
    if (fs::exists(p)) fail(ErrorCategory::io, "refusing to overwrite existing file " + p.string());
}

void ensure_dir(const fs::path& out) {
  if (out.empty()) fail(ErrorCategory::config, "output directory is not set");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) fail(ErrorCategory::io, "cannot create output directory " + out.string());
}

DenseGrid rows_of(const DenseGrid& g, std::size_t begin, std::size_t count) {
  DenseGrid out(count, g.cols);
  out.statics = g.statics;
  for (std::size_t h = 0; h < count && begin + h < g.rows; ++h)
    for (std::size_t f = 0; f < g.cols; ++f) {
      out.value(h, f) = g.value(begin + h, f);
      out.mask[h * g.cols + f] = g.mask[(begin + h) * g.cols + f];
    }
  return out;
}

}  // namespace

void run_synth(const GeneratorConfig& generator, std::uint64_t seed, const fs::path& out) {
  generator.validate();
  ensure_dir(out);
  require_absent({out / "observations.csv", out / "statics.csv", out / "catalog.json", out / "manifest.json"});
  const GeneratedCohort cohort = synth_generate(generator, seed);
  save_dataset(cohort.dataset, out);
  write_new_file(out / "manifest.json", cohort.manifest.dump(2) + "\n");
}

TrainOutcome run_train(const ExperimentConfig& config, const fs::path& out) {
  config.validate();
  ensure_dir(out);
  const std::string ckpt_name = "model_" + config.hash() + "_s" + std::to_string(config.train.seed) + ".ckpt";
  require_absent({out / ckpt_name, out / "training_log.csv", out / "run.json", out / "config.txt"});

  const PreparedData data = prepare_data(config);
  ModelConfig mc = config.model;
  mc.variables = data.dataset.catalog.size();
  mc.statics = data.dataset.catalog.static_count();
  mc.validate();
  ForecastModel model(mc, config.train.seed);

  TrainOutcome outcome;
  outcome.fit = fit(model, data.train, data.dev, config.train);
  outcome.checkpoint = out / ckpt_name;

  std::string log = std::string(kTrainingLogHeader) + "\n";
  for (const auto& r : outcome.fit.log) log += format_log_record(r, config.train.record_wall_time) + "\n";

  nlohmann::json meta;
  meta["version"] = std::string(kVersion);
  meta["experiment"] = config.canonical();
  meta["catalog"] = data.dataset.catalog.to_json();
  meta["stats"] = data.stats.to_json();
  meta["best_epoch"] = outcome.fit.best_epoch;
  meta["best_dev"] = outcome.fit.best_dev;

  nlohmann::json run;
  run["version"] = std::string(kVersion);
  run["checkpoint"] = ckpt_name;
  run["config_hash"] = config.hash();
  run["seed"] = config.train.seed;
  run["best_epoch"] = outcome.fit.best_epoch;
  run["best_dev_mse"] = outcome.fit.best_dev;
  run["epochs_run"] = outcome.fit.log.size();
  run["stop_reason"] = outcome.fit.stop_reason;
  run["optimizer_steps"] = outcome.fit.optimizer_steps;
  run["patients"] = {{"train", data.splits.train.size()},
                     {"dev", data.splits.dev.size()},
                     {"test", data.splits.test.size()}};
  run["windows"] = {{"train", data.train.size()}, {"dev", data.dev.size()}, {"test", data.test.size()}};
  run["observations"] = data.observations;
  run["discarded"] = data.discarded;
  const double total = static_cast<double>(data.observations + data.discarded);
  run["discard_fraction"] = total > 0.0 ? static_cast<double>(data.discarded) / total : 0.0;

  save_checkpoint(outcome.checkpoint, model, meta);
  write_new_file(out / "training_log.csv", log);
  write_new_file(out / "config.txt", config.canonical());
  write_new_file(out / "run.json", run.dump(2) + "\n");
  return outcome;
}

TrainedRun load_run(const ExperimentConfig& config, const fs::path& out) {
  fs::path ckpt = config.checkpoint;
  if (ckpt.empty()) {
    const fs::path run_file = out / "run.json";
    if (!fs::exists(run_file))
      fail(ErrorCategory::config, "no checkpoint given and no run.json in " + out.string());
    nlohmann::json run;
    try {
      run = nlohmann::json::parse(read_text_file(run_file));
      ckpt = out / run.at("checkpoint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCategory::io, "malformed run.json: " + std::string(e.what()));
    }
  }
  const LoadedCheckpoint loaded = read_checkpoint(ckpt);
  try {
    ExperimentConfig snapshot = ExperimentConfig::parse(loaded.metadata.at("experiment").get<std::string>());
    VariableCatalog catalog = VariableCatalog::from_json(loaded.metadata.at("catalog"));
    StandardizationStats stats = StandardizationStats::from_json(loaded.metadata.at("stats"));
    if (!config.data_dir.empty()) snapshot.data_dir = config.data_dir;
    snapshot.checkpoint = ckpt;
    snapshot.ablation_drug = config.ablation_drug;
    snapshot.alpha = config.alpha;
    snapshot.grid_file = config.grid_file;
    snapshot.metrics = config.metrics;
    return {std::move(snapshot), load_model(loaded), std::move(catalog), std::move(stats)};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, "checkpoint metadata incomplete: " + std::string(e.what()));
  }
}

std::vector<DenseGrid> forecast_windows(const ForecastModel& model, const std::vector<WindowPair>& windows,
                                        const StandardizationStats* raw, std::size_t batch_size) {
  const std::size_t f = model.config().variables;
  std::vector<DenseGrid> out;
  out.reserve(windows.size());
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    std::vector<const WindowPair*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&windows[i]);
    const Batch batch = make_batch(ptrs, f, model.config().statics);
    const Tensor y = model.forecast(batch, {});
    const auto v = y.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      DenseGrid g(kHorizon, f);
      std::fill(g.mask.begin(), g.mask.end(), 1);
      std::copy(v.begin() + static_cast<long>(b * kHorizon * f), v.begin() + static_cast<long>((b + 1) * kHorizon * f),
                g.values.begin());
      out.push_back(raw ? destandardize(g, *raw) : std::move(g));
    }
  }
  return out;
}

std::vector<PatientOutcome> admission_outcomes(const ForecastModel& model, const std::vector<SparseSeries>& patients,
                                               const VariableCatalog& catalog, const StandardizationStats& stats) {
  const std::size_t f = catalog.size();
  std::vector<WindowPair> windows;
  std::vector<const SparseSeries*> raw;
  for (const auto& p : patients) {
    if (window_count(p.span()) == 0) continue;
    windows.push_back(make_window(standardize(p, stats), f, 0));
    raw.push_back(&p);
  }
  const auto forecasts = forecast_windows(model, windows, &stats);
  std::vector<PatientOutcome> out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const DenseGrid first = bin_range(*raw[i], f, 0.0, kObservationHours);
    const DenseGrid second = bin_range(*raw[i], f, static_cast<double>(kObservationHours), kHorizon);
    out.push_back(patient_outcome(raw[i]->patient_id, first, second, forecasts[i], catalog));
  }
  return out;
}

EvalReport evaluate_split(const ForecastModel& model, const std::vector<WindowPair>& windows,
                          const std::vector<SparseSeries>& patients, const VariableCatalog& catalog,
                          const StandardizationStats& stats) {
  if (windows.empty()) fail(ErrorCategory::empty_input, "no windows to evaluate");
  std::vector<DenseGrid> gold;
  gold.reserve(windows.size());
  for (const auto& w : windows) gold.push_back(w.target);
  const auto pred = forecast_windows(model, windows);
  return build_report(gold, pred, admission_outcomes(model, patients, catalog, stats));
}

namespace {

struct TestSet {
  std::vector<WindowPair> windows;
  std::vector<SparseSeries> patients;
};

TestSet test_set(const TrainedRun& run) {
  const PreparedData data = prepare_data(run.config, &run.stats);
  if (data.dataset.catalog.to_json() != run.catalog.to_json())
    fail(ErrorCategory::catalog, "dataset catalog differs from the one the model was trained on");
  TestSet t;
  t.windows = data.test;
  for (std::size_t i : data.splits.test) t.patients.push_back(data.dataset.patients[i]);
  return t;
}

}  // namespace

void run_forecast(const ExperimentConfig& config, const fs::path& out) {
  ensure_dir(out);
  require_absent({out / "forecasts.csv"});
  const TrainedRun run = load_run(config, out);
  const TestSet t = test_set(run);
  const auto grids = forecast_windows(run.model, t.windows, &run.stats);
  std::string csv = "patient_id,start_hour,hour,variable,value\n";
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const WindowPair& w = t.windows[i];
    for (std::size_t h = 0; h < kHorizon; ++h)
      for (std::size_t f = 0; f < grids[i].cols; ++f)
        csv += w.patient_id + "," + std::to_string(w.start_hour) + "," +
               std::to_string(w.start_hour + kObservationHours + h) + "," + run.catalog.variable(f).name + "," +
               format_double(grids[i].value(h, f)) + "\n";
  }
  write_new_file(out / "forecasts.csv", csv);
}

void run_score(const ExperimentConfig& config, const fs::path& out) {
  if (config.grid_file.empty()) fail(ErrorCategory::config, "grid_file is not set");
  if (config.data_dir.empty()) fail(ErrorCategory::config, "data_dir (holding catalog.json) is not set");
  ensure_dir(out);
  require_absent({out / "scores.csv"});
  const VariableCatalog catalog = load_catalog(config.data_dir / "catalog.json");
  std::ifstream in(config.grid_file);
  if (!in) fail(ErrorCategory::io, "cannot open grid file " + config.grid_file.string());
  const auto grids = read_grid_file(in, catalog, kObservationHours + kHorizon);
  std::string csv = "patient_id,sofa_total,cns,cardio,resp,coag,liver,renal,saps_total,infected,chi\n";
  for (const auto& [id, grid] : grids) {
    const DenseGrid first = rows_of(grid, 0, kObservationHours);
    const DenseGrid second = rows_of(grid, kObservationHours, kHorizon);
    const SofaSubscores s = sofa_score(second, catalog);
    const int saps = saps_score(second, catalog).total();
    const bool infected = infection_suspected(first, catalog);
    const bool chi = sofa_increase(sofa_score(first, catalog).total(), s.total());
    csv += id + "," + std::to_string(s.total()) + "," + std::to_string(s.cns) + "," + std::to_string(s.cardio) + "," +
           std::to_string(s.resp) + "," + std::to_string(s.coag) + "," + std::to_string(s.liver) + "," +
           std::to_string(s.renal) + "," + std::to_string(saps) + "," + std::to_string(int(infected)) + "," +
           std::to_string(int(infected && chi)) + "\n";
  }
  write_new_file(out / "scores.csv", csv);
}

EvalReport run_evaluate(const ExperimentConfig& config, const fs::path& out) {
  ensure_dir(out);
  require_absent({out / "eval_report.csv", out / "eval_patients.csv"});
  const TrainedRun run = load_run(config, out);
  const TestSet t = test_set(run);
  EvalReport report = evaluate_split(run.model, t.windows, t.patients, run.catalog, run.stats);
  if (!run.config.metrics.empty()) report.select(run.config.metrics);
  write_new_file(out / "eval_report.csv", report.to_csv());
  write_new_file(out / "eval_patients.csv", report.patients_csv());
  return report;
}

AblationResult run_ablate(const ExperimentConfig& config, const fs::path& out) {
  if (config.ablation_drug.empty()) fail(ErrorCategory::config, "ablation_drug is not set");
  ensure_dir(out);
  require_absent({out / "ablation.csv", out / "ablation.json"});
  const TrainedRun run = load_run(config, out);
  const auto drug = run.catalog.index_of(config.ablation_drug);
  if (!drug) fail(ErrorCategory::config, "drug '" + config.ablation_drug + "' not in catalog");
  const TestSet t = test_set(run);

  std::vector<double> doses;
  std::vector<WindowPair> admissions;
  for (const auto& p : t.patients) {
    for (const auto& o : p.observations)
      if (o.variable == *drug) doses.push_back(o.value);
    if (window_count(p.span()) > 0) admissions.push_back(make_window(standardize(p, run.stats), run.catalog.size(), 0));
  }
  const auto [q1, q3] = positive_quartiles(doses);
  const AblationResult r =
      drug_ablation(run.model, admissions, run.catalog, run.stats, config.ablation_drug, q1, q3, run.config.alpha);

  std::string csv = std::string(kAblationHeader) + "\n";
  for (const auto& row : r.rows)
    csv += row.variable + "," + format_double(row.mean_q1) + "," + format_double(row.mean_q3) + "," +
           format_double(row.diff) + "," + format_double(row.t_p) + "," + format_double(row.mw_p) + "," +
           (row.significant ? "true" : "false") + "," + format_double(row.cohens_d) + "\n";
  nlohmann::json summary{{"drug", r.drug},
                         {"q1", r.q1},
                         {"q3", r.q3},
                         {"alpha", r.alpha},
                         {"threshold", r.threshold},
                         {"inputs", r.inputs},
                         {"significant", r.significant_count()}};
  write_new_file(out / "ablation.csv", csv);
  write_new_file(out / "ablation.json", summary.dump(2) + "\n");
  return r;
}

}  // namespace causecast
