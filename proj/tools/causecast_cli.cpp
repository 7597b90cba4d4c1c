#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "causecast/error.hpp"
#include "causecast/experiment.hpp"

namespace fs = std::filesystem;
using namespace causecast;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Options& o, bool config_required) {
  auto* c = sub->add_option("--config", o.config, "configuration file");
  if (config_required) c->required();
  sub->add_option("--seed", o.seed, "random seed (overrides the config)");
  sub->add_option("--out", o.out, "output directory")->required();
}

ExperimentConfig experiment(const Options& o) {
  ExperimentConfig c;
  if (!o.config.empty()) c = ExperimentConfig::load(o.config);
  if (o.seed) c.train.seed = *o.seed;
  return c;
}

GeneratorConfig generator(const Options& o) {
  if (o.config.empty()) return GeneratorConfig::clinical();
  try {
    return GeneratorConfig::from_json(nlohmann::json::parse(read_text_file(o.config)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::config, "generator config is not valid JSON: " + std::string(e.what()));
  }
}

void print_report(const EvalReport& r) {
  for (const auto& row : r.rows)
    std::cout << row.name << " " << (row.value ? format_double(*row.value) : std::string("undefined")) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"causecast: forecasting clinical causes of sepsis"};
  app.require_subcommand(1);
  Options o;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  CLI::App* forecast = app.add_subcommand("forecast", "forecast every test window");
  CLI::App* score = app.add_subcommand("score", "score SOFA/SAPS-II on a 48 h grid file");
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  CLI::App* ablate = app.add_subcommand("ablate", "drug ablation on the test split");
  add_common(synth, o, false);
  add_common(train, o, true);
  add_common(forecast, o, false);
  add_common(score, o, true);
  add_common(evaluate, o, false);
  add_common(ablate, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCategory::config, e.what());
  }

  const fs::path out = o.out;
  if (synth->parsed()) {
    run_synth(generator(o), o.seed.value_or(0), out);
    std::cout << "wrote dataset to " << out.string() << "\n";
  } else if (train->parsed()) {
    const TrainOutcome r = run_train(experiment(o), out);
    std::cout << "checkpoint " << r.checkpoint.string() << "\n"
              << "best_epoch " << r.fit.best_epoch << " dev_mse " << format_double(r.fit.best_dev) << " ("
              << r.fit.stop_reason << ")\n";
  } else if (forecast->parsed()) {
    run_forecast(experiment(o), out);
    std::cout << "wrote " << (out / "forecasts.csv").string() << "\n";
  } else if (score->parsed()) {
    run_score(experiment(o), out);
    std::cout << "wrote " << (out / "scores.csv").string() << "\n";
  } else if (evaluate->parsed()) {
    print_report(run_evaluate(experiment(o), out));
  } else if (ablate->parsed()) {
    const AblationResult r = run_ablate(experiment(o), out);
    std::cout << r.drug << ": " << r.significant_count() << " of " << r.rows.size()
              << " variables significant at threshold " << format_double(r.threshold) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return exit_code(ErrorCategory::io);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 70;
  }
}
