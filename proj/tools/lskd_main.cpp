// Experiment runner: generate synthetic relation datasets, train a classifier
// with any of the five target-construction strategies, sweep hyperparameter
// axes over seeds, and emit evaluation reports.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 runtime failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lskd/config.hpp"
#include "lskd/experiment.hpp"
#include "lskd/util.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "key=value config file");
  sub->add_option("--seed", args.seed, "seed applied to both gen.seed and train.seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  sub->add_option("--out", args.out, "output directory");
  sub->add_option("--override", args.overrides,
                  "config override as key=value, may be given repeatedly");
}

lskd::Config resolve_config(const CommonArgs& args) {
  lskd::Config cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const std::string& kv : args.overrides) cfg.set_override(kv);
  if (args.seed_set) {
    cfg.set("gen.seed", std::to_string(args.seed));
    cfg.set("train.seed", std::to_string(args.seed));
  }
  if (!args.out.empty()) cfg.set("out", args.out);
  return cfg;
}

int cmd_generate(const CommonArgs& args) {
  const lskd::GenerateOutcome outcome = lskd::run_generate(resolve_config(args));
  std::cout << outcome.summary;
  std::cout << "fingerprint: " << lskd::hex64(outcome.fingerprint) << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const lskd::TrainOutcome outcome = lskd::run_train(resolve_config(args));
  std::cout << "checkpoint: " << (outcome.out_dir / "checkpoint.json").string() << "\n";
  std::cout << "epochs: " << outcome.result.state.history.size() << "\n";
  const lskd::EvalReport& rep = outcome.test_report;
  std::cout << "test";
  for (const auto& [k, v] : rep.r_at)
    std::cout << " R@" << k << "=" << lskd::format_percent(v);
  for (const auto& [k, v] : rep.mr_at)
    std::cout << " mR@" << k << "=" << lskd::format_percent(v);
  if (rep.mean_metric_value >= 0.0)
    std::cout << " Mean=" << lskd::format_percent(rep.mean_metric_value);
  std::cout << " calibration_kl=" << rep.calibration_kl << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  const lskd::SweepOutcome outcome = lskd::run_sweep(resolve_config(args));
  std::cout << lskd::sweep_markdown(outcome.cells);
  std::cout << "sweep table: " << (outcome.out_dir / "sweep.csv").string() << "\n";
  if (outcome.failures > 0) {
    for (const std::string& err : outcome.errors) std::cerr << "failed cell: " << err << "\n";
    std::cerr << outcome.failures << " sweep cell(s) failed\n";
    return 3;
  }
  return 0;
}

int cmd_report(const CommonArgs& args) {
  const lskd::ReportOutcome outcome = lskd::run_report(resolve_config(args));
  std::cout << outcome.markdown;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-fusion relation classification laboratory"};
  app.require_subcommand(1);

  CommonArgs generate_args, train_args, sweep_args, report_args;
  CLI::App* generate = app.add_subcommand("generate", "sample a synthetic relation dataset");
  add_common_options(generate, generate_args);
  CLI::App* train = app.add_subcommand("train", "train one model and evaluate the test split");
  add_common_options(train, train_args);
  CLI::App* sweep = app.add_subcommand("sweep", "run axis x seed grids and aggregate");
  add_common_options(sweep, sweep_args);
  CLI::App* report = app.add_subcommand("report", "summarize eval files and sweep trends");
  add_common_options(report, report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(generate_args);
    if (train->parsed()) return cmd_train(train_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (report->parsed()) return cmd_report(report_args);
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
