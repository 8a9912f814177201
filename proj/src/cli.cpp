#include "contextprobe/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

namespace contextprobe {

namespace {

void print_error(const std::string& command, const std::string& message) {
  nlohmann::json j;
  j["error"] = message;
  j["command"] = command;
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"contextprobe: context-dependence auditing on synthetic scenes"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, checkpoint_path, report_path;
  std::string out_dir = ".";
  std::string format = "csv";
  std::optional<double> alpha;
  bool dump_edits = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory for checkpoint + run record")
      ->required();

  CLI::App* audit = app.add_subcommand("audit", "robustness audit of a checkpoint");
  audit->add_option("--config", config_path, "experiment config JSON")->required();
  audit->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  audit->add_option("--dataset", dataset_dir, "dataset directory")->required();
  audit->add_option("--alpha", alpha, "IoU change threshold override");
  audit->add_option("--out", out_dir, "output directory for report.json")->required();
  audit->add_flag("--dump-edits", dump_edits, "persist edited rasters + provenance");

  CLI::App* report = app.add_subcommand("report", "export a report");
  report->add_option("--report", report_path, "report.json from an audit")->required();
  report->add_option("--format", format, "csv | json | plot");
  report->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    print_error("parse", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (gen->parsed()) {
      cmd_gen(config_from_file(config_path), out_dir);
    } else if (train->parsed()) {
      cmd_train(config_from_file(config_path), dataset_dir, out_dir);
    } else if (audit->parsed()) {
      cmd_audit(config_from_file(config_path), checkpoint_path, dataset_dir,
                alpha, out_dir, dump_edits);
    } else if (report->parsed()) {
      cmd_report(report_path, format, out_dir);
    }
  } catch (const std::exception& e) {
    print_error(command, e.what());
    return 1;
  }
  return 0;
}

}  // namespace contextprobe
