// conftrack: command-line driver for the tracking pipeline.
//
//   conftrack [--config F] [--seed N] [--out DIR] [--verbose] <subcommand>
//
// Stand-alone subcommands read and write artifacts in --out (default from
// the config); `run` executes every stage through a staging directory.
// Exit status: 0 success, 2 config, 3 data, 4 numeric, 5 I/O.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "conftrack/config.hpp"
#include "conftrack/error.hpp"
#include "conftrack/pipeline.hpp"
#include "conftrack/serialize.hpp"

namespace {

using namespace conftrack;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
  std::string input_dir;
  std::string split;
  std::optional<double> pt_min;
  std::optional<std::int64_t> plot_event;
  bool plot_candidates = false;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) c.apply_seed(*o.seed);
  if (!o.out.empty()) c.paths.out = o.out;
  if (!o.input_dir.empty()) c.paths.trackml_dir = o.input_dir;
  if (o.pt_min) c.selection.pt_min = *o.pt_min;
  c.validate();
  return c;
}

int run_command(const std::string& cmd, const Options& o) {
  const RunConfig c = resolve_config(o);
  RunLog log;
  log.verbose = o.verbose;
  const fs::path dir = c.paths.out;
  if (cmd == "run") {
    run_pipeline(c, log);
    std::cout << "artifacts written to " << dir.string() << '\n';
    return 0;
  }
  detail::make_dirs(dir);
  if (cmd == "generate") {
    stage_generate(c, dir, log);
  } else if (cmd == "ingest") {
    stage_ingest(c, dir, log, o.split.empty() ? std::nullopt : std::optional<std::string>(o.split));
  } else if (cmd == "build-graphs") {
    stage_build_graphs(c, dir, log);
  } else if (cmd == "train") {
    stage_train(c, dir, log);
  } else if (cmd == "infer") {
    stage_infer(c, dir, log);
  } else if (cmd == "evaluate") {
    const Metrics m = stage_evaluate(c, dir, log);
    json summary = metrics_to_json(m);
    summary.erase("config");
    summary.erase("seed");
    std::cout << summary.dump(2) << '\n';
  } else if (cmd == "plot") {
    for (const auto& p : stage_plot(c, dir, log, o.plot_event, o.plot_candidates)) std::cout << p.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal GNN particle tracking pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON run configuration");
  app.add_option("--seed", o.seed, "Seed for generation, initialization and shuffling");
  app.add_option("--out", o.out, "Artifact directory");
  app.add_flag("--verbose,-v", o.verbose, "Log stage progress to stderr");

  app.add_subcommand("generate", "Generate synthetic train/test events");
  auto* ingest = app.add_subcommand("ingest", "Read TrackML CSV events");
  ingest->add_option("--input-dir", o.input_dir, "Directory with <prefix>-{hits,truth,particles}.csv");
  ingest->add_option("--split", o.split, "Put every event in this split (train or test)")
      ->check(CLI::IsMember({"train", "test"}));
  ingest->add_option("--pt-min", o.pt_min, "Drop particle hits below this p_T in GeV (default 2)");
  app.add_subcommand("build-graphs", "Build hit graphs from events");
  app.add_subcommand("train", "Train the network on the training graphs");
  app.add_subcommand("infer", "Predict, merge and assign on the test graphs");
  app.add_subcommand("evaluate", "Score predictions against truth");
  auto* plot = app.add_subcommand("plot", "Render event displays as SVG");
  plot->add_option("--event", o.plot_event, "Only this event id");
  plot->add_flag("--candidates", o.plot_candidates, "Draw merged candidates instead of per-hit ellipses");
  auto* run = app.add_subcommand("run", "Run every stage end to end");
  run->add_option("--input-dir", o.input_dir, "Ingest TrackML events from here instead of generating");
  run->add_option("--pt-min", o.pt_min, "Drop particle hits below this p_T in GeV (default 2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run_command(cmd, o);
  } catch (const Error& e) {
    std::cerr << "conftrack " << cmd << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "conftrack " << cmd << ": " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "conftrack " << cmd << ": " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kIo);
  } catch (const std::exception& e) {
    std::cerr << "conftrack " << cmd << ": " << e.what() << '\n';
    return 1;
  }
}
