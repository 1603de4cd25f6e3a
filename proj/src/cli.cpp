#include "ded/cli.hpp"

#include "ded/config.hpp"
#include "ded/data_pipeline.hpp"
#include "ded/dataset_io.hpp"
#include "ded/errors.hpp"
#include "ded/evaluation.hpp"
#include "ded/report.hpp"
#include "ded/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>

namespace ded {

namespace {

struct Options {
  // ingest
  std::string input, unit = "feet", id;
  int stride = 5;
  double radius = 50.0;
  // synth
  std::string kind = "constant_velocity";
  int n = 100;
  // shared
  std::uint64_t seed = 0;
  std::string data, out, config_file, ckpt, report;
  std::vector<std::string> sets;
  // train / eval
  std::string variant;
  std::string mode = "calibrated";
  int epochs = -1;
  int seeds = 3;
  std::size_t scene = 0;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& ext) {
  auto p = path;
  p.replace_extension(ext);
  return p;
}

Config load_config(const Options& o) {
  Config c;
  if (!o.config_file.empty()) c.merge_file(o.config_file);
  if (const char* env = std::getenv("DED_SEED")) c.set("train.seed", env);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!o.variant.empty()) c.set("train.variant", o.variant);
  if (o.epochs >= 0) c.set("train.epochs", std::to_string(o.epochs));
  return c;
}

void cmd_ingest(const Options& o, std::ostream& err) {
  const auto unit = data::parse_unit(o.unit);
  const auto ingest = data::ingest_csv(std::filesystem::path(o.input), unit);
  data::WindowOptions wopt;
  wopt.stride = o.stride;
  const auto windows = data::downsample_and_window(ingest.tracks, wopt);
  Dataset d;
  d.id = o.id.empty() ? "ngsim" : o.id;
  d.scenes = data::assemble_scenes(windows.windows, o.radius);
  if (d.scenes.empty()) throw DataError("no complete windows in " + o.input);
  data::save_dataset(o.out, d);
  err << "ingest: " << ingest.tracks.size() << " tracks (" << ingest.rejected_tracks << " rejected, "
      << windows.skipped_tracks << " too short), " << windows.windows.size() << " windows, "
      << d.scenes.size() << " scenes -> " << o.out << '\n';
}

void cmd_synth(const Options& o, std::ostream& err) {
  const auto kind = data::parse_scenario_kind(o.kind);
  Dataset d;
  d.id = o.id.empty() ? "synthetic:" + data::to_string(kind) : o.id;
  d.scenes = data::synth_scenarios(kind, o.n, o.seed);
  data::save_dataset(o.out, d);
  err << "synth: " << d.scenes.size() << " scenes, " << d.window_count() << " windows -> " << o.out << '\n';
}

void cmd_split(const Options& o, std::ostream& err) {
  Dataset d = data::load_dataset(o.data);
  data::tag_splits(d, o.seed);
  const std::string out = o.out.empty() ? o.data : o.out;
  data::save_dataset(out, d);
  const auto s = data::collect_splits(d);
  err << "split: train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size()
      << " scenes -> " << out << '\n';
}

void cmd_train(const Options& o, std::ostream& err) {
  const Config cfg = load_config(o);
  const Dataset d = data::load_dataset(o.data);
  if (d.hist_len != cfg.get_int("data.hist") || d.fut_len != cfg.get_int("data.fut")) {
    throw DataError("dataset window lengths do not match data.hist/data.fut");
  }
  const auto split = data::collect_splits(d);
  const auto result = train(split, cfg, d.id, &err);
  save_checkpoint(o.out, result.checkpoint);
  write_text(sibling(o.out, ".log.tsv"), format_log(result.log));
  err << "train: variant " << cfg.get("train.variant") << ", " << result.log.size() << " epochs -> " << o.out
      << '\n';
  if (result.diverged) throw NumericError("training diverged; saved parameters from the last finite epoch");
}

void cmd_eval(const Options& o, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  const Dataset d = data::load_dataset(o.data);
  const auto split = data::collect_splits(d);
  if (split.test.empty()) throw DataError("test split is empty");
  const EvalMode mode = parse_eval_mode(o.mode);
  const Config cfg = checkpoint_config(ckpt);
  ReportFile file;
  file.reports.push_back(evaluate_checkpoint(ckpt, d, split.test, mode, worker_threads()));
  KalmanOptions kopt;
  kopt.accel_sigma = cfg.get_double("eval.kalman_accel_sigma");
  kopt.obs_sigma = cfg.get_double("eval.kalman_obs_sigma");
  kopt.dt = d.dt;
  file.reports.push_back(evaluate_baseline(split.test, kopt, d.id));
  save_report(o.out, file);
  const std::string table = markdown_table(file.reports);
  write_text(sibling(o.out, ".md"), table);
  err << table;
}

void cmd_ablate(const Options& o, std::ostream& err) {
  const Config cfg = load_config(o);
  const Dataset d = data::load_dataset(o.data);
  const auto split = data::collect_splits(d);
  ReportFile file;
  file.ablation = run_ablation(split, cfg, d.id, o.seeds, &err, worker_threads());
  KalmanOptions kopt;
  kopt.accel_sigma = cfg.get_double("eval.kalman_accel_sigma");
  kopt.obs_sigma = cfg.get_double("eval.kalman_obs_sigma");
  kopt.dt = d.dt;
  file.reports.push_back(evaluate_baseline(split.test, kopt, d.id));
  const std::string out = o.out.empty() ? "ablation.json" : o.out;
  save_report(out, file);
  const std::string table = ablation_table(file.ablation);
  write_text(sibling(out, ".md"), table);
  err << table;
}

void cmd_plot(const Options& o, std::ostream& err) {
  const ReportFile file = load_report(o.report);
  std::filesystem::create_directories(o.out);
  const std::filesystem::path dir(o.out);
  int written = 0;
  if (!file.reports.empty()) {
    plot_rmse(file.reports, dir / "rmse_vs_horizon.png");
    ++written;
  }
  if (!file.ablation.empty()) {
    plot_ablation(file.ablation, dir / "ablation.png");
    ++written;
  }
  if (!o.ckpt.empty() != !o.data.empty()) throw UsageError("--ckpt and --data go together");
  if (!o.ckpt.empty()) {
    const Checkpoint ckpt = load_checkpoint(o.ckpt);
    const Dataset d = data::load_dataset(o.data);
    const auto split = data::collect_splits(d);
    if (o.scene >= split.test.size()) throw UsageError("--scene out of range");
    const auto model = restore_model(ckpt);
    const TrainConfig tc = TrainConfig::from(checkpoint_config(ckpt));
    const Scene& scene = split.test[o.scene];
    const auto preds = model->predict(scene, tc.variant, tc.seed, true);
    plot_endpoint_distribution(preds.front(), scene.windows.front(), dir / "endpoint_distribution.png");
    plot_trajectories(scene, preds, dir / "trajectories.png");
    written += 2;
  }
  err << "plot: " << written << " figures -> " << o.out << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Endpoint-distribution trajectory forecasting toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Convert a vehicle-trajectory CSV into a dataset file");
  ingest->add_option("--input", o.input, "CSV with Vehicle_ID, Frame_ID, Local_X, Local_Y columns")->required();
  ingest->add_option("--unit", o.unit, "Length unit of the CSV: feet or meters")->capture_default_str();
  ingest->add_option("--out", o.out, "Output dataset file")->required();
  ingest->add_option("--id", o.id, "Dataset id (default ngsim)");
  ingest->add_option("--stride", o.stride, "Window stride in downsampled frames")->capture_default_str();
  ingest->add_option("--radius", o.radius, "Scene grouping radius in meters")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario dataset");
  synth->add_option("--kind", o.kind, "constant_velocity, lane_change or follow_brake")->capture_default_str();
  synth->add_option("--n", o.n, "Number of scenes")->capture_default_str();
  synth->add_option("--seed", o.seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", o.out, "Output dataset file")->required();
  synth->add_option("--id", o.id, "Dataset id (default synthetic:<kind>)");

  auto* split = app.add_subcommand("split", "Tag scenes as train/val/test (70/20/10)");
  split->add_option("--in,--data", o.data, "Dataset file")->required();
  split->add_option("--seed", o.seed, "Shuffle seed")->capture_default_str();
  split->add_option("--out", o.out, "Output dataset file (default: overwrite input)");

  auto* trn = app.add_subcommand("train", "Train a model");
  trn->add_option("--data", o.data, "Split dataset file")->required();
  trn->add_option("--config", o.config_file, "Config file of `section.key = value` lines");
  trn->add_option("--variant", o.variant, "full, no_ed, no_ep or none");
  trn->add_option("--epochs", o.epochs, "Override train.epochs");
  trn->add_option("--set", o.sets, "Override a config key: key=value (repeatable)");
  trn->add_option("--out", o.out, "Output checkpoint")->required();

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on the test split");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint file")->required();
  ev->add_option("--data", o.data, "Split dataset file")->required();
  ev->add_option("--mode", o.mode, "calibrated or best_of_C")->capture_default_str();
  ev->add_option("--out", o.out, "Output report JSON")->required();

  auto* plot = app.add_subcommand("plot", "Render figures from a report");
  plot->add_option("--report", o.report, "Report JSON")->required();
  plot->add_option("--out", o.out, "Output directory")->required();
  plot->add_option("--ckpt", o.ckpt, "Checkpoint for endpoint and trajectory figures");
  plot->add_option("--data", o.data, "Dataset for endpoint and trajectory figures");
  plot->add_option("--scene", o.scene, "Test-scene index for those figures")->capture_default_str();

  auto* abl = app.add_subcommand("ablate", "Train and score all four variants");
  abl->add_option("--data", o.data, "Split dataset file")->required();
  abl->add_option("--config", o.config_file, "Config file");
  abl->add_option("--seeds", o.seeds, "Seeds per variant")->capture_default_str();
  abl->add_option("--epochs", o.epochs, "Override train.epochs");
  abl->add_option("--set", o.sets, "Override a config key: key=value (repeatable)");
  abl->add_option("--out", o.out, "Output report JSON (default ablation.json)");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, err, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) cmd_ingest(o, err);
    else if (*synth) cmd_synth(o, err);
    else if (*split) cmd_split(o, err);
    else if (*trn) cmd_train(o, err);
    else if (*ev) cmd_eval(o, err);
    else if (*plot) cmd_plot(o, err);
    else if (*abl) cmd_ablate(o, err);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace ded
