#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <thread>

#include "captrack/datagen.hpp"
#include "captrack/errors.hpp"
#include "captrack/live.hpp"
#include "captrack/regressor.hpp"
#include "captrack/rng.hpp"
#include "captrack/scenarios.hpp"

using namespace captrack;

namespace {

constexpr std::uint32_t kPaperIterations = 500;
constexpr int kPaperTrials = 8;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<LimbKind> limb_kinds(const std::string& limb) {
  if (limb == "arm") return {LimbKind::arm};
  if (limb == "leg") return {LimbKind::leg};
  return {LimbKind::arm, LimbKind::leg};
}

int cmd_collect(const std::string& limb, const std::string& mode_name, std::uint32_t iters, std::uint64_t seed,
                bool paper_scale, const std::string& out, const std::string& csv) {
  if (paper_scale) iters = kPaperIterations;
  const MaterialMode mode = MaterialMode::defaults(material_from_string(mode_name));
  Dataset data;
  data.metadata = {seed, iters, kSampleRateHz};
  std::uint64_t stream = 0;
  for (LimbKind kind : limb_kinds(limb)) {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset part = collect_limb(kind, mode, iters, derive_seed(seed, stream++));
    std::fprintf(stderr, "collected %zu pairs on the %s in %.1fs\n", part.size(),
                 kind == LimbKind::arm ? "arm" : "leg",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    data.append(part);
  }
  save_dataset(data, out);
  if (!csv.empty()) export_dataset_csv(data, csv);
  std::printf("%zu pairs -> %s\n", data.size(), out.c_str());
  return 0;
}

Dataset load_datasets(const std::vector<std::string>& paths) {
  Dataset data = load_dataset(paths.front());
  for (std::size_t i = 1; i < paths.size(); ++i) data.append(load_dataset(paths[i]));
  return data;
}

int cmd_train(const std::vector<std::string>& data_paths, const std::string& out, const TrainConfig& cfg,
              const std::string& init, const std::string& history) {
  const Dataset data = load_datasets(data_paths);
  std::fprintf(stderr, "training on %zu pairs (%zu validation)\n", training_rows(data).size(),
               validation_rows(data).size());
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = [&](const EpochStats& s) {
    std::fprintf(stderr, "epoch %3d  train %.6f  val %.6f  %.0fs\n", s.epoch, s.train_loss, s.val_loss,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  const TrainResult result = init.empty() ? train(data, cfg, report) : train_from(load_model(init), data, cfg, report);
  save_model(result.params, out);
  if (!history.empty()) write_history_csv(result.history, history);
  const auto e = rmse(result.params, data, validation_rows(data));
  std::printf("best epoch %d  val rmse p_y %.4f m  p_z %.4f m  theta_y %.4f rad  theta_z %.4f rad\n",
              result.best_epoch, e[0], e[1], e[2], e[3]);
  return 0;
}

int cmd_eval(const std::vector<std::string>& data_paths, const std::string& model_path, bool all_rows) {
  const Dataset data = load_datasets(data_paths);
  const MlpParams model = load_model(model_path);
  std::vector<std::size_t> rows;
  if (all_rows) {
    rows.resize(data.size());
    std::iota(rows.begin(), rows.end(), 0);
  } else {
    rows = validation_rows(data);
  }
  const auto e = rmse(model, data, rows);
  std::printf("rmse over %zu pairs: p_y %.4f m  p_z %.4f m  theta_y %.4f rad  theta_z %.4f rad\n", rows.size(), e[0],
              e[1], e[2], e[3]);
  return 0;
}

Estimator estimator_for(const Scenario& s, const std::string& model_path) {
  if (model_path.empty()) return oracle_estimator();
  const MlpParams model = load_model(model_path);
  if (model.trained_mode != s.mode.kind)
    throw ModeMismatch("model trained for " + std::string(to_string(model.trained_mode)) + ", scenario uses " +
                       std::string(to_string(s.mode.kind)));
  return model_estimator(model);
}

void print_report(const ScenarioResult& r) {
  const auto& rep = r.report;
  std::printf("%s: %d/%d succeeded, %d completed\n", r.scenario.name.c_str(), rep.successes, rep.trials,
              rep.completed);
  std::printf("  mean axis distance %.4f m  mean pred p_z %.4f m  mean |pred p_y| %.4f m\n", rep.mean_axis_distance,
              rep.mean_pred_p_z, rep.mean_abs_pred_p_y);
  std::printf("  mean force %.2f N  max force %.2f N  min contact %.3f\n", rep.mean_force, rep.max_force,
              rep.min_contact_fraction);
}

int cmd_run(const std::string& scenario_path, const std::string& model_path, const std::string& out,
            bool paper_scale) {
  Scenario s = load_scenario(scenario_path);
  if (paper_scale) s.trials = kPaperTrials;
  const ScenarioResult result = run_scenario(s, estimator_for(s, model_path));
  emit_report(result, out);
  print_report(result);
  return 0;
}

int cmd_replay(const std::string& scenario_path, const std::string& model_path, const std::string& commands,
               const std::string& out) {
  const Scenario s = load_scenario(scenario_path);
  const TrialLog log = replay_session(s, estimator_for(s, model_path), read_commands(commands));
  std::filesystem::create_directories(out);
  write_trial_csv(log.steps, std::filesystem::path(out) / "trial_0.csv");
  std::printf("replayed %zu steps -> %s\n", log.steps.size(), out.c_str());
  return 0;
}

int cmd_serve(const std::string& scenario_path, const std::string& model_path, ServeOptions opts,
              const std::vector<std::string>& catalog) {
  const Scenario s = load_scenario(scenario_path);
  opts.live.catalog.push_back(s);
  for (const auto& p : catalog) opts.live.catalog.push_back(load_scenario(p));
  LiveServer server(s, estimator_for(s, model_path), std::move(opts));
  server.start();
  std::fprintf(stderr, "serving %s on port %u\n", s.name.c_str(), static_cast<unsigned>(server.port()));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::fprintf(stderr, "stopped after %lld sensing steps\n", static_cast<long long>(server.ticks()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacitive limb tracking simulator"};
  app.require_subcommand(1);

  auto* collect = app.add_subcommand("collect", "Collect a training dataset");
  std::string limb = "both", mode = "air_gown", out, csv;
  std::uint32_t iters = 100;
  std::uint64_t seed = 1;
  bool paper_scale = false;
  collect->add_option("--limb", limb)->check(CLI::IsMember({"arm", "leg", "both"}));
  collect->add_option("--mode", mode)->check(CLI::IsMember({"air_gown", "wet_cloth"}));
  collect->add_option("--iters", iters, "Iterations per site")->check(CLI::PositiveNumber);
  collect->add_option("--seed", seed);
  collect->add_option("--out", out)->required();
  collect->add_option("--csv", csv, "Also export the pairs as CSV");
  collect->add_flag("--paper-scale", paper_scale, "Use 500 iterations per site");

  auto* train_cmd = app.add_subcommand("train", "Train the pose regressor");
  std::vector<std::string> data_paths;
  std::string init, history;
  TrainConfig cfg;
  cfg.seed = 1;
  train_cmd->add_option("--data", data_paths)->required();
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_option("--epochs", cfg.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", cfg.seed);
  train_cmd->add_option("--batch-size", cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", cfg.learning_rate)->check(CLI::PositiveNumber);
  train_cmd->add_option("--init", init, "Continue from an existing model");
  train_cmd->add_option("--history", history, "Write per-epoch losses as CSV");

  auto* eval = app.add_subcommand("eval", "Per-output RMSE of a model on a dataset");
  std::string model;
  bool all_rows = false;
  eval->add_option("--data", data_paths)->required();
  eval->add_option("--model", model)->required();
  eval->add_flag("--all", all_rows, "Use every pair instead of the validation split");

  auto* run = app.add_subcommand("run", "Run a scenario and write a report");
  std::string scenario;
  run->add_option("--scenario", scenario)->required();
  run->add_option("--model", model, "Trained model; omit for the ground-truth oracle");
  run->add_option("--out", out)->required();
  run->add_flag("--paper-scale", paper_scale, "Use the paper's trial count");

  auto* replay = app.add_subcommand("replay", "Replay a recorded live session");
  std::string commands;
  replay->add_option("--scenario", scenario)->required();
  replay->add_option("--model", model);
  replay->add_option("--commands", commands)->required();
  replay->add_option("--out", out)->required();

  auto* serve = app.add_subcommand("serve", "Serve a live session over WebSocket");
  ServeOptions serve_opts;
  std::string ui_dir, record_dir;
  std::vector<std::string> catalog;
  bool fast = false;
  serve->add_option("--port", serve_opts.port);
  serve->add_option("--address", serve_opts.address);
  serve->add_option("--scenario", scenario)->required();
  serve->add_option("--model", model);
  serve->add_option("--ui-dir", ui_dir, "Serve static UI assets from this directory");
  serve->add_option("--record", record_dir, "Write the session log and command stream here");
  serve->add_option("--catalog", catalog, "Extra scenarios selectable by name");
  serve->add_flag("--fast", fast, "Run sensing steps as fast as possible");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*collect) return cmd_collect(limb, mode, iters, seed, paper_scale, out, csv);
    if (*train_cmd) return cmd_train(data_paths, out, cfg, init, history);
    if (*eval) return cmd_eval(data_paths, model, all_rows);
    if (*run) return cmd_run(scenario, model, out, paper_scale);
    if (*replay) return cmd_replay(scenario, model, commands, out);
    if (*serve) {
      if (!ui_dir.empty()) serve_opts.ui_dir = ui_dir;
      if (!record_dir.empty()) serve_opts.record_dir = record_dir;
      serve_opts.realtime = !fast;
      return cmd_serve(scenario, model, std::move(serve_opts), catalog);
    }
  } catch (const captrack::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
