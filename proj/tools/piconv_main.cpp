// piconv: simulate, ingest, train, predict, evaluate and study from the
// command line. Diagnostics go to stderr; data goes to files only.
//
// Exit status: 0 success, 1 invalid input, 2 runtime or numeric failure.

#include "piconv/checkpoint.hpp"
#include "piconv/config.hpp"
#include "piconv/error.hpp"
#include "piconv/forecast.hpp"
#include "piconv/io.hpp"
#include "piconv/study.hpp"
#include "piconv/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace piconv;

namespace {

std::string numbered(const char* stem, Index k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06lld.csv", stem, static_cast<long long>(k));
  return buf;
}

Json metrics_json(const Metrics& m) {
  return {{"mse", m.mse}, {"mae", m.mae}, {"mape", m.mape}};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

struct Common {
  std::vector<std::string> argv;
};

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out;
};

void run_simulate(const SimulateArgs& a, const Common& c) {
  const Scenario sc = parse_scenario(a.scenario);
  const SimulationResult sim = simulate(sc.sim);
  const fs::path out(a.out);
  fs::create_directories(out);
  const std::vector<std::string> written = write_frame_set(out, sim, sc);
  RunManifest m;
  m.command = "simulate";
  m.argv = c.argv;
  m.config = sc.resolved;
  m.defaulted = sc.defaulted;
  m.add_input(a.scenario);
  m.add_artifacts(out, written);
  write_run_manifest(out, m);
}

struct IngestArgs {
  std::string frames_dir, manifest_out;
  Index downsample = 1;
};

void run_ingest(const IngestArgs& a, const Common& c) {
  if (a.downsample < 1) throw ValidationError("--downsample must be >= 1");
  const fs::path dir(a.frames_dir);
  if (!fs::is_directory(dir)) {
    throw ValidationError("frames directory '" + a.frames_dir + "' does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  if (files.empty()) throw ValidationError("no frames found in '" + a.frames_dir + "'");
  std::sort(files.begin(), files.end(),
            [](const fs::path& x, const fs::path& y) { return x.filename() < y.filename(); });

  const fs::path manifest = fs::absolute(a.manifest_out);
  const fs::path out = manifest.parent_path();
  fs::create_directories(out);
  RunManifest run;
  run.command = "ingest";
  run.argv = c.argv;

  Json frames = Json::array();
  std::vector<std::string> written;
  Index rows = 0, cols = 0;
  for (std::size_t k = 0; k < files.size(); ++k) {
    const Field f = read_field_csv(files[k]);
    run.inputs.emplace_back(files[k].string(), sha256_file(files[k]));
    if (k == 0) {
      rows = f.rows();
      cols = f.cols();
    } else if (f.rows() != rows || f.cols() != cols) {
      throw ValidationError(files[k].string() + " is " + std::to_string(f.rows()) + "x" +
                            std::to_string(f.cols()) + ", expected " + std::to_string(rows) +
                            "x" + std::to_string(cols));
    }
    if (a.downsample == 1) {
      frames.push_back(fs::absolute(files[k]).lexically_normal().string());
    } else {
      const std::string rel = "frames/" + numbered("frame", Index(k));
      write_text_file(out / rel, format_field_csv(downsample(f, a.downsample)));
      frames.push_back(rel);
      written.push_back(rel);
    }
  }
  const GridSpec g;
  Json man;
  man["format"] = "piconv-frames";
  man["source"] = fs::absolute(dir).lexically_normal().string();
  man["downsample"] = a.downsample;
  man["channels"] = 1;
  man["physics"] = {{"material", to_json(MaterialModel{})},
                    {"grid", {{"dx", g.dx * double(a.downsample)}, {"dt", g.dt},
                              {"thickness", g.thickness}}},
                    {"frame_dt", g.dt},
                    {"mode", "interior_2d"},
                    {"edges", "robin"}};
  man["frames"] = frames;
  write_text_file(manifest, dump(man));
  written.push_back(fs::relative(manifest, out).string());
  run.config = {{"frames_dir", a.frames_dir}, {"downsample", a.downsample}};
  run.defaulted = {"physics (default material and grid; edit the manifest to override)"};
  run.add_artifacts(out, written);
  write_run_manifest(out, run);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out;
  std::optional<bool> use_pi_loss, use_pi_input;
  std::optional<Index> window, horizon;
  std::optional<std::uint64_t> seed;
};

struct Prepared {
  std::shared_ptr<const FrameSeries> series;
  RunConfig rc;
  ModelConfig model;
};

Prepared prepare(const std::string& data, const std::string& config, const TrainArgs* a) {
  Prepared p;
  p.series = std::make_shared<const FrameSeries>(load_frame_set(data));
  p.rc = parse_run_config(config);
  if (a != nullptr) {
    if (a->use_pi_loss) p.rc.train.use_pi_loss = *a->use_pi_loss;
    if (a->use_pi_input) p.rc.train.use_pi_input = *a->use_pi_input;
    if (a->seed) p.rc.train.seed = *a->seed;
    if (a->window) p.rc.model_overrides["window"] = *a->window;
    if (a->horizon) p.rc.model_overrides["horizon"] = *a->horizon;
  }
  p.model = p.rc.model_for(*p.series);
  p.rc.train.validate();
  return p;
}

Json resolved_config(const Prepared& p) {
  Json j = p.rc.resolved;
  j["model"] = to_json(p.model);
  j["train"]["use_pi_loss"] = p.rc.train.use_pi_loss;
  j["train"]["use_pi_input"] = p.rc.train.use_pi_input;
  j["train"]["seed"] = p.rc.train.seed;
  return j;
}

void run_train(const TrainArgs& a, const Common& c) {
  const Prepared p = prepare(a.data, a.config, &a);
  const DatasetSplit split = split_dataset(
      window_dataset(p.series, p.model.window, p.model.horizon), p.rc.train.split);
  const TrainResult result = train(split.train, p.model, p.rc.train);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.bin", result.checkpoint);
  write_text_file(out / "loss_history.csv", history_csv(result.history));
  Json summary;
  summary["weights"] = {{"w_p", result.weights.w_p}, {"w_i", result.weights.w_i},
                        {"w_b", result.weights.w_b}, {"w_d", result.weights.w_d}};
  summary["laser_power_scale"] = result.laser_power_scale;
  summary["train_samples"] = split.train.size();
  summary["validation_samples"] = split.validation.size();
  if (!split.validation.samples.empty()) {
    summary["validation"] = metrics_json(evaluate(result.checkpoint, split.validation));
  }
  write_text_file(out / "train_summary.json", dump(summary));

  RunManifest m;
  m.command = "train";
  m.argv = c.argv;
  m.config = resolved_config(p);
  m.defaulted = p.rc.defaulted;
  m.add_input(a.data);
  m.add_input(a.config);
  m.add_artifacts(out, {"checkpoint.bin", "loss_history.csv", "train_summary.json"});
  write_run_manifest(out, m);
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, data, mode, out;
  Index steps = 10;
};

void run_predict(const PredictArgs& a, const Common& c) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  auto series = std::make_shared<const FrameSeries>(load_frame_set(a.data));
  const fs::path out(a.out);
  std::vector<std::string> written;
  Json metrics;
  if (a.mode == "single" || a.mode == "direct") {
    if (a.mode == "single" && ck.config.horizon != 1) {
      throw ValidationError("single-step prediction needs a horizon-1 checkpoint, got horizon " +
                            std::to_string(ck.config.horizon));
    }
    const DatasetSplit split = split_dataset(
        window_dataset(series, ck.config.window, ck.config.horizon), TrainConfig{}.split);
    if (split.validation.samples.empty()) throw ValidationError("no validation samples");
    fs::create_directories(out / "predictions");
    std::vector<Metrics> per;
    for (const WindowedSample& s : split.validation.samples) {
      const SampleInput in = split.validation.input(s);
      const Field pred = direct_predict(ck, in.window, in.flux, ck.config.horizon);
      const std::string rel = "predictions/" + numbered("pred", s.target);
      write_text_file(out / rel, format_field_csv(pred));
      written.push_back(rel);
      per.push_back(field_metrics(pred, series->frame(s.target)));
    }
    metrics = metrics_json(mean_metrics(per));
    metrics["samples"] = per.size();
  } else if (a.mode == "rolling") {
    if (a.steps < 0) throw ValidationError("--steps must be >= 0");
    const DatasetSplit split = split_dataset(
        window_dataset(series, ck.config.window, 1), TrainConfig{}.split);
    if (split.validation.samples.empty()) throw ValidationError("no validation samples");
    const WindowedSample start = split.validation.samples.front();
    if (start.last + a.steps >= series->size()) {
      throw ValidationError("flux shortage: data ends " +
                            std::to_string(series->size() - 1 - start.last) +
                            " frames after the seed window, " + std::to_string(a.steps) +
                            " steps requested");
    }
    std::vector<std::vector<Field>> window;
    for (Index k = start.first; k <= start.last; ++k) {
      window.push_back(series->channels[std::size_t(k)]);
    }
    std::vector<Field> flux;
    std::vector<std::vector<Field>> lower;
    for (Index s = 1; s <= a.steps; ++s) {
      flux.push_back(series->flux[std::size_t(start.last + s)]);
      const auto& ch = series->channels[std::size_t(start.last + s)];
      lower.emplace_back(ch.begin() + 1, ch.end());
    }
    const std::vector<Field> preds = rolling_predict(ck, window, flux, a.steps, lower);
    fs::create_directories(out / "predictions");
    Json steps = Json::array();
    for (Index s = 1; s <= a.steps; ++s) {
      const Index t = start.last + s;
      const std::string rel = "predictions/" + numbered("rolling", t);
      write_text_file(out / rel, format_field_csv(preds[std::size_t(s - 1)]));
      written.push_back(rel);
      Json row = metrics_json(field_metrics(preds[std::size_t(s - 1)], series->frame(t)));
      row["step"] = s;
      row["frame"] = t;
      steps.push_back(row);
    }
    metrics["seed_window_last_frame"] = start.last;
    metrics["steps"] = steps;
  } else {
    throw ValidationError("unknown --mode '" + a.mode + "' (expected single, rolling or direct)");
  }
  write_text_file(out / "metrics.json", dump(metrics));
  written.push_back("metrics.json");
  RunManifest m;
  m.command = "predict";
  m.argv = c.argv;
  m.config = {{"mode", a.mode}, {"steps", a.steps}, {"model", to_json(ck.config)}};
  m.add_input(a.checkpoint);
  m.add_input(a.data);
  m.add_artifacts(out, written);
  write_run_manifest(out, m);
}

struct EvaluateArgs {
  std::string checkpoint, data, out;
};

void run_evaluate(const EvaluateArgs& a, const Common& c) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  auto series = std::make_shared<const FrameSeries>(load_frame_set(a.data));
  const WindowedDataset all = window_dataset(series, ck.config.window, ck.config.horizon);
  const DatasetSplit split = split_dataset(all, TrainConfig{}.split);
  Json j;
  j["all"] = metrics_json(evaluate(ck, all));
  j["all"]["samples"] = all.size();
  if (!split.validation.samples.empty()) {
    j["validation"] = metrics_json(evaluate(ck, split.validation));
    j["validation"]["samples"] = split.validation.size();
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file(out / "metrics.json", dump(j));
  RunManifest m;
  m.command = "evaluate";
  m.argv = c.argv;
  m.config = {{"model", to_json(ck.config)}, {"split", TrainConfig{}.split}};
  m.add_input(a.checkpoint);
  m.add_input(a.data);
  m.add_artifacts(out, {"metrics.json"});
  write_run_manifest(out, m);
}

struct StudyArgs {
  std::string kind, data, config, out;
};

void run_study_cmd(const StudyArgs& a, const Common& c) {
  const StudyKind kind = study_kind_from_string(a.kind);
  const Prepared p = prepare(a.data, a.config, nullptr);
  const StudyReport report = run_study(kind, p.series, p.model, p.rc.train, p.rc.study);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file(out / "report.json", report_json(report));
  write_text_file(out / "report.csv", report_csv(report));
  RunManifest m;
  m.command = "study";
  m.argv = c.argv;
  m.config = resolved_config(p);
  m.config["kind"] = a.kind;
  m.defaulted = p.rc.defaulted;
  m.volatile_fields = {"report.json: rows[].seconds", "report.csv: seconds"};
  m.add_input(a.data);
  m.add_input(a.config);
  m.add_artifacts(out, {"report.json", "report.csv"});
  write_run_manifest(out, m);
}

int exit_code(const Error& e) { return e.kind() == ErrorKind::validation ? 1 : 2; }

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees many mid-sized buffers per batch; keep them
  // in the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 1 << 28);

  Common common;
  common.argv.assign(argv, argv + argc);

  CLI::App app{"piconv: physics-informed ConvLSTM thermal-field prediction"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Run the finite-difference simulator");
  cmd_sim->add_option("--scenario", sim.scenario, "Scenario JSON file")->required();
  cmd_sim->add_option("--out", sim.out, "Output directory")->required();

  IngestArgs ing;
  auto* cmd_ing = app.add_subcommand("ingest", "Index a directory of CSV frames");
  cmd_ing->add_option("--frames-dir", ing.frames_dir, "Directory of CSV frames")->required();
  cmd_ing->add_option("--manifest-out", ing.manifest_out, "Frame-set manifest to write")
      ->required();
  cmd_ing->add_option("--downsample", ing.downsample, "Block-mean downsampling factor");

  TrainArgs tr;
  auto* cmd_tr = app.add_subcommand("train", "Train a model");
  cmd_tr->add_option("--data", tr.data, "Frame set")->required();
  cmd_tr->add_option("--config", tr.config, "Run configuration JSON")->required();
  cmd_tr->add_option("--out", tr.out, "Output directory")->required();
  cmd_tr->add_option("--use-pi-loss", tr.use_pi_loss, "Include physics loss terms");
  cmd_tr->add_option("--use-pi-input", tr.use_pi_input, "Inject the laser flux");
  cmd_tr->add_option("--window", tr.window, "Input window length");
  cmd_tr->add_option("--horizon", tr.horizon, "Prediction horizon");
  cmd_tr->add_option("--seed", tr.seed, "Run seed");

  PredictArgs pr;
  auto* cmd_pr = app.add_subcommand("predict", "Predict frames with a checkpoint");
  cmd_pr->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  cmd_pr->add_option("--data", pr.data, "Frame set")->required();
  cmd_pr->add_option("--mode", pr.mode, "single, rolling or direct")
      ->required()
      ->check(CLI::IsMember({"single", "rolling", "direct"}));
  cmd_pr->add_option("--steps", pr.steps, "Rolling steps");
  cmd_pr->add_option("--out", pr.out, "Output directory")->required();

  EvaluateArgs ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  cmd_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  cmd_ev->add_option("--data", ev.data, "Frame set")->required();
  cmd_ev->add_option("--out", ev.out, "Output directory")->required();

  StudyArgs st;
  auto* cmd_st = app.add_subcommand("study", "Run an experiment harness");
  cmd_st->add_option("--kind", st.kind, "window, ablation, datasize or horizon")
      ->required()
      ->check(CLI::IsMember({"window", "ablation", "datasize", "horizon"}));
  cmd_st->add_option("--data", st.data, "Frame set")->required();
  cmd_st->add_option("--config", st.config, "Run configuration JSON")->required();
  cmd_st->add_option("--out", st.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string name = app.get_subcommands().front()->get_name();
  try {
    if (*cmd_sim) run_simulate(sim, common);
    if (*cmd_ing) run_ingest(ing, common);
    if (*cmd_tr) run_train(tr, common);
    if (*cmd_pr) run_predict(pr, common);
    if (*cmd_ev) run_evaluate(ev, common);
    if (*cmd_st) run_study_cmd(st, common);
  } catch (const Error& e) {
    std::cerr << "piconv " << name << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "piconv " << name << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
