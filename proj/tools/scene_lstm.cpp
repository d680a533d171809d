#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "slstm/data.hpp"
#include "slstm/eval.hpp"
#include "slstm/gradcheck.hpp"
#include "slstm/graph.hpp"
#include "slstm/model.hpp"
#include "slstm/plot.hpp"
#include "slstm/train.hpp"

namespace {

using namespace slstm;

struct CommonOpts {
  train::TrainConfig cfg;
  std::string variant = "n";
  std::string model = "scene";
  std::string config_path;

  // per-key option handle and setter, for plain key=value config files
  // (precedence: built-in defaults < file < flags)
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::function<void(const std::string&)>> setters;

  void apply_config_file() {
    if (config_path.empty()) return;
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config file: " + config_path);
    std::string line;
    long lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(config_path + ":" + std::to_string(lineno) +
                                 ": expected key=value");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      auto it = setters.find(key);
      if (it == setters.end())
        throw std::runtime_error(config_path + ":" + std::to_string(lineno) +
                                 ": unknown config key `" + key + "`");
      if (options.at(key)->count() == 0) it->second(value);
    }
  }

  void finish() {
    apply_config_file();
    if (variant != "a" && variant != "n")
      throw CLI::ValidationError("--variant", "must be `a` or `n`");
    cfg.variant = variant == "a" ? grid::Variant::All : grid::Variant::Nonlinear;
    if (model != "scene" && model != "lstm")
      throw CLI::ValidationError("--model", "must be `scene` or `lstm`");
    cfg.use_scene = model == "scene";
  }
};

template <class T>
void from_string(const std::string& s, T& out) {
  std::istringstream ss(s);
  if (!(ss >> out) || !(ss >> std::ws).eof())
    throw std::runtime_error("config value `" + s + "` has the wrong type");
}

void from_string(const std::string& s, bool& out) {
  if (s == "1" || s == "true") out = true;
  else if (s == "0" || s == "false") out = false;
  else throw std::runtime_error("config value `" + s + "` is not a boolean");
}

template <class T>
void bind_option(CLI::App* cmd, CommonOpts& o, const std::string& key, T& ref,
                 const std::string& flag, const std::string& desc) {
  o.options[key] = cmd->add_option(flag, ref, desc);
  o.setters[key] = [&ref](const std::string& s) { from_string(s, ref); };
}

void bind_flag(CLI::App* cmd, CommonOpts& o, const std::string& key, bool& ref,
               const std::string& flag, const std::string& desc) {
  o.options[key] = cmd->add_flag(flag, ref, desc);
  o.setters[key] = [&ref](const std::string& s) { from_string(s, ref); };
}

void add_train_config_flags(CLI::App* cmd, CommonOpts& o) {
  bind_option(cmd, o, "lr", o.cfg.lr, "--lr", "learning rate");
  bind_option(cmd, o, "dropout", o.cfg.dropout, "--dropout", "dropout rate");
  bind_option(cmd, o, "clip_norm", o.cfg.clip_norm, "--clip-norm",
              "global gradient norm clip");
  bind_option(cmd, o, "hidden", o.cfg.hidden, "--hidden",
              "hidden/memory vector size");
  bind_option(cmd, o, "embed", o.cfg.embed, "--embed", "offset embedding size");
  bind_option(cmd, o, "grid_dim", o.cfg.grid_dim, "--grid-dim",
              "grid cells per side");
  bind_option(cmd, o, "subgrid_dim", o.cfg.subgrid_dim, "--subgrid-dim",
              "sub-cells per side");
  bind_option(cmd, o, "epochs_stage1", o.cfg.epochs_stage1, "--epochs-stage1",
              "stage-1 epochs");
  bind_option(cmd, o, "epochs_stage2", o.cfg.epochs_stage2, "--epochs-stage2",
              "stage-2 epochs");
  bind_option(cmd, o, "t_obs", o.cfg.t_obs, "--t-obs",
              "observed frames per window");
  bind_option(cmd, o, "t_pred", o.cfg.t_pred, "--t-pred",
              "predicted frames per window");
  bind_option(cmd, o, "nonlinear_threshold", o.cfg.nonlinear_threshold,
              "--nonlinear-threshold", "non-linearity threshold on phi");
  bind_option(cmd, o, "train_stride", o.cfg.train_stride, "--train-stride",
              "training window stride (0 = window length)");
  bind_option(cmd, o, "variant", o.variant, "--variant",
              "scene variant: a (all) or n (non-linear)");
  bind_option(cmd, o, "model", o.model, "--model",
              "scene (full model) or lstm (vanilla baseline)");
  bind_flag(cmd, o, "freeze_pedestrian", o.cfg.freeze_pedestrian,
            "--freeze-pedestrian", "freeze pedestrian weights in stage 2");
  bind_flag(cmd, o, "peephole_ct", o.cfg.peephole_ct, "--peephole-ct",
            "output-gate peephole reads c_t instead of c_{t-1}");
  bind_option(cmd, o, "seed", o.cfg.seed, "--seed", "rng seed");
  o.options.at("seed")->envname("SCENE_LSTM_SEED");
  cmd->add_option("--config", o.config_path,
                  "key=value config file (flags win)");
}

train::TrainConfig checkpoint_config(const train::Checkpoint& ck,
                                     const std::optional<std::string>& variant) {
  train::TrainConfig cfg = train::config_from_checkpoint(ck);
  if (variant) {
    const auto v = *variant == "a" ? grid::Variant::All : grid::Variant::Nonlinear;
    if (v != cfg.variant) {
      std::cerr << "warning: checkpoint was trained as variant "
                << (cfg.variant == grid::Variant::All ? "a" : "n")
                << ", running as " << *variant
                << " (hard-control vectors K recomputed)\n";
      cfg.variant = v;
    }
  }
  return cfg;
}

int cmd_train(const CommonOpts& o, int stage,
              const std::vector<std::string>& data_paths,
              const std::string& held_out, const std::string& init_path,
              double fraction, const std::string& out_path,
              const std::string& log_path) {
  std::vector<data::SceneDataset> datasets;
  for (const auto& p : data_paths) datasets.push_back(data::prepare_dataset(p));

  std::vector<train::TrainLogRow> log;
  train::Checkpoint ck;
  if (stage == 1) {
    std::size_t held = datasets.size();
    if (!held_out.empty()) {
      for (std::size_t i = 0; i < datasets.size(); ++i)
        if (datasets[i].name == held_out) held = i;
      if (held == datasets.size())
        throw std::runtime_error("held-out dataset `" + held_out +
                                 "` not among --data files");
    }
    ck = train::train_stage1(datasets, held, o.cfg, &log);
  } else {
    if (datasets.size() != 1)
      throw std::runtime_error("stage 2 takes exactly one --data file");
    const train::Checkpoint start = train::load_checkpoint(init_path);
    train::TrainConfig cfg = train::config_from_checkpoint(start);
    cfg.variant = o.cfg.variant;
    cfg.epochs_stage2 = o.cfg.epochs_stage2;
    cfg.freeze_pedestrian = o.cfg.freeze_pedestrian;
    cfg.seed = o.cfg.seed;
    ck = train::train_stage2(start, datasets[0], fraction, cfg, &log);
  }
  train::save_checkpoint(ck, out_path);
  if (!log_path.empty()) {
    std::ofstream f(log_path);
    train::write_train_log(f, log);
  }
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

// last `test_fraction` of the video's samples
data::SceneDataset test_split(const data::SceneDataset& ds, double test_fraction) {
  const long n = data::max_sample_index(ds) + 1;
  const long first = n - static_cast<long>(test_fraction * static_cast<double>(n));
  return data::slice_samples(ds, first, n);
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& report_path, const std::string& dump_path,
                 const std::string& baseline, bool oracle, bool sample,
                 bool reset_per_window, double test_fraction,
                 const std::optional<std::string>& variant,
                 std::uint64_t sample_seed) {
  const data::SceneDataset full = data::prepare_dataset(data_path);
  const data::SceneDataset ds = test_split(full, test_fraction);

  eval::EvalOptions opt;
  opt.reset_per_window = reset_per_window;
  opt.sample_seed = sample_seed;
  if (sample) opt.mode = model::Mode::PredictSample;

  std::vector<eval::PredictionRow> rows;
  eval::EvalReport rep;
  if (oracle) {
    opt.predictor = eval::Predictor::Oracle;
    rep = eval::sliding_eval(nullptr, nullptr, nullptr, ds, 8, 12, opt, &rows);
  } else if (baseline == "linear") {
    opt.predictor = eval::Predictor::Linear;
    rep = eval::sliding_eval(nullptr, nullptr, nullptr, ds, 8, 12, opt, &rows);
  } else {
    const train::Checkpoint ck = train::load_checkpoint(ckpt_path);
    const train::TrainConfig cfg = checkpoint_config(ck, variant);
    opt.nonlinear_threshold = cfg.nonlinear_threshold;
    const model::ModelConfig mcfg = cfg.model_config();
    grid::GridBank bank(mcfg.grid, cfg.hidden);
    bank.set_flags(ck.nonlinear_flags, cfg.variant);
    rep = eval::sliding_eval(&ck.params, &bank, &mcfg, ds, cfg.t_obs,
                             cfg.t_pred, opt, &rows);
  }
  rep.sequence = full.name;

  std::vector<eval::EvalReport> reports{rep};
  eval::write_report_table(std::cout, reports);
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    eval::write_report_csv(f, reports);
  }
  if (!dump_path.empty()) {
    std::ofstream f(dump_path);
    eval::write_prediction_dump(f, rows);
  }
  return 0;
}

int cmd_synth(const std::string& scene, int n, double noise,
              std::uint64_t seed, const std::string& out) {
  const auto kind = data::parse_scene_kind(scene);
  const auto ds = data::generate_synthetic(kind, n, noise, seed);
  data::write_annotations(ds, out);
  std::cout << "wrote " << ds.trajectories.size() << " trajectories to " << out
            << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double step, double tol, bool inject) {
  ad::corrupt_sigmoid_grad_for_tests = inject;
  bool ok = true;

  std::cout << "primitive ops (tolerance 1e-6):\n";
  for (const auto& g : gradcheck::check_primitives(seed)) {
    const bool pass = g.worst_rel_err < 1e-6;
    ok = ok && pass;
    std::cout << "  " << (pass ? "PASS" : "FAIL") << "  " << g.name
              << "  worst rel err " << g.worst_rel_err << "\n";
  }

  const auto rep = gradcheck::run(seed, step, tol);
  ok = ok && rep.pass;

  // coarse groups for readability; failures list exact tensors below
  std::map<std::string, double> coarse;
  for (const auto& g : rep.groups) {
    std::string key = g.name.substr(0, g.name.find('.'));
    if (g.name.rfind("ped.lstm.", 0) == 0) key = "ped.lstm";
    else if (g.name.rfind("ped.", 0) == 0) key = "ped.embed";
    coarse[key] = std::max(coarse[key], g.worst_rel_err);
  }
  std::cout << "full model (tolerance " << tol << ", step " << step << "):\n";
  for (const auto& [k, v] : coarse)
    std::cout << "  " << (v < tol ? "PASS" : "FAIL") << "  " << k
              << "  worst rel err " << v << "\n";
  if (!rep.pass) {
    std::cout << "offending tensors:\n";
    for (const auto& g : rep.groups)
      if (g.worst_rel_err >= tol)
        std::cout << "  " << g.name << "[" << g.worst_index << "] rel err "
                  << g.worst_rel_err << "\n";
  }
  std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_export_plot(const std::string& dump_path, const std::string& ckpt_path,
                    const std::string& out_path) {
  std::ifstream df(dump_path);
  if (!df) throw std::runtime_error("cannot open prediction dump: " + dump_path);
  const auto rows = eval::read_prediction_dump(df);

  const train::Checkpoint ck = train::load_checkpoint(ckpt_path);
  const train::TrainConfig cfg = train::config_from_checkpoint(ck);
  grid::GridConfig gc{cfg.grid_dim, cfg.subgrid_dim};

  std::ofstream svg(out_path);
  if (!svg) throw std::runtime_error("cannot write " + out_path);
  plot::write_scene_svg(svg, rows, gc, ck.nonlinear_flags);

  const std::string csv_path =
      std::filesystem::path(out_path).replace_extension(".csv").string();
  std::ofstream csv(csv_path);
  plot::write_grid_overlay_csv(csv, gc, ck.nonlinear_flags);
  std::cout << "wrote " << out_path << " and " << csv_path << "\n";
  return 0;
}

int cmd_sweep_stage2(const std::string& init_path, const std::string& data_path,
                     const std::string& out_path,
                     const std::vector<double>& fractions,
                     std::uint64_t sample_seed) {
  const train::Checkpoint start = train::load_checkpoint(init_path);
  const train::TrainConfig cfg = train::config_from_checkpoint(start);
  const data::SceneDataset full = data::prepare_dataset(data_path);
  const data::SceneDataset test = test_split(full, 0.5);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "fraction,ade,fde,nde\n";
  out.precision(17);
  for (double f : fractions) {
    const train::Checkpoint ck = train::train_stage2(start, full, f, cfg);
    const model::ModelConfig mcfg = cfg.model_config();
    grid::GridBank bank(mcfg.grid, cfg.hidden);
    bank.set_flags(ck.nonlinear_flags, cfg.variant);
    eval::EvalOptions opt;
    opt.nonlinear_threshold = cfg.nonlinear_threshold;
    opt.sample_seed = sample_seed;
    const auto rep = eval::sliding_eval(&ck.params, &bank, &mcfg, test,
                                        cfg.t_obs, cfg.t_pred, opt);
    out << f << ',' << rep.ade << ',' << rep.fde << ',';
    if (rep.nde) out << *rep.nde;
    out << '\n';
    std::cout << "fraction " << f << ": ade " << rep.ade << "\n";
  }
  std::cout << "sweep written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-LSTM trajectory forecasting"};
  app.require_subcommand(1);
  int rc = 0;

  // train
  auto* train_cmd = app.add_subcommand("train", "train stage 1 or stage 2");
  CommonOpts topts;
  int stage = 1;
  std::vector<std::string> data_paths;
  std::string held_out, init_path, out_path, log_path;
  double fraction = 0.5;
  train_cmd->add_option("--stage", stage, "training stage")
      ->check(CLI::IsMember({1, 2}))
      ->required();
  train_cmd->add_option("--data", data_paths, "annotation file(s)")->required();
  train_cmd->add_option("--held-out", held_out, "dataset name to hold out (stage 1)");
  train_cmd->add_option("--init", init_path, "stage-1 checkpoint (stage 2)");
  train_cmd->add_option("--fraction", fraction,
                        "fraction of the unseen video used in stage 2");
  train_cmd->add_option("--out", out_path, "output checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "training log CSV path");
  add_train_config_flags(train_cmd, topts);
  train_cmd->callback([&] {
    topts.finish();
    if (stage == 2 && init_path.empty())
      throw CLI::RequiredError("--init (required for --stage 2)");
    rc = cmd_train(topts, stage, data_paths, held_out, init_path, fraction,
                   out_path, log_path);
  });

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "sliding-window evaluation");
  std::string e_ckpt, e_data, e_report, e_dump, e_baseline;
  bool e_oracle = false, e_sample = false, e_reset = false;
  double e_test_fraction = 0.5;
  std::uint64_t e_seed = 0;
  std::string e_variant;
  eval_cmd->add_option("--checkpoint", e_ckpt, "trained checkpoint");
  eval_cmd->add_option("--data", e_data, "annotation file")->required();
  eval_cmd->add_option("--report", e_report, "report CSV path");
  eval_cmd->add_option("--dump", e_dump, "prediction dump CSV path");
  eval_cmd->add_option("--baseline", e_baseline, "baseline: linear")
      ->check(CLI::IsMember({"linear"}));
  eval_cmd->add_flag("--oracle", e_oracle, "predict the ground truth (self-check)");
  eval_cmd->add_flag("--sample", e_sample, "sample offsets instead of the mean");
  eval_cmd->add_flag("--reset-per-window", e_reset,
                     "reset grid states before every window");
  eval_cmd->add_option("--test-fraction", e_test_fraction,
                       "trailing fraction of the video to evaluate");
  eval_cmd->add_option("--variant", e_variant, "override checkpoint variant (a|n)")
      ->check(CLI::IsMember({"a", "n"}));
  eval_cmd->add_option("--sample-seed", e_seed, "seed for --sample")
      ->envname("SCENE_LSTM_SEED");
  eval_cmd->callback([&] {
    if (e_ckpt.empty() && e_baseline.empty() && !e_oracle)
      throw CLI::RequiredError("--checkpoint (or --baseline / --oracle)");
    rc = cmd_evaluate(e_ckpt, e_data, e_report, e_dump, e_baseline, e_oracle,
                      e_sample, e_reset, e_test_fraction,
                      e_variant.empty() ? std::nullopt
                                        : std::optional<std::string>(e_variant),
                      e_seed);
  });

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
  std::string s_scene, s_out;
  int s_n = 100;
  double s_noise = 0.0;
  std::uint64_t s_seed = 7;
  synth_cmd->add_option("--scene", s_scene, "straight | alley_turn | stop_region")
      ->required()
      ->check(CLI::IsMember({"straight", "alley_turn", "stop_region"}));
  synth_cmd->add_option("--n", s_n, "number of trajectories");
  synth_cmd->add_option("--noise", s_noise, "positional noise std (normalized)");
  synth_cmd->add_option("--seed", s_seed, "rng seed")->envname("SCENE_LSTM_SEED");
  synth_cmd->add_option("--out", s_out, "output annotation file")->required();
  synth_cmd->callback([&] { rc = cmd_synth(s_scene, s_n, s_noise, s_seed, s_out); });

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::uint64_t g_seed = 1;
  double g_step = 1e-5, g_tol = 1e-4;
  bool g_inject = false;
  gc_cmd->add_option("--seed", g_seed, "rng seed")->envname("SCENE_LSTM_SEED");
  gc_cmd->add_option("--step", g_step, "finite-difference step");
  gc_cmd->add_option("--tol", g_tol, "relative-error tolerance");
  gc_cmd->add_flag("--inject-sigmoid-fault", g_inject,
                   "corrupt the sigmoid derivative (self-test fixture)");
  gc_cmd->callback([&] { rc = cmd_gradcheck(g_seed, g_step, g_tol, g_inject); });

  // export-plot
  auto* plot_cmd = app.add_subcommand("export-plot", "SVG + CSV scene export");
  std::string p_dump, p_ckpt, p_out;
  plot_cmd->add_option("--dump", p_dump, "prediction dump CSV")->required();
  plot_cmd->add_option("--checkpoint", p_ckpt, "checkpoint (grid flags)")
      ->required();
  plot_cmd->add_option("--out", p_out, "output SVG path")->required();
  plot_cmd->callback([&] { rc = cmd_export_plot(p_dump, p_ckpt, p_out); });

  // sweep-stage2
  auto* sweep_cmd =
      app.add_subcommand("sweep-stage2", "stage-2 training-data fraction sweep");
  std::string w_init, w_data, w_out;
  std::vector<double> w_fracs{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t w_seed = 0;
  sweep_cmd->add_option("--init", w_init, "stage-1 checkpoint")->required();
  sweep_cmd->add_option("--data", w_data, "unseen video annotation file")
      ->required();
  sweep_cmd->add_option("--out", w_out, "output CSV")->required();
  sweep_cmd->add_option("--fractions", w_fracs, "fractions to sweep");
  sweep_cmd->add_option("--sample-seed", w_seed, "eval sampling seed");
  sweep_cmd->callback(
      [&] { rc = cmd_sweep_stage2(w_init, w_data, w_out, w_fracs, w_seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
