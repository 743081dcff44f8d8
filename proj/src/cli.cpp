#include "riskcast/cli.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "riskcast/bench.hpp"
#include "riskcast/graph.hpp"
#include "riskcast/train.hpp"

namespace riskcast {

namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Output directory for synth: refuses to write into existing content.
void prepare_new_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir))
      throw std::runtime_error(dir + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw std::runtime_error("output directory " + dir +
                               " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "epoch,lp,lrec,lkm,lt,joint,val_lp\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const EpochStats& s = history[e];
    f << e << ',' << fmt(s.lp) << ',' << fmt(s.lrec) << ',' << fmt(s.lkm)
      << ',' << fmt(s.lt) << ',' << fmt(s.joint) << ',' << fmt(s.val_lp)
      << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

// Forward pass over one window, no augmentation, denormalized channel 0.
Tensor predict_window(const WindowDataset& ds, const ModelConfig& mcfg,
                      ParamStore& ps, std::size_t window_ix) {
  const SampleWindow& w = ds.windows[window_ix];
  const std::size_t t_len = w.inputs.size();
  const std::size_t n = ds.grid.regions();
  const std::size_t d = ds.d_feat;
  Tensor x({t_len * n, d});
  for (std::size_t t = 0; t < t_len; ++t)
    std::memcpy(x.data() + t * n * d, ds.features.data() + w.inputs[t] * n * d,
                n * d * sizeof(double));

  ad::Tape tp;
  const ModelVars mv = leaf_model(tp, ps, mcfg);
  auto hats = std::make_shared<std::vector<Tensor>>();
  hats->push_back(ds.ahat);
  const SplineGrid grid = make_spline_grid(mcfg.spline_degree, mcfg.basis_count);
  const EncoderOut enc =
      st_encode(tp.leaf(x, false), mv.enc, grid, hats, SeqMeta{1, t_len, n});
  const Tensor y = predict_head(enc.M, mv).value();
  Tensor risks({n});
  for (std::size_t i = 0; i < n; ++i)
    risks.data()[i] = denormalize_value(ds.stats, 0, y.data()[i]);
  return risks;
}

RunConfig load_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

void cmd_synth(const RunConfig& cfg, const std::string& out_dir, bool force,
               std::ostream& out) {
  prepare_new_dir(out_dir, force);
  const SynthCity city =
      synth_city(cfg.synth.seed, cfg.synth.rows, cfg.synth.cols,
                 cfg.synth.slots, cfg.synth.channels);
  save_city(out_dir, city);
  write_run_config(join(out_dir, "config.json"), cfg);
  out << "wrote " << out_dir << ": " << city.grid.rows << "x" << city.grid.cols
      << " grid, " << city.slots << " slots, " << city.channels
      << " channels, " << city.events.size() << " events\n";
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir,
               const std::string& out_dir, std::ostream& out) {
  const CityData data = load_city(data_dir);
  Trainer tr(make_dataset(data, cfg.train.window), cfg.train);
  while (!tr.done()) {
    tr.epoch();
    const EpochStats& s = tr.history().back();
    out << "epoch " << tr.epochs_done() - 1 << " lp " << fmt6(s.lp) << " joint "
        << fmt6(s.joint) << " val_lp " << fmt6(s.val_lp) << '\n';
  }
  tr.load_best();
  fs::create_directories(out_dir);
  save_checkpoint(join(out_dir, "checkpoint.bin"), tr.to_checkpoint());
  write_history_csv(join(out_dir, "history.csv"), tr.history());
  write_run_config(join(out_dir, "config.json"), cfg);
  out << "best epoch " << tr.best_epoch() << " val_lp " << fmt6(tr.best_val())
      << "; wrote " << out_dir << "/checkpoint.bin\n";
}

Split split_of(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  return Split::Test;
}

// Loads a checkpoint and rebuilds its dataset from data_dir; the trainer
// constructor cross-checks that the data matches the checkpoint.
Trainer reopen(const std::string& ckpt_path, const std::string& data_dir) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const LoadedRun run = parse_checkpoint(c);
  const CityData data = load_city(data_dir);
  return Trainer(make_dataset(data, run.cfg.window), c);
}

void cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
              const std::string& split, std::size_t k,
              const std::string& out_dir, std::ostream& out) {
  Trainer tr = reopen(ckpt_path, data_dir);
  tr.load_best();
  const TopKConfig kc{k};
  const SplitEval ev = evaluate_split(tr.dataset(), tr.config().model,
                                      tr.params(), split_of(split), kc);
  fs::create_directories(out_dir);
  write_report(join(out_dir, "metrics.txt"), ev.report);
  RunConfig echo;
  echo.train = tr.config();
  echo.metrics = kc;
  write_run_config(join(out_dir, "config.json"), echo);
  out << split << " windows " << ev.truth.dim(0) << '\n'
      << format_report(ev.report);
}

void cmd_predict(const std::string& ckpt_path, const std::string& data_dir,
                 std::size_t slot, const std::string& out_dir,
                 std::ostream& out) {
  Trainer tr = reopen(ckpt_path, data_dir);
  tr.load_best();
  const WindowDataset& ds = tr.dataset();
  std::size_t window_ix = ds.windows.size();
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    if (ds.windows[i].target == slot) window_ix = i;
  if (window_ix == ds.windows.size())
    throw std::invalid_argument(
        "slot " + std::to_string(slot) +
        " has no complete input window for this checkpoint's window config");

  const Tensor risks = predict_window(ds, tr.config().model, tr.params(),
                                      window_ix);
  fs::create_directories(out_dir);
  const std::string path = join(out_dir, "risk_map.csv");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t r = 0; r < ds.grid.rows; ++r) {
    for (std::size_t c = 0; c < ds.grid.cols; ++c) {
      if (c) f << ',';
      f << fmt(risks.data()[r * ds.grid.cols + c]);
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
  RunConfig echo;
  echo.train = tr.config();
  write_run_config(join(out_dir, "config.json"), echo);
  out << "slot " << slot << " risk map " << ds.grid.rows << "x"
      << ds.grid.cols << " written to " << path << '\n';
}

void cmd_bench(const RunConfig& cfg, const std::string& out_dir,
               std::ostream& out) {
  const BenchReport rep = run_bench(cfg.bench);
  fs::create_directories(out_dir);
  write_bench_csv(join(out_dir, "bench.csv"), rep);
  write_run_config(join(out_dir, "config.json"), cfg);
  out << bench_csv(rep);
}

void cmd_inspect(const std::string& ckpt_path, std::ostream& out) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const LoadedRun run = parse_checkpoint(c);
  out << c.config_json;
  std::size_t param_elems = 0;
  for (const auto& [name, t] : c.tensors)
    if (name.rfind("param/", 0) == 0) param_elems += t.numel();
  out << "tensors " << c.tensors.size() << '\n'
      << "parameters " << param_elems << '\n'
      << "epochs_done " << run.epochs_done << '\n'
      << "best_epoch " << run.best_epoch << '\n'
      << "best_val " << fmt(run.best_val) << '\n'
      << "done " << (run.done ? "true" : "false") << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"riskcast: gridded traffic risk forecasting"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 usage error, 3 I/O error, 4 numeric divergence.");

  std::string config_path, data_dir, out_dir, ckpt_path;
  std::string split = "test";
  std::size_t slot = 0, k = 20;
  bool force = false;
  SynthConfig synth_flags;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic city");
  synth->add_option("--config", config_path, "run config JSON");
  CLI::Option* o_seed = synth->add_option("--seed", synth_flags.seed, "RNG seed");
  CLI::Option* o_rows = synth->add_option("--rows", synth_flags.rows, "grid rows");
  CLI::Option* o_cols = synth->add_option("--cols", synth_flags.cols, "grid cols");
  CLI::Option* o_slots = synth->add_option("--slots", synth_flags.slots, "time slots");
  CLI::Option* o_chan =
      synth->add_option("--channels", synth_flags.channels, "feature channels");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_flag("--force", force, "overwrite a non-empty output directory");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--data", data_dir, "city directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "city directory")->required();
  eval->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--k", k, "ranking cutoff");
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* predict = app.add_subcommand("predict", "write one slot's risk map");
  predict->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  predict->add_option("--data", data_dir, "city directory")->required();
  predict->add_option("--slot", slot, "target time slot")->required();
  predict->add_option("--out", out_dir, "output directory")->required();

  CLI::App* bench = app.add_subcommand("bench", "KAN efficiency benchmark");
  bench->add_option("--config", config_path, "run config JSON");
  bench->add_option("--out", out_dir, "output directory")->required();

  CLI::App* inspect = app.add_subcommand("inspect", "print checkpoint metadata");
  inspect->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) {
      RunConfig cfg = load_or_default(config_path);
      if (o_seed->count()) cfg.synth.seed = synth_flags.seed;
      if (o_rows->count()) cfg.synth.rows = synth_flags.rows;
      if (o_cols->count()) cfg.synth.cols = synth_flags.cols;
      if (o_slots->count()) cfg.synth.slots = synth_flags.slots;
      if (o_chan->count()) cfg.synth.channels = synth_flags.channels;
      validate_run_config(cfg);
      cmd_synth(cfg, out_dir, force, out);
    } else if (train->parsed()) {
      cmd_train(load_or_default(config_path), data_dir, out_dir, out);
    } else if (eval->parsed()) {
      cmd_eval(ckpt_path, data_dir, split, k, out_dir, out);
    } else if (predict->parsed()) {
      cmd_predict(ckpt_path, data_dir, slot, out_dir, out);
    } else if (bench->parsed()) {
      cmd_bench(load_or_default(config_path), out_dir, out);
    } else if (inspect->parsed()) {
      cmd_inspect(ckpt_path, out);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace riskcast
