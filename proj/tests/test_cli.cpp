#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskcast/cli.hpp"
#include "riskcast/config.hpp"
#include "riskcast/train.hpp"

using namespace riskcast;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int rc = 0;
  std::string out, err;
};

CliResult run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("riskcast");
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

// Shared workspace: one synthetic city and one trained run, built once.
struct Workspace {
  fs::path base;
  std::string city, rundir, config;

  Workspace() {
    base = fs::temp_directory_path() / "riskcast_cli_test";
    fs::remove_all(base);
    fs::create_directories(base);
    city = (base / "city").string();
    rundir = (base / "run").string();
    config = (base / "small.json").string();

    RunConfig cfg;
    cfg.train.model.d_model = 4;
    cfg.train.model.d_state = 2;
    cfg.train.model.conv_width = 2;
    cfg.train.model.layers = 1;
    cfg.train.model.spline_degree = 2;
    cfg.train.model.basis_count = 4;
    cfg.train.model.clusters = 2;
    cfg.train.window.recent = 2;
    cfg.train.window.weekly = 1;
    cfg.train.window.slots_per_week = 24;
    cfg.train.max_epochs = 3;
    cfg.train.seed = 5;
    cfg.synth.seed = 9;
    cfg.synth.rows = 2;
    cfg.synth.cols = 4;
    cfg.synth.slots = 60;
    cfg.synth.channels = 2;
    write_run_config(config, cfg);

    REQUIRE(run({"synth", "--config", config, "--out", city}).rc == 0);
    REQUIRE(run({"train", "--config", config, "--data", city, "--out", rundir})
                .rc == 0);
  }
  ~Workspace() { fs::remove_all(base); }

  std::string ckpt() const { return rundir + "/checkpoint.bin"; }
  std::string dir(const std::string& name) const {
    return (base / name).string();
  }
};

const Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const CliResult help = run({"--help"});
  CHECK(help.rc == 0);
  CHECK(help.out.find("synth") != std::string::npos);
  CHECK(help.out.find("Exit codes") != std::string::npos);

  CHECK(run({}).rc == 2);
  CHECK(run({"frobnicate"}).rc == 2);
  CHECK(run({"synth"}).rc == 2);  // --out is required
  CHECK(run({"eval", "--checkpoint", "x", "--data", "y", "--split", "bogus",
             "--out", "z"})
            .rc == 2);
}

TEST_CASE("synth writes a city with a config echo") {
  const Workspace& w = ws();
  for (const char* name : {"events.csv", "meta.json", "overlay.csv",
                           "config.json"})
    CHECK(fs::exists(fs::path(w.city) / name));
  // The echo is a valid effective config carrying the synth parameters.
  const RunConfig echo = load_run_config(w.city + "/config.json");
  CHECK(echo.synth.rows == 2);
  CHECK(echo.synth.cols == 4);
  CHECK(echo.synth.slots == 60);
  const CityMeta meta = read_meta_json(w.city + "/meta.json");
  CHECK(meta.grid.rows == 2);
  CHECK(meta.slots == 60);
}

TEST_CASE("synth is deterministic and respects flag overrides") {
  const Workspace& w = ws();
  const std::string again = w.dir("city_again");
  CHECK(run({"synth", "--config", w.config, "--out", again}).rc == 0);
  for (const char* name : {"events.csv", "meta.json", "overlay.csv",
                           "config.json"})
    CHECK(slurp(w.city + "/" + name) == slurp(again + "/" + name));

  // Flags win over the config file.
  const std::string flagged = w.dir("city_flagged");
  CHECK(run({"synth", "--config", w.config, "--rows", "3", "--out", flagged})
            .rc == 0);
  CHECK(read_meta_json(flagged + "/meta.json").grid.rows == 3);
  CHECK(load_run_config(flagged + "/config.json").synth.rows == 3);
}

TEST_CASE("synth refuses a non-empty output directory") {
  const Workspace& w = ws();
  const CliResult clash = run({"synth", "--config", w.config, "--out", w.city});
  CHECK(clash.rc == 3);
  CHECK(clash.err.find("--force") != std::string::npos);
  CHECK(run({"synth", "--config", w.config, "--out", w.city, "--force"}).rc ==
        0);
  CHECK(run({"synth", "--rows", "0", "--out", w.dir("bad")}).rc == 2);
}

TEST_CASE("train writes checkpoint, history and echo") {
  const Workspace& w = ws();
  CHECK(fs::exists(w.ckpt()));
  CHECK(fs::exists(fs::path(w.rundir) / "config.json"));
  const std::string hist = slurp(w.rundir + "/history.csv");
  CHECK(hist.rfind("epoch,lp,lrec,lkm,lt,joint,val_lp\n", 0) == 0);
  CHECK(line_count(hist) == 4);  // header + 3 epochs

  CHECK(run({"train", "--config", w.dir("nope.json"), "--data", w.city,
             "--out", w.dir("r2")})
            .rc == 3);
  CHECK(run({"train", "--config", w.config, "--data", w.dir("nocity"),
             "--out", w.dir("r3")})
            .rc == 3);

  std::ofstream bad(w.dir("bad.json"));
  bad << R"({"train": {"learning_rate": 1}})";
  bad.close();
  const CliResult r = run({"train", "--config", w.dir("bad.json"), "--data",
                           w.city, "--out", w.dir("r4")});
  CHECK(r.rc == 2);
  CHECK(r.err.find("train.learning_rate") != std::string::npos);
}

TEST_CASE("eval writes the metrics report") {
  const Workspace& w = ws();
  const std::string dir = w.dir("evaldir");
  const CliResult r = run({"eval", "--checkpoint", w.ckpt(), "--data", w.city,
                           "--split", "val", "--k", "3", "--out", dir});
  CHECK(r.rc == 0);
  CHECK(r.out.find("rmse ") != std::string::npos);
  CHECK(fs::exists(fs::path(dir) / "config.json"));

  const std::string report = slurp(dir + "/metrics.txt");
  double rm = -1, rec = -1, mp = -1;
  REQUIRE(std::sscanf(report.c_str(), "rmse %lf\nrecall_at_3 %lf\nmap_at_3 %lf",
                      &rm, &rec, &mp) == 3);
  CHECK(std::isfinite(rm));
  CHECK(rm > 0.0);
  CHECK(rec >= 0.0);
  CHECK(rec <= 1.0);
  CHECK(mp >= 0.0);
  CHECK(mp <= 1.0);
  CHECK(load_run_config(dir + "/config.json").metrics.k == 3);

  CHECK(run({"eval", "--checkpoint", w.dir("missing.bin"), "--data", w.city,
             "--out", w.dir("e2")})
            .rc == 3);
}

TEST_CASE("predict writes the grid-shaped risk map") {
  const Workspace& w = ws();
  const std::string dir = w.dir("preddir");
  CHECK(run({"predict", "--checkpoint", w.ckpt(), "--data", w.city, "--slot",
             "59", "--out", dir})
            .rc == 0);
  const std::string csv = slurp(dir + "/risk_map.csv");
  CHECK(fs::exists(fs::path(dir) / "config.json"));

  // Shape must match the meta document: 2 rows of 4 finite values.
  std::istringstream in(csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::size_t fields = 1;
    for (char c : line)
      if (c == ',') ++fields;
    CHECK(fields == 4);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double v;
    while (ls >> v) CHECK(std::isfinite(v));
  }
  CHECK(rows == 2);

  const std::string dir2 = w.dir("preddir2");
  CHECK(run({"predict", "--checkpoint", w.ckpt(), "--data", w.city, "--slot",
             "59", "--out", dir2})
            .rc == 0);
  CHECK(slurp(dir2 + "/risk_map.csv") == csv);

  // Slot 3 precedes the first complete window.
  CHECK(run({"predict", "--checkpoint", w.ckpt(), "--data", w.city, "--slot",
             "3", "--out", w.dir("p3")})
            .rc == 2);
}

TEST_CASE("inspect prints checkpoint metadata") {
  const Workspace& w = ws();
  const CliResult r = run({"inspect", "--checkpoint", w.ckpt()});
  CHECK(r.rc == 0);
  CHECK(r.out.find("\"d_model\": 4") != std::string::npos);
  CHECK(r.out.find("parameters 403") != std::string::npos);
  CHECK(r.out.find("epochs_done 3") != std::string::npos);
  CHECK(r.out.find("done true") != std::string::npos);
}

TEST_CASE("bench command writes csv and echo") {
  const Workspace& w = ws();
  std::ofstream cfg(w.dir("bench.json"));
  cfg << R"({"bench": {"d_model": 24, "batch": 4, "basis_count": 5,
             "degree": 2, "repeats": 2, "warmup": 1}})";
  cfg.close();
  const std::string dir = w.dir("benchdir");
  const CliResult r =
      run({"bench", "--config", w.dir("bench.json"), "--out", dir});
  CHECK(r.rc == 0);
  CHECK(r.out.rfind("variant,metric,value\n", 0) == 0);
  const std::string csv = slurp(dir + "/bench.csv");
  CHECK(csv == r.out);
  CHECK(csv.find("meta,threads,1") != std::string::npos);
  CHECK(fs::exists(fs::path(dir) / "config.json"));
}

TEST_CASE("divergent training exits with code 4") {
  const Workspace& w = ws();
  RunConfig cfg = load_run_config(w.config);
  cfg.train.adam.lr = 1e160;
  cfg.train.batch = 8;
  write_run_config(w.dir("diverge.json"), cfg);
  const CliResult r = run({"train", "--config", w.dir("diverge.json"),
                           "--data", w.city, "--out", w.dir("divrun")});
  CHECK(r.rc == 4);
  CHECK(r.err.find("diverged") != std::string::npos);
}

TEST_CASE("zero-init eval matches the tie-break baseline") {
  const Workspace& w = ws();
  const RunConfig rc = load_run_config(w.config);
  const CityData data = load_city(w.city);
  WindowDataset ds = make_dataset(data, rc.train.window);
  const SplitSizes split = ds.split;
  const std::size_t n = ds.grid.regions();

  // A constant-zero predictor: zero head, lr 0 so the best snapshot
  // keeps it.
  TrainConfig tcfg = rc.train;
  tcfg.adam.lr = 0.0;
  tcfg.max_epochs = 1;
  Trainer tr(std::move(ds), tcfg);
  for (const char* p : {"head.w1", "head.b1", "head.w2", "head.b2"})
    tr.params().get(p).value.fill(0.0);
  tr.epoch();
  const std::string ckpt = w.dir("zero.ckpt");
  save_checkpoint(ckpt, tr.to_checkpoint());

  const std::size_t k = 3;
  const std::string dir = w.dir("zeroeval");
  REQUIRE(run({"eval", "--checkpoint", ckpt, "--data", w.city, "--split",
               "val", "--k", std::to_string(k), "--out", dir})
              .rc == 0);
  const std::string report = slurp(dir + "/metrics.txt");
  double rm = -1, rec = -1, mp = -1;
  REQUIRE(std::sscanf(report.c_str(), "rmse %lf\nrecall_at_3 %lf\nmap_at_3 %lf",
                      &rm, &rec, &mp) == 3);

  // All scores tie, so the tie-break ranks regions 0..k-1 first in every
  // window. A region is relevant when its true risk is positive.
  const WindowDataset& dsr = tr.dataset();
  double sq = 0.0, recall_sum = 0.0, ap_sum = 0.0;
  for (std::size_t v = 0; v < split.val; ++v) {
    const std::size_t target = dsr.windows[split.train + v].target;
    const double* truth = dsr.risk_raw.data() + target * n;
    for (std::size_t r = 0; r < n; ++r) sq += truth[r] * truth[r];
    std::size_t hits = 0;
    double ap = 0.0;
    for (std::size_t j = 0; j < k; ++j) {  // predicted ranking is 0,1,2,...
      if (truth[j] > 0.0) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(j + 1);
      }
    }
    recall_sum += static_cast<double>(hits) / static_cast<double>(k);
    ap_sum += ap / static_cast<double>(k);
  }
  const double expect_rmse =
      std::sqrt(sq / static_cast<double>(split.val * n));
  CHECK(rm == doctest::Approx(expect_rmse).epsilon(1e-12));
  CHECK(rec == doctest::Approx(recall_sum / split.val).epsilon(1e-12));
  CHECK(mp == doctest::Approx(ap_sum / split.val).epsilon(1e-12));
}

TEST_CASE("the installed binary round-trips flags and exit codes") {
  const Workspace& w = ws();
  const std::string bin = RISKCAST_CLI_PATH;
  REQUIRE(fs::exists(bin));
  auto shell = [&](const std::string& args) {
    const int raw =
        std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(shell("--help") == 0);
  CHECK(shell("") == 2);
  CHECK(shell("synth --rows 0 --out " + w.dir("sub_bad")) == 2);
  CHECK(shell("synth --config " + w.config + " --out " + w.dir("sub_city")) ==
        0);
  CHECK(slurp(w.dir("sub_city") + "/events.csv") ==
        slurp(w.city + "/events.csv"));
  CHECK(shell("inspect --checkpoint " + w.ckpt()) == 0);
  CHECK(shell("inspect --checkpoint " + w.dir("absent.bin")) == 3);
}
