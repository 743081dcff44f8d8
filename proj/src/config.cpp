#include "riskcast/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace riskcast {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok)
      throw std::invalid_argument(
          "unknown config key: " +
          (section.empty() ? item.key() : section + "." + item.key()));
  }
}

// Reads j[key] into out when present; type errors name the full path.
template <typename T>
void read_field(const json& j, const std::string& section, const char* key,
                T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config field " + section + "." + key + ": " +
                                e.what());
  }
}

}  // namespace

void validate_run_config(const RunConfig& cfg) {
  validate_train_config(cfg.train);
  require(cfg.metrics.k >= 1, "metrics.k must be at least 1");
  require(cfg.synth.rows >= 1 && cfg.synth.cols >= 1,
          "synth grid dims must be positive");
  require(cfg.synth.slots >= 1, "synth.slots must be positive");
  require(cfg.synth.channels >= 1 && cfg.synth.channels <= 8,
          "synth.channels must be in 1..8");
  require(cfg.bench.d_model >= 1 && cfg.bench.batch >= 1,
          "bench shape dims must be positive");
  require(cfg.bench.degree >= 0, "bench.degree must be non-negative");
  require(cfg.bench.basis_count >= cfg.bench.degree + 1,
          "bench.basis_count must be at least degree + 1");
  require(cfg.bench.repeats >= 1, "bench.repeats must be at least 1");
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  check_keys(j, "", {"model", "window", "augment", "train", "synth", "metrics",
                     "bench"});

  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"d_model", "d_state", "conv_width", "layers",
                            "spline_degree", "basis_count", "clusters"});
    read_field(m, "model", "d_model", cfg.train.model.d_model);
    read_field(m, "model", "d_state", cfg.train.model.d_state);
    read_field(m, "model", "conv_width", cfg.train.model.conv_width);
    read_field(m, "model", "layers", cfg.train.model.layers);
    read_field(m, "model", "spline_degree", cfg.train.model.spline_degree);
    read_field(m, "model", "basis_count", cfg.train.model.basis_count);
    read_field(m, "model", "clusters", cfg.train.model.clusters);
  }
  if (j.contains("window")) {
    const json& w = j.at("window");
    check_keys(w, "window", {"recent", "weekly", "slots_per_week"});
    read_field(w, "window", "recent", cfg.train.window.recent);
    read_field(w, "window", "weekly", cfg.train.window.weekly);
    read_field(w, "window", "slots_per_week", cfg.train.window.slots_per_week);
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    check_keys(a, "augment", {"feature_rate", "graph_rate", "magnitude_scale"});
    read_field(a, "augment", "feature_rate", cfg.train.augment.feature_rate);
    read_field(a, "augment", "graph_rate", cfg.train.augment.graph_rate);
    read_field(a, "augment", "magnitude_scale",
               cfg.train.augment.magnitude_scale);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"tau", "batch", "max_epochs", "patience", "lr", "beta1",
                "beta2", "eps", "seed", "lambda1", "lambda2", "lambda3",
                "lambda4", "levels", "dwa", "dwa_temp"});
    read_field(t, "train", "tau", cfg.train.tau);
    read_field(t, "train", "batch", cfg.train.batch);
    read_field(t, "train", "max_epochs", cfg.train.max_epochs);
    read_field(t, "train", "patience", cfg.train.patience);
    read_field(t, "train", "lr", cfg.train.adam.lr);
    read_field(t, "train", "beta1", cfg.train.adam.beta1);
    read_field(t, "train", "beta2", cfg.train.adam.beta2);
    read_field(t, "train", "eps", cfg.train.adam.eps);
    read_field(t, "train", "seed", cfg.train.seed);
    read_field(t, "train", "lambda1", cfg.train.weights.lambda1);
    read_field(t, "train", "lambda2", cfg.train.weights.lambda2);
    read_field(t, "train", "lambda3", cfg.train.weights.lambda3);
    read_field(t, "train", "lambda4", cfg.train.weights.lambda4);
    if (t.contains("levels")) {
      std::vector<double> lv;
      read_field(t, "train", "levels", lv);
      if (lv.size() != 4)
        throw std::invalid_argument(
            "config field train.levels: expected 4 weights");
      cfg.train.levels = {lv[0], lv[1], lv[2], lv[3]};
    }
    read_field(t, "train", "dwa", cfg.train.dwa);
    read_field(t, "train", "dwa_temp", cfg.train.dwa_temp);
  }
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_keys(s, "synth", {"seed", "rows", "cols", "slots", "channels"});
    read_field(s, "synth", "seed", cfg.synth.seed);
    read_field(s, "synth", "rows", cfg.synth.rows);
    read_field(s, "synth", "cols", cfg.synth.cols);
    read_field(s, "synth", "slots", cfg.synth.slots);
    read_field(s, "synth", "channels", cfg.synth.channels);
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, "metrics", {"k"});
    read_field(m, "metrics", "k", cfg.metrics.k);
  }
  if (j.contains("bench")) {
    const json& b = j.at("bench");
    check_keys(b, "bench", {"d_model", "batch", "basis_count", "degree",
                            "repeats", "warmup", "seed"});
    read_field(b, "bench", "d_model", cfg.bench.d_model);
    read_field(b, "bench", "batch", cfg.bench.batch);
    read_field(b, "bench", "basis_count", cfg.bench.basis_count);
    read_field(b, "bench", "degree", cfg.bench.degree);
    read_field(b, "bench", "repeats", cfg.bench.repeats);
    read_field(b, "bench", "warmup", cfg.bench.warmup);
    read_field(b, "bench", "seed", cfg.bench.seed);
  }

  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["model"] = {{"d_model", cfg.train.model.d_model},
                {"d_state", cfg.train.model.d_state},
                {"conv_width", cfg.train.model.conv_width},
                {"layers", cfg.train.model.layers},
                {"spline_degree", cfg.train.model.spline_degree},
                {"basis_count", cfg.train.model.basis_count},
                {"clusters", cfg.train.model.clusters}};
  j["window"] = {{"recent", cfg.train.window.recent},
                 {"weekly", cfg.train.window.weekly},
                 {"slots_per_week", cfg.train.window.slots_per_week}};
  j["augment"] = {{"feature_rate", cfg.train.augment.feature_rate},
                  {"graph_rate", cfg.train.augment.graph_rate},
                  {"magnitude_scale", cfg.train.augment.magnitude_scale}};
  j["train"] = {{"tau", cfg.train.tau},
                {"batch", cfg.train.batch},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},
                {"lr", cfg.train.adam.lr},
                {"beta1", cfg.train.adam.beta1},
                {"beta2", cfg.train.adam.beta2},
                {"eps", cfg.train.adam.eps},
                {"seed", cfg.train.seed},
                {"lambda1", cfg.train.weights.lambda1},
                {"lambda2", cfg.train.weights.lambda2},
                {"lambda3", cfg.train.weights.lambda3},
                {"lambda4", cfg.train.weights.lambda4},
                {"levels", {cfg.train.levels.w0, cfg.train.levels.w1,
                            cfg.train.levels.w2, cfg.train.levels.w3}},
                {"dwa", cfg.train.dwa},
                {"dwa_temp", cfg.train.dwa_temp}};
  j["synth"] = {{"seed", cfg.synth.seed},
                {"rows", cfg.synth.rows},
                {"cols", cfg.synth.cols},
                {"slots", cfg.synth.slots},
                {"channels", cfg.synth.channels}};
  j["metrics"] = {{"k", cfg.metrics.k}};
  j["bench"] = {{"d_model", cfg.bench.d_model},
                {"batch", cfg.bench.batch},
                {"basis_count", cfg.bench.basis_count},
                {"degree", cfg.bench.degree},
                {"repeats", cfg.bench.repeats},
                {"warmup", cfg.bench.warmup},
                {"seed", cfg.bench.seed}};
  std::string out = j.dump(2);
  out.push_back('\n');
  return out;
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << dump_run_config(cfg);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskcast
