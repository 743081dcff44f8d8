#include "riskcast/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "riskcast/rng.hpp"

namespace riskcast {
namespace {

constexpr int kArchHub = 0;
constexpr int kArchCommuter = 1;
constexpr int kArchResidential = 2;

// Events per slot before profile scaling; hub > commuter > residential is
// the spatial heterogeneity the generator promises.
constexpr double kBaseRate[3] = {8.0, 4.0, 2.0};

double circular_bump(double hour, double center, double sigma) {
  double dist = std::fabs(hour - center);
  dist = std::min(dist, 24.0 - dist);
  return std::exp(-(dist * dist) / (2.0 * sigma * sigma));
}

// Daily rate profile per archetype: hubs peak midday, commuters at rush
// hours, residential areas mildly in the evening.
double daily_profile(int arch, double hour) {
  switch (arch) {
    case kArchHub:
      return 0.4 + 0.6 * circular_bump(hour, 12.0, 5.0);
    case kArchCommuter:
      return 0.25 + 0.9 * (circular_bump(hour, 8.0, 2.0) + circular_bump(hour, 18.0, 2.0));
    default:
      return 0.5 + 0.3 * circular_bump(hour, 20.0, 3.0);
  }
}

// Weekend factor; commuter traffic collapses, residential rises a little.
double weekly_factor(int arch, std::size_t day_of_week) {
  const bool weekend = day_of_week >= 5;
  if (!weekend) return 1.0;
  switch (arch) {
    case kArchHub: return 0.8;
    case kArchCommuter: return 0.35;
    default: return 1.1;
  }
}

double event_rate(int arch, double scale, std::size_t slot, double phase) {
  const double hour = std::fmod(static_cast<double>(slot % 24) + phase + 24.0, 24.0);
  const std::size_t day = (slot / 24) % 7;
  double lambda = kBaseRate[arch] * daily_profile(arch, hour) * weekly_factor(arch, day) * scale;
  return std::min(lambda, 16.0);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void io_fail(const std::string& what) { throw std::runtime_error(what); }

}  // namespace

Tensor rasterize_events(const std::vector<EventRecord>& events, const CityGrid& grid,
                        std::size_t num_slots) {
  require(grid.rows >= 1 && grid.cols >= 1, "grid must have at least one cell");
  Tensor out({num_slots, grid.regions()});
  for (std::size_t i = 0; i < events.size(); ++i) {
    const EventRecord& e = events[i];
    const std::string where = "event " + std::to_string(i);
    require(e.slot < num_slots, where + ": slot " + std::to_string(e.slot) + " out of range");
    require(e.row < grid.rows, where + ": row " + std::to_string(e.row) + " out of range");
    require(e.col < grid.cols, where + ": col " + std::to_string(e.col) + " out of range");
    require(e.severity >= 1 && e.severity <= 3,
            where + ": severity " + std::to_string(e.severity) + " out of range");
    out.at2(e.slot, e.row * grid.cols + e.col) += static_cast<double>(e.severity);
  }
  return out;
}

NormStats compute_norm_stats(const Tensor& features, std::size_t slot_begin,
                             std::size_t slot_end) {
  require(features.rank() == 3, "features must be {slots, N, d}");
  require(slot_begin < slot_end && slot_end <= features.dim(0),
          "normalization slot range invalid");
  const std::size_t n = features.dim(1), d = features.dim(2);
  NormStats st;
  st.lo.assign(d, 0.0);
  st.hi.assign(d, 0.0);
  st.degenerate.assign(d, 0);
  for (std::size_t c = 0; c < d; ++c) {
    double lo = features.at3(slot_begin, 0, c), hi = lo;
    for (std::size_t t = slot_begin; t < slot_end; ++t)
      for (std::size_t r = 0; r < n; ++r) {
        const double v = features.at3(t, r, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    st.lo[c] = lo;
    st.hi[c] = hi;
    st.degenerate[c] = (hi == lo) ? 1 : 0;
  }
  return st;
}

double normalize_value(const NormStats& st, std::size_t channel, double x) {
  require(channel < st.channels(), "normalize channel out of range");
  if (st.degenerate[channel]) return 0.0;
  return (x - st.lo[channel]) / (st.hi[channel] - st.lo[channel]);
}

double denormalize_value(const NormStats& st, std::size_t channel, double x) {
  require(channel < st.channels(), "denormalize channel out of range");
  if (st.degenerate[channel]) return st.lo[channel];
  return st.lo[channel] + x * (st.hi[channel] - st.lo[channel]);
}

Tensor apply_normalization(const Tensor& features, const NormStats& st) {
  require(features.rank() == 3, "features must be {slots, N, d}");
  require(features.dim(2) == st.channels(), "normalization channel count mismatch");
  Tensor out(features.shape());
  for (std::size_t t = 0; t < features.dim(0); ++t)
    for (std::size_t r = 0; r < features.dim(1); ++r)
      for (std::size_t c = 0; c < features.dim(2); ++c)
        out.at3(t, r, c) = normalize_value(st, c, features.at3(t, r, c));
  return out;
}

std::vector<SampleWindow> build_windows(std::size_t num_slots, const WindowConfig& cfg) {
  require(cfg.recent + cfg.weekly >= 1, "window must cover at least one slot");
  require(cfg.weekly == 0 || cfg.slots_per_week >= 1, "slots_per_week must be positive");
  const std::size_t horizon = cfg.weekly * cfg.slots_per_week;
  const std::size_t first = std::max(cfg.recent, horizon);
  if (num_slots <= first)
    throw std::invalid_argument(
        "series too short for the window: need more than " + std::to_string(first) +
        " slots, have " + std::to_string(num_slots));
  std::vector<SampleWindow> out;
  out.reserve(num_slots - first);
  for (std::size_t t = first; t < num_slots; ++t) {
    SampleWindow w;
    w.target = t;
    for (std::size_t k = cfg.weekly; k >= 1; --k)
      w.inputs.push_back(t - k * cfg.slots_per_week);
    for (std::size_t r = cfg.recent; r >= 1; --r) w.inputs.push_back(t - r);
    out.push_back(std::move(w));
  }
  return out;
}

SplitSizes split_sizes(std::size_t n) {
  require(n >= 5, "need at least 5 samples to split 6:2:2");
  SplitSizes s;
  s.train = n * 6 / 10;
  s.val = n * 2 / 10;
  s.test = n - s.train - s.val;
  return s;
}

SynthCity synth_city(std::uint64_t seed, std::size_t rows, std::size_t cols,
                     std::size_t num_slots, std::size_t d) {
  require(rows >= 1 && cols >= 1, "grid must have at least one cell");
  require(rows * cols <= 400, "synthetic grid capped at 400 regions");
  require(num_slots >= 1 && num_slots <= 10000, "synthetic slots capped at 10000");
  require(d >= 1 && d <= 8, "synthetic channel count must be 1..8");

  SynthCity city;
  city.grid = CityGrid{rows, cols, 2.0};
  city.seed = seed;
  city.slots = num_slots;
  city.channels = d;
  const std::size_t n = city.grid.regions();

  SplitMix64 arch_rng = substream(seed, StreamTag::SynthArch, 0);
  city.archetype.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double u = arch_rng.uniform();
    city.archetype[r] = u < 0.15 ? kArchHub : (u < 0.55 ? kArchCommuter : kArchResidential);
  }

  std::vector<double> scale(n);
  std::vector<double> phase(n);
  for (std::size_t r = 0; r < n; ++r) {
    SplitMix64 rng = substream(seed, StreamTag::SynthRates, r);
    scale[r] = std::exp(0.2 * rng.normal());
    phase[r] = rng.uniform(-1.5, 1.5);
  }

  city.features = Tensor({num_slots, n, d});
  for (std::size_t r = 0; r < n; ++r) {
    SplitMix64 rng = substream(seed, StreamTag::SynthEvents, r);
    const int arch = city.archetype[r];
    for (std::size_t t = 0; t < num_slots; ++t) {
      const int count = rng.poisson(event_rate(arch, scale[r], t, phase[r]));
      for (int e = 0; e < count; ++e) {
        const double u = rng.uniform();
        EventRecord rec;
        rec.slot = t;
        rec.row = r / cols;
        rec.col = r % cols;
        rec.severity = u < 0.6 ? 1 : (u < 0.9 ? 2 : 3);
        city.events.push_back(rec);
      }
    }
  }
  // Activity channels: rate proxies shifted by 4c hours with mild noise,
  // drawn from substreams disjoint from the event streams.
  for (std::size_t c = 1; c < d; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      SplitMix64 rng = substream(seed, StreamTag::SynthEvents, c * n + r);
      const int arch = city.archetype[r];
      for (std::size_t t = 0; t < num_slots; ++t) {
        const double base =
            event_rate(arch, scale[r], t, phase[r] + 4.0 * static_cast<double>(c));
        city.features.at3(t, r, c) = base * (1.0 + 0.1 * rng.normal());
      }
    }
  }

  std::stable_sort(city.events.begin(), city.events.end(),
                   [](const EventRecord& a, const EventRecord& b) {
                     if (a.slot != b.slot) return a.slot < b.slot;
                     if (a.row != b.row) return a.row < b.row;
                     return a.col < b.col;
                   });
  Tensor risk = rasterize_events(city.events, city.grid, num_slots);
  for (std::size_t t = 0; t < num_slots; ++t)
    for (std::size_t r = 0; r < n; ++r) city.features.at3(t, r, 0) = risk.at2(t, r);
  return city;
}

void write_events_csv(const std::string& path, const std::vector<EventRecord>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail("cannot open for writing: " + path);
  out << "slot,row,col,severity\n";
  for (const EventRecord& e : events)
    out << e.slot << ',' << e.row << ',' << e.col << ',' << e.severity << '\n';
  if (!out) io_fail("write failed: " + path);
}

std::vector<EventRecord> read_events_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "slot,row,col,severity")
    io_fail(path + ": bad or missing header");
  std::vector<EventRecord> events;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EventRecord e;
    unsigned long long slot = 0, row = 0, col = 0;
    int sev = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%d", &slot, &row, &col, &sev) != 4)
      io_fail(path + ":" + std::to_string(lineno) + ": malformed event row");
    e.slot = slot;
    e.row = row;
    e.col = col;
    e.severity = sev;
    events.push_back(e);
  }
  return events;
}

void write_overlay_csv(const std::string& path, const Tensor& features,
                       const CityGrid& grid) {
  require(features.rank() == 3, "overlay features must be {slots, N, d}");
  require(features.dim(1) == grid.regions(), "overlay region count mismatch");
  require(features.dim(2) >= 2, "overlay needs at least one channel beyond risk");
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail("cannot open for writing: " + path);
  out << "slot,row,col,channel,value\n";
  for (std::size_t t = 0; t < features.dim(0); ++t)
    for (std::size_t r = 0; r < features.dim(1); ++r)
      for (std::size_t c = 1; c < features.dim(2); ++c)
        out << t << ',' << r / grid.cols << ',' << r % grid.cols << ',' << c << ','
            << format_double(features.at3(t, r, c)) << '\n';
  if (!out) io_fail("write failed: " + path);
}

void apply_overlay_csv(const std::string& path, Tensor& features, const CityGrid& grid) {
  require(features.rank() == 3, "overlay features must be {slots, N, d}");
  require(features.dim(1) == grid.regions(), "overlay region count mismatch");
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "slot,row,col,channel,value")
    io_fail(path + ": bad or missing header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    unsigned long long slot = 0, row = 0, col = 0, channel = 0;
    double value = 0.0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%llu,%lf", &slot, &row, &col, &channel,
                    &value) != 5)
      io_fail(path + ":" + std::to_string(lineno) + ": malformed overlay row");
    const std::string where = path + ":" + std::to_string(lineno);
    require(slot < features.dim(0), where + ": slot out of range");
    require(row < grid.rows && col < grid.cols, where + ": cell out of range");
    require(channel >= 1 && channel < features.dim(2), where + ": channel out of range");
    features.at3(slot, row * grid.cols + col, channel) = value;
  }
}

void write_meta_json(const std::string& path, const CityMeta& meta) {
  nlohmann::json j;
  j["rows"] = meta.grid.rows;
  j["cols"] = meta.grid.cols;
  j["cell_km"] = meta.grid.cell_km;
  j["seed"] = meta.seed;
  j["slots"] = meta.slots;
  j["channels"] = meta.channels;
  j["slot_hours"] = meta.slot_hours;
  j["archetype"] = meta.archetype;
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) io_fail("write failed: " + path);
}

CityMeta read_meta_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    io_fail(path + ": invalid JSON: " + e.what());
  }
  CityMeta meta;
  try {
    meta.grid.rows = j.at("rows").get<std::size_t>();
    meta.grid.cols = j.at("cols").get<std::size_t>();
    meta.grid.cell_km = j.at("cell_km").get<double>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.slots = j.at("slots").get<std::size_t>();
    meta.channels = j.at("channels").get<std::size_t>();
    meta.slot_hours = j.at("slot_hours").get<double>();
    meta.archetype = j.at("archetype").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    io_fail(path + ": missing or mistyped field: " + e.what());
  }
  require(meta.grid.rows >= 1 && meta.grid.cols >= 1, path + ": invalid grid dims");
  return meta;
}

void save_city(const std::string& dir, const SynthCity& city) {
  std::filesystem::create_directories(dir);
  CityMeta meta;
  meta.grid = city.grid;
  meta.seed = city.seed;
  meta.slots = city.slots;
  meta.channels = city.channels;
  meta.archetype = city.archetype;
  write_meta_json(dir + "/meta.json", meta);
  write_events_csv(dir + "/events.csv", city.events);
  if (city.channels > 1) write_overlay_csv(dir + "/overlay.csv", city.features, city.grid);
}

CityData load_city(const std::string& dir) {
  CityData data;
  data.meta = read_meta_json(dir + "/meta.json");
  std::vector<EventRecord> events = read_events_csv(dir + "/events.csv");
  Tensor risk = rasterize_events(events, data.meta.grid, data.meta.slots);
  data.features = Tensor({data.meta.slots, data.meta.grid.regions(), data.meta.channels});
  for (std::size_t t = 0; t < data.meta.slots; ++t)
    for (std::size_t r = 0; r < data.meta.grid.regions(); ++r)
      data.features.at3(t, r, 0) = risk.at2(t, r);
  if (data.meta.channels > 1)
    apply_overlay_csv(dir + "/overlay.csv", data.features, data.meta.grid);
  return data;
}

}  // namespace riskcast
