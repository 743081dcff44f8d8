#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "riskcast/tensor.hpp"

// City grids, event rasterization, normalization, sliding windows,
// chronological splits, the synthetic city generator, and the on-disk
// formats (events.csv, overlay.csv, meta.json).
//
// Region index n = row * cols + col. Feature tensors are {slots, N, d}
// with channel 0 holding the risk map; further channels are activity
// overlays.
namespace riskcast {

struct CityGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;
  double cell_km = 2.0;
  std::size_t regions() const { return rows * cols; }
};

struct EventRecord {
  std::size_t slot = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  int severity = 1;  // 1 minor, 2 injury, 3 fatal
};

// Risk maps: out[t, n] = sum of severities of slot-t events in region n.
// Throws naming the offending record on out-of-range fields.
Tensor rasterize_events(const std::vector<EventRecord>& events, const CityGrid& grid,
                        std::size_t num_slots);

// Per-channel min/max taken over slots [slot_begin, slot_end) of a
// {slots, N, d} tensor. Channels with max == min are flagged degenerate
// and normalize to 0.
struct NormStats {
  std::vector<double> lo, hi;
  std::vector<std::uint8_t> degenerate;
  std::size_t channels() const { return lo.size(); }
};
NormStats compute_norm_stats(const Tensor& features, std::size_t slot_begin,
                             std::size_t slot_end);
double normalize_value(const NormStats& st, std::size_t channel, double x);
double denormalize_value(const NormStats& st, std::size_t channel, double x);
// Returns the normalized copy of a {slots, N, d} tensor.
Tensor apply_normalization(const Tensor& features, const NormStats& st);

struct WindowConfig {
  std::size_t recent = 3;        // rho
  std::size_t weekly = 4;        // kappa
  std::size_t slots_per_week = 168;
  std::size_t window_len() const { return recent + weekly; }
};

// Input slots ordered oldest to newest: the kappa weekly lookbacks
// target - k*slots_per_week (k descending), then the rho most recent.
struct SampleWindow {
  std::vector<std::size_t> inputs;
  std::size_t target = 0;
};
std::vector<SampleWindow> build_windows(std::size_t num_slots, const WindowConfig& cfg);

// Chronological 6:2:2 block split: floor(0.6n), floor(0.2n), remainder.
struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t n);

// Deterministic synthetic city. Regions draw an archetype (hub 0,
// commuter 1, residential 2) with daily and weekly periodic event rates
// so spatial and temporal heterogeneity genuinely exist. Channel 0 is the
// rasterized risk; channels >= 1 are phase-shifted activity proxies.
struct SynthCity {
  CityGrid grid;
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  std::size_t channels = 1;
  Tensor features;  // {slots, N, d}
  std::vector<EventRecord> events;
  std::vector<int> archetype;  // per region
};
SynthCity synth_city(std::uint64_t seed, std::size_t rows, std::size_t cols,
                     std::size_t num_slots, std::size_t d);

// On-disk formats. Events: CSV "slot,row,col,severity". Overlay: CSV
// "slot,row,col,channel,value" for channels >= 1. Meta: JSON document
// with grid dims, slots, channels, seed, slot_hours, archetypes.
void write_events_csv(const std::string& path, const std::vector<EventRecord>& events);
std::vector<EventRecord> read_events_csv(const std::string& path);

void write_overlay_csv(const std::string& path, const Tensor& features,
                       const CityGrid& grid);
void apply_overlay_csv(const std::string& path, Tensor& features, const CityGrid& grid);

struct CityMeta {
  CityGrid grid;
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  std::size_t channels = 1;
  double slot_hours = 1.0;
  std::vector<int> archetype;
};
void write_meta_json(const std::string& path, const CityMeta& meta);
CityMeta read_meta_json(const std::string& path);

// Writes events.csv, meta.json and, when channels > 1, overlay.csv.
void save_city(const std::string& dir, const SynthCity& city);

struct CityData {
  CityMeta meta;
  Tensor features;  // {slots, N, d} raw
};
CityData load_city(const std::string& dir);

}  // namespace riskcast
