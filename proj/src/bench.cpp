#include "riskcast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "riskcast/kernels.hpp"
#include "riskcast/rng.hpp"
#include "riskcast/tape.hpp"

namespace riskcast {

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

double checksum_of(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t.data()[i];
  return s;
}

struct Measured {
  double ms = 0.0;
  std::size_t peak_bytes = 0;
};

// Medians over repeats; peak is the transient above the live baseline,
// maxed over repeats.
Measured measure(const std::function<void()>& f, std::size_t repeats,
                 std::size_t warmup) {
  for (std::size_t i = 0; i < warmup; ++i) f();
  std::vector<double> times;
  times.reserve(repeats);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < repeats; ++i) {
    AllocStats::reset_peak();
    const std::size_t base = AllocStats::current_bytes();
    const double t0 = now_ms();
    f();
    const double t1 = now_ms();
    times.push_back(t1 - t0);
    peak = std::max(peak, AllocStats::peak_bytes() - base);
  }
  return {median(std::move(times)), peak};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double median(std::vector<double> v) {
  require(!v.empty(), "median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void require_equivalent(const Tensor& a, const Tensor& b, double tol) {
  if (!a.same_shape(b))
    throw std::runtime_error(
        "variant outputs differ in shape; benchmark invalid");
  double gap = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    gap = std::max(gap, std::abs(a.data()[i] - b.data()[i]));
  if (!(gap <= tol))
    throw std::runtime_error("variant outputs differ by " + fmt(gap) +
                             " (tol " + fmt(tol) + "); benchmark invalid");
}

KanStack bench_stack(const BenchConfig& cfg) {
  KanStack s;
  s.grid = make_spline_grid(cfg.degree, cfg.basis_count);
  SplitMix64 rng = substream(cfg.seed, StreamTag::Fixture, 0);
  s.layers.push_back(init_kan_layer(cfg.d_model, cfg.d_model, s.grid, rng));
  validate_stack(s);
  return s;
}

Tensor bench_input(const BenchConfig& cfg) {
  Tensor x({cfg.batch, cfg.d_model});
  SplitMix64 rng = substream(cfg.seed, StreamTag::Fixture, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1, 1);
  return x;
}

BenchReport run_bench(const BenchConfig& cfg) {
  const KanStack stack = bench_stack(cfg);
  const Tensor x = bench_input(cfg);
  const KanLayer& l = stack.layers[0];

  // Gate: time nothing unless the two KAN variants agree.
  require_equivalent(ekan_forward(stack, x), naive_kan_forward(stack, x),
                     1e-10);

  auto linear_forward = [&] {
    Tensor y({cfg.batch, cfg.d_model});
    for (std::size_t r = 0; r < cfg.batch; ++r)
      for (std::size_t c = 0; c < cfg.d_model; ++c)
        y.at2(r, c) = l.bias.data()[c];
    kernels::matmul_accum(x.data(), l.w_base.data(), y.data(), cfg.batch,
                          cfg.d_model, cfg.d_model);
    return y;
  };

  enum Kind { Ekan, Naive, Linear };
  auto train_pass = [&](Kind kind) {
    ad::Tape tp;
    const ad::Var xv = tp.leaf(x, false);
    const ad::Var wb = tp.leaf(l.w_base, true);
    const ad::Var ws = tp.leaf(l.w_spline, true);
    const ad::Var b = tp.leaf(l.bias, true);
    ad::Var y;
    switch (kind) {
      case Ekan: y = ekan_layer(xv, wb, ws, b, stack.grid); break;
      case Naive: y = naive_kan_layer(xv, wb, ws, b, stack.grid); break;
      case Linear: y = ad::add_row(ad::matmul(xv, wb), b); break;
    }
    tp.backward(ad::sum(y));
  };

  BenchReport rep;
  rep.cfg = cfg;
  rep.threads = 1;

  struct Spec {
    const char* name;
    Kind kind;
  };
  for (const Spec& spec : {Spec{"ekan", Ekan}, Spec{"naive", Naive},
                           Spec{"linear", Linear}}) {
    VariantStats vs;
    vs.name = spec.name;
    Tensor out;
    auto forward = [&] {
      switch (spec.kind) {
        case Ekan: out = ekan_forward(stack, x); break;
        case Naive: out = naive_kan_forward(stack, x); break;
        case Linear: out = linear_forward(); break;
      }
    };
    const Measured fwd = measure(forward, cfg.repeats, cfg.warmup);
    vs.forward_ms = fwd.ms;
    vs.forward_peak_bytes = fwd.peak_bytes;
    vs.checksum = checksum_of(out);
    const Measured trn =
        measure([&] { train_pass(spec.kind); }, cfg.repeats, cfg.warmup);
    vs.train_ms = trn.ms;
    vs.train_peak_bytes = trn.peak_bytes;
    rep.variants.push_back(vs);
  }

  const VariantStats& ek = rep.variants[0];
  const VariantStats& nv = rep.variants[1];
  rep.forward_time_ratio = nv.forward_ms / ek.forward_ms;
  rep.train_time_ratio = nv.train_ms / ek.train_ms;
  rep.forward_peak_ratio = static_cast<double>(nv.forward_peak_bytes) /
                           static_cast<double>(ek.forward_peak_bytes);
  return rep;
}

std::string bench_csv(const BenchReport& r) {
  std::string out = "variant,metric,value\n";
  auto row = [&out](const std::string& v, const std::string& m,
                    const std::string& val) {
    out += v + "," + m + "," + val + "\n";
  };
  row("meta", "threads", std::to_string(r.threads));
  row("meta", "d_model", std::to_string(r.cfg.d_model));
  row("meta", "batch", std::to_string(r.cfg.batch));
  row("meta", "basis_count", std::to_string(r.cfg.basis_count));
  row("meta", "degree", std::to_string(r.cfg.degree));
  row("meta", "repeats", std::to_string(r.cfg.repeats));
  row("meta", "warmup", std::to_string(r.cfg.warmup));
  row("meta", "seed", std::to_string(r.cfg.seed));
  row("meta", "backend",
      kernels::active_backend() == kernels::Backend::Simd ? kernels::simd_name()
                                                          : "scalar");
  for (const VariantStats& v : r.variants) {
    row(v.name, "forward_ms", fmt(v.forward_ms));
    row(v.name, "train_ms", fmt(v.train_ms));
    row(v.name, "forward_peak_bytes", std::to_string(v.forward_peak_bytes));
    row(v.name, "train_peak_bytes", std::to_string(v.train_peak_bytes));
    row(v.name, "checksum", fmt(v.checksum));
  }
  row("ratio", "naive_over_ekan_forward_ms", fmt(r.forward_time_ratio));
  row("ratio", "naive_over_ekan_train_ms", fmt(r.train_time_ratio));
  row("ratio", "naive_over_ekan_forward_peak", fmt(r.forward_peak_ratio));
  return out;
}

void write_bench_csv(const std::string& path, const BenchReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << bench_csv(r);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskcast
