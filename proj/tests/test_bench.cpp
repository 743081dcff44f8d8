#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "riskcast/bench.hpp"

using namespace riskcast;
namespace fs = std::filesystem;

namespace {

BenchConfig tiny_config() {
  BenchConfig cfg;
  cfg.d_model = 24;
  cfg.batch = 4;
  cfg.basis_count = 5;
  cfg.degree = 2;
  cfg.repeats = 3;
  cfg.warmup = 1;
  cfg.seed = 3;
  return cfg;
}

std::size_t count_rows(const std::string& csv, const std::string& prefix) {
  std::istringstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST_CASE("median") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("require_equivalent gates the benchmark") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = a;
  CHECK_NOTHROW(require_equivalent(a, b, 1e-10));
  b.at2(1, 1) += 1e-6;
  try {
    require_equivalent(a, b, 1e-10);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("invalid") != std::string::npos);
  }
  const Tensor c = Tensor::from({4}, {1, 2, 3, 4});
  CHECK_THROWS_AS(require_equivalent(a, c, 1e-10), std::runtime_error);
}

TEST_CASE("repeats=1 report is well-formed") {
  BenchConfig cfg = tiny_config();
  cfg.repeats = 1;
  cfg.warmup = 0;
  const BenchReport rep = run_bench(cfg);
  REQUIRE(rep.variants.size() == 3);
  CHECK(rep.variants[0].name == "ekan");
  CHECK(rep.variants[1].name == "naive");
  CHECK(rep.variants[2].name == "linear");
  CHECK(rep.threads == 1);
  for (const VariantStats& v : rep.variants) {
    CHECK(v.forward_ms >= 0.0);
    CHECK(v.train_ms >= 0.0);
    CHECK(v.forward_peak_bytes > 0);
    CHECK(v.train_peak_bytes > 0);
    CHECK(std::isfinite(v.checksum));
  }
  // Equivalent variants produce the same checksum; the linear one differs.
  CHECK(rep.variants[0].checksum == rep.variants[1].checksum);
  CHECK(rep.variants[0].checksum != rep.variants[2].checksum);
}

TEST_CASE("naive variant allocates more even at small shapes") {
  // The forward peak counts the materialized per-edge intermediate. The
  // train peak is dominated by leaf and gradient storage in both variants,
  // so only the forward ordering is shape-stable.
  const BenchReport rep = run_bench(tiny_config());
  CHECK(rep.variants[1].forward_peak_bytes > rep.variants[0].forward_peak_bytes);
  CHECK(rep.forward_peak_ratio > 1.0);
}

TEST_CASE("bench is deterministic in outputs") {
  const BenchReport a = run_bench(tiny_config());
  const BenchReport b = run_bench(tiny_config());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.variants[i].checksum == b.variants[i].checksum);
    CHECK(a.variants[i].forward_peak_bytes == b.variants[i].forward_peak_bytes);
    CHECK(a.variants[i].train_peak_bytes == b.variants[i].train_peak_bytes);
  }
}

TEST_CASE("csv layout") {
  const BenchReport rep = run_bench(tiny_config());
  const std::string csv = bench_csv(rep);
  CHECK(csv.rfind("variant,metric,value\n", 0) == 0);
  CHECK(count_rows(csv, "meta,threads,1") == 1);
  CHECK(count_rows(csv, "ekan,") == 5);
  CHECK(count_rows(csv, "naive,") == 5);
  CHECK(count_rows(csv, "linear,") == 5);
  CHECK(count_rows(csv, "ratio,") == 3);
  CHECK(csv.find("meta,d_model,24") != std::string::npos);
  CHECK(csv.find("naive_over_ekan_forward_peak") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "riskcast_bench_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = (dir / "bench.csv").string();
  write_bench_csv(path, rep);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == csv);
  fs::remove_all(dir);
}
