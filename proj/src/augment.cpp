#include "riskcast/augment.hpp"

#include <algorithm>
#include <cmath>

#include "riskcast/numerics.hpp"

namespace riskcast {

Tensor local_global_scores(const Tensor& c, const Tensor& w0) {
  require(c.rank() == 3, "local_global_scores expects T x N x D embeddings");
  require(w0.rank() == 1 && w0.dim(0) == c.dim(2), "w0 length must equal D");
  const std::size_t T = c.dim(0), N = c.dim(1), D = c.dim(2);
  Tensor q({T, N});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) acc += c.at3(t, n, d) * w0.at(d);
      q.at2(t, n) = acc;
    }
  }
  return q;
}

Tensor temporal_aggregate(const Tensor& q, const Tensor& c) {
  require(c.rank() == 3, "temporal_aggregate expects T x N x D embeddings");
  require(q.rank() == 2 && q.dim(0) == c.dim(0) && q.dim(1) == c.dim(1),
          "q must be T x N matching the embeddings");
  const std::size_t T = c.dim(0), N = c.dim(1), D = c.dim(2);
  Tensor p({N, D});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += q.at2(t, n) * c.at3(t, n, d);
      p.at2(n, d) = acc;
    }
  }
  return p;
}

PearsonResult pearson_matrix(const Tensor& s) {
  require(s.rank() == 2, "pearson_matrix expects T x N series");
  const std::size_t T = s.dim(0), N = s.dim(1);
  require(T >= 2, "pearson needs at least two observations");
  PearsonResult res;
  res.o = Tensor({N, N});
  res.constant.assign(N, 0);

  std::vector<double> mean(N, 0.0), sd(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t) mean[n] += s.at2(t, n);
    mean[n] /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double d = s.at2(t, n) - mean[n];
      sd[n] += d * d;
    }
    sd[n] = std::sqrt(sd[n]);
    if (sd[n] == 0.0) res.constant[n] = 1;
  }
  for (std::size_t m = 0; m < N; ++m) {
    // Self-correlation is 1 by definition; the quotient can land 1 ulp off.
    res.o.at2(m, m) = res.constant[m] ? 0.0 : 1.0;
    for (std::size_t n = m + 1; n < N; ++n) {
      double v = 0.0;
      if (!res.constant[m] && !res.constant[n]) {
        double cov = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          cov += (s.at2(t, m) - mean[m]) * (s.at2(t, n) - mean[n]);
        }
        v = cov / (sd[m] * sd[n]);
      }
      res.o.at2(m, n) = v;
      res.o.at2(n, m) = v;
    }
  }
  return res;
}

IncidentAugment incident_augment(const Tensor& x, const Tensor& q, double rate,
                                 double magnitude_scale, SplitMix64& rng) {
  require(x.rank() == 3, "incident_augment expects T x N x d features");
  require(q.rank() == 2 && q.dim(0) == x.dim(0) && q.dim(1) == x.dim(1),
          "q must be T x N matching the window");
  require(rate >= 0.0 && rate <= 1.0, "feature rate must lie in [0, 1]");
  require(magnitude_scale >= 0.0, "magnitude scale must be nonnegative");
  const std::size_t T = x.dim(0), N = x.dim(1);

  IncidentAugment out;
  out.x = x;
  out.chosen.resize(T);

  // Population std of the risk channel over the whole window.
  double mean = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) mean += x.at3(t, n, 0);
  }
  mean /= static_cast<double>(T * N);
  double var = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      const double d = x.at3(t, n, 0) - mean;
      var += d * d;
    }
  }
  var /= static_cast<double>(T * N);
  out.magnitude = magnitude_scale * std::sqrt(var);

  const std::size_t count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(N)));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> neg(N);
    for (std::size_t n = 0; n < N; ++n) neg[n] = -q.at2(t, n);
    std::vector<double> w = softmax(neg);
    // Sequential weighted draws without replacement.
    for (std::size_t pick = 0; pick < count; ++pick) {
      double total = 0.0;
      for (double v : w) total += v;
      const double u = rng.uniform() * total;
      double acc = 0.0;
      std::size_t sel = N;
      for (std::size_t n = 0; n < N; ++n) {
        if (w[n] <= 0.0) continue;
        acc += w[n];
        if (u < acc) {
          sel = n;
          break;
        }
      }
      if (sel == N) {
        // Rounding pushed u past the last positive weight.
        for (std::size_t n = N; n-- > 0;) {
          if (w[n] > 0.0) {
            sel = n;
            break;
          }
        }
      }
      w[sel] = 0.0;
      out.chosen[t].push_back(sel);
      out.x.at3(t, sel, 0) += out.magnitude;
    }
    std::sort(out.chosen[t].begin(), out.chosen[t].end());
  }
  return out;
}

GraphAugment graph_augment(const Tensor& a, const Tensor& o, double rate,
                           SplitMix64& rng) {
  require(a.rank() == 2 && a.dim(0) == a.dim(1), "adjacency must be square");
  const std::size_t N = a.dim(0);
  require(o.rank() == 2 && o.dim(0) == N && o.dim(1) == N,
          "correlation matrix must match adjacency size");
  require(rate >= 0.0 && rate <= 1.0, "graph rate must lie in [0, 1]");

  std::vector<std::pair<std::size_t, std::size_t>> edges, holes;
  for (std::size_t m = 0; m < N; ++m) {
    require(a.at2(m, m) == 0.0, "adjacency diagonal must be zero");
    for (std::size_t n = m + 1; n < N; ++n) {
      require(a.at2(m, n) == a.at2(n, m), "adjacency must be symmetric");
      if (a.at2(m, n) != 0.0) edges.emplace_back(m, n);
      else holes.emplace_back(m, n);
    }
  }

  GraphAugment out;
  out.a = a;
  if (edges.empty() || rate == 0.0) return out;

  std::vector<double> negscore(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    negscore[e] = -o.at2(edges[e].first, edges[e].second);
  }
  std::vector<double> beta = softmax(negscore);
  const double expected = rate * static_cast<double>(edges.size());

  // Lexicographic edge order; one Bernoulli draw per edge.
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double pi = std::min(1.0, expected * beta[e]);
    if (rng.uniform() < pi) {
      out.a.at2(edges[e].first, edges[e].second) = 0.0;
      out.a.at2(edges[e].second, edges[e].first) = 0.0;
      ++out.removed;
    }
  }

  // Keep the edge count: add at the most correlated non-adjacent pairs,
  // ties broken lexicographically.
  std::stable_sort(holes.begin(), holes.end(),
                   [&](const auto& lhs, const auto& rhs) {
                     return o.at2(lhs.first, lhs.second) > o.at2(rhs.first, rhs.second);
                   });
  for (std::size_t i = 0; i < holes.size() && out.added < out.removed; ++i) {
    out.a.at2(holes[i].first, holes[i].second) = 1.0;
    out.a.at2(holes[i].second, holes[i].first) = 1.0;
    ++out.added;
  }
  return out;
}

}  // namespace riskcast
