#include "mimw/oracles.hpp"

#include <cmath>
#include <limits>

namespace mimw {

Tile oracle_vector_scale(const Tile &x, double a) {
  Tile y = x;
  for (auto &v : y.data) v = static_cast<float>(a) * v;
  return y;
}

Tile oracle_gemm(const Tile &a, const Tile &b) {
  std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tile c({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float s = 0.0f;
      for (std::int64_t kk = 0; kk < k; ++kk)
        s += a.data[static_cast<size_t>(i * k + kk)] *
             b.data[static_cast<size_t>(kk * n + j)];
      c.data[static_cast<size_t>(i * n + j)] = s;
    }
  return c;
}

void oracle_layernorm(const Tile &x, const Tile &w, const Tile &b, double eps,
                      Tile *y, Tile *mean, Tile *rstd) {
  std::int64_t rows = x.shape[0], n = x.shape[1];
  *y = Tile(x.shape);
  if (mean) *mean = Tile({rows});
  if (rstd) *rstd = Tile({rows});
  for (std::int64_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::int64_t j = 0; j < n; ++j)
      s += x.data[static_cast<size_t>(r * n + j)];
    double mu = s / static_cast<double>(n);
    double v = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      double d = x.data[static_cast<size_t>(r * n + j)] - mu;
      v += d * d;
    }
    v /= static_cast<double>(n);
    double rs = 1.0 / std::sqrt(v + eps);
    if (mean) (*mean).data[static_cast<size_t>(r)] = static_cast<float>(mu);
    if (rstd) (*rstd).data[static_cast<size_t>(r)] = static_cast<float>(rs);
    for (std::int64_t j = 0; j < n; ++j) {
      size_t idx = static_cast<size_t>(r * n + j);
      y->data[idx] = static_cast<float>(
          (x.data[idx] - mu) * rs * w.data[static_cast<size_t>(j)] +
          b.data[static_cast<size_t>(j)]);
    }
  }
}

Tile oracle_multi_device_gemm(const Tile &a0, const Tile &a1, const Tile &b0,
                              const Tile &b1) {
  std::int64_t m = a0.shape[0], k0 = a0.shape[1], k1 = a1.shape[1],
               n = b0.shape[1];
  Tile a({m, k0 + k1});
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < k0; ++j)
      a.data[static_cast<size_t>(i * (k0 + k1) + j)] =
          a0.data[static_cast<size_t>(i * k0 + j)];
    for (std::int64_t j = 0; j < k1; ++j)
      a.data[static_cast<size_t>(i * (k0 + k1) + k0 + j)] =
          a1.data[static_cast<size_t>(i * k1 + j)];
  }
  Tile b({k0 + k1, n});
  for (std::int64_t i = 0; i < k0; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      b.data[static_cast<size_t>(i * n + j)] =
          b0.data[static_cast<size_t>(i * n + j)];
  for (std::int64_t i = 0; i < k1; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      b.data[static_cast<size_t>((k0 + i) * n + j)] =
          b1.data[static_cast<size_t>(i * n + j)];
  return oracle_gemm(a, b);
}

void oracle_simplicial_attention(const Tile &q, const Tile &k1, const Tile &v1,
                                 const Tile &k2, const Tile &v2, int w1,
                                 int w2, double scale, Tile *o, Tile *lse) {
  std::int64_t seq = q.shape[0], d = q.shape[1];
  *o = Tile(q.shape);
  *lse = Tile({seq});
  for (std::int64_t i = 0; i < seq; ++i) {
    std::vector<std::pair<std::int64_t, std::int64_t>> window;
    std::vector<double> scores;
    for (std::int64_t j1 = std::max<std::int64_t>(0, i - w1 + 1); j1 <= i;
         ++j1)
      for (std::int64_t j2 = std::max<std::int64_t>(0, i - w2 + 1); j2 <= i;
           ++j2) {
        double s = 0;
        for (std::int64_t x = 0; x < d; ++x)
          s += static_cast<double>(q.data[static_cast<size_t>(i * d + x)]) *
               k1.data[static_cast<size_t>(j1 * d + x)] *
               k2.data[static_cast<size_t>(j2 * d + x)];
        window.push_back({j1, j2});
        scores.push_back(s * scale);
      }
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores) m = std::max(m, s);
    double l = 0;
    for (double s : scores) l += std::exp(s - m);
    for (size_t w = 0; w < window.size(); ++w) {
      double p = std::exp(scores[w] - m) / l;
      auto [j1, j2] = window[w];
      for (std::int64_t x = 0; x < d; ++x)
        o->data[static_cast<size_t>(i * d + x)] += static_cast<float>(
            p * v1.data[static_cast<size_t>(j1 * d + x)] *
            v2.data[static_cast<size_t>(j2 * d + x)]);
    }
    lse->data[static_cast<size_t>(i)] = static_cast<float>(m + std::log(l));
  }
}

void oracle_attention(const Tile &q, const Tile &k, const Tile &v, int w,
                      double scale, Tile *o) {
  std::int64_t seq = q.shape[0], d = q.shape[1];
  *o = Tile(q.shape);
  for (std::int64_t i = 0; i < seq; ++i) {
    std::vector<std::int64_t> js;
    std::vector<double> scores;
    for (std::int64_t j = std::max<std::int64_t>(0, i - w + 1); j <= i; ++j) {
      double s = 0;
      for (std::int64_t x = 0; x < d; ++x)
        s += static_cast<double>(q.data[static_cast<size_t>(i * d + x)]) *
             k.data[static_cast<size_t>(j * d + x)];
      js.push_back(j);
      scores.push_back(s * scale);
    }
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores) m = std::max(m, s);
    double l = 0;
    for (double s : scores) l += std::exp(s - m);
    for (size_t t = 0; t < js.size(); ++t) {
      double p = std::exp(scores[t] - m) / l;
      for (std::int64_t x = 0; x < d; ++x)
        o->data[static_cast<size_t>(i * d + x)] += static_cast<float>(
            p * v.data[static_cast<size_t>(js[t] * d + x)]);
    }
  }
}

std::optional<std::map<std::string, Tile>> run_oracle(
    const std::string &name, const std::map<std::string, Tile> &inputs,
    const std::map<std::string, double> &scalars, const SimResult *sim) {
  auto in = [&](const std::string &k) -> const Tile & {
    return inputs.at(k);
  };
  auto sc = [&](const std::string &k, double dflt) {
    auto it = scalars.find(k);
    return it == scalars.end() ? dflt : it->second;
  };
  std::map<std::string, Tile> out;

  if (name == "vector_scale") {
    out["y"] = oracle_vector_scale(in("x"), sc("a", 1.0));
    return out;
  }
  if (name == "listing_pipeline") {
    // y[i] = 2*x[i] + cta_rank; tile t belongs to the CTA of rank t/2.
    (void)sim;
    const Tile &x = in("x");
    Tile y(x.shape);
    for (std::int64_t i = 0; i < x.elems(); ++i)
      y.data[static_cast<size_t>(i)] =
          2.0f * x.data[static_cast<size_t>(i)] +
          static_cast<float>(i / 128);
    out["y"] = std::move(y);
    return out;
  }
  if (name == "gemm") {
    out["c"] = oracle_gemm(in("a"), in("b"));
    return out;
  }
  if (name == "layernorm") {
    Tile y;
    oracle_layernorm(in("x"), in("w"), in("b"), sc("eps", 1e-5), &y);
    out["y"] = std::move(y);
    return out;
  }
  if (name == "multi_device_gemm") {
    out["c"] = oracle_multi_device_gemm(in("a0"), in("a1"), in("b0"),
                                        in("b1"));
    return out;
  }
  if (name == "simplicial_attention") {
    Tile o, lse;
    oracle_simplicial_attention(in("q"), in("k1"), in("v1"), in("k2"),
                                in("v2"), static_cast<int>(sc("w1", 2)),
                                static_cast<int>(sc("w2", 16)),
                                sc("scale", 1.0), &o, &lse);
    out["o"] = std::move(o);
    out["lse"] = std::move(lse);
    return out;
  }
  return std::nullopt;
}

}  // namespace mimw
