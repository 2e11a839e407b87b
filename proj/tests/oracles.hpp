#pragma once

// Naive reference implementations used only by tests. Plain loops over
// nested vectors; nothing here calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mcvit/tensor.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid from(const mcvit::Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline mcvit::Matrix to(const Grid& g) {
  mcvit::Matrix m(static_cast<mcvit::Index>(g.size()), g.empty() ? 0 : static_cast<mcvit::Index>(g[0].size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[i].size(); ++j) m(i, j) = g[i][j];
  return m;
}

inline Grid matmul(const Grid& a, const Grid& b) {
  Grid c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Grid transpose(const Grid& a) {
  Grid t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Grid add(Grid a, const Grid& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  std::vector<double> e(x.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i] - m));
  for (double& v : e) v /= s;
  return e;
}

inline Grid layer_norm(const Grid& x, const std::vector<double>& scale, const std::vector<double>& bias,
                       double eps = 1e-6) {
  Grid out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= x[i].size();
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= x[i].size();
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * scale[j] + bias[j];
  }
  return out;
}

/// Per-head loop attention: softmax(q_h k_h^T / sqrt(dh)) v_h, then W_O.
inline Grid attention(const Grid& queries, const Grid& kv, const Grid& wq, const Grid& wk, const Grid& wv,
                      const Grid& wo, int heads) {
  const Grid q = matmul(queries, wq), k = matmul(kv, wk), v = matmul(kv, wv);
  const std::size_t d = q[0].size(), dh = d / heads;
  Grid merged(q.size(), std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> logits(k.size());
      for (std::size_t j = 0; j < k.size(); ++j) {
        double dot = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[i][c] * k[j][c];
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const auto w = softmax(logits);
      for (std::size_t j = 0; j < k.size(); ++j)
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) merged[i][c] += w[j] * v[j][c];
    }
  return matmul(merged, wo);
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Textbook Lloyd's k-means with the same init/tie/empty-cluster rules.
inline Grid kmeans(const Grid& z, const std::vector<long>& init, int iters) {
  Grid c;
  for (long i : init) c.push_back(z[i]);
  for (int it = 0; it < iters; ++it) {
    std::vector<int> assign(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      int best = 0;
      for (std::size_t k = 1; k < c.size(); ++k)
        if (sqdist(z[i], c[k]) < sqdist(z[i], c[best])) best = static_cast<int>(k);
      assign[i] = best;
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
      std::vector<double> s(z[0].size(), 0.0);
      int n = 0;
      for (std::size_t i = 0; i < z.size(); ++i)
        if (assign[i] == static_cast<int>(k)) {
          for (std::size_t j = 0; j < s.size(); ++j) s[j] += z[i][j];
          ++n;
        }
      if (n == 0) continue;
      for (std::size_t j = 0; j < s.size(); ++j) c[k][j] = s[j] / n;
    }
  }
  return c;
}

inline double log_sum_exp(const std::vector<double>& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double s = 0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace oracle
