#include "tracer/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace tracer::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 14;

template <typename T>
void prepare(Matrix<T>& c, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols) throw std::invalid_argument("accumulate target shape");
  } else if (c.rows() != rows || c.cols() != cols) {
    c.resize(rows, cols);
  } else {
    c.fill(T(0));
  }
}

}  // namespace

template <typename T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const std::int64_t m = a.rows();
  const std::size_t k = a.cols(), n = b.cols();
  prepare(c, m, n, accumulate);
#pragma omp parallel for schedule(static) if (m * std::int64_t(k * n) > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
void matmul_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  const std::int64_t m = a.rows();
  const std::size_t k = a.cols(), n = b.rows();
  prepare(c, m, n, accumulate);
#pragma omp parallel for schedule(static) if (m * std::int64_t(k * n) > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    T* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

template <typename T>
void matmul_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
  const std::size_t k = a.rows(), n = b.cols();
  const std::int64_t m = a.cols();
  prepare(c, m, n, accumulate);
#pragma omp parallel for schedule(static) if (m * std::int64_t(k * n) > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a.data()[p * m + i];
      if (api == T(0)) continue;
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

template <typename T>
void add_row_vector(Matrix<T>& x, const Matrix<T>& bias) {
  if (bias.size() != x.cols()) throw std::invalid_argument("add_row_vector: width mismatch");
  const std::int64_t rows = x.rows();
  for (std::int64_t i = 0; i < rows; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
}

template <typename T>
void accumulate_column_sums(const Matrix<T>& x, Matrix<T>& out) {
  if (out.size() != x.cols()) throw std::invalid_argument("accumulate_column_sums: width mismatch");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
}

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>& y,
                LayerNormCache<T>& cache) {
  const std::int64_t n = x.rows();
  const std::size_t d = x.cols();
  y.resize(n, d);
  cache.xhat.resize(n, d);
  cache.rstd.assign(n, T(0));
#pragma omp parallel for schedule(static) if (n * std::int64_t(d) > kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    auto xr = x.row(i);
    T mean = 0;
    for (T v : xr) mean += v;
    mean /= T(d);
    T var = 0;
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= T(d);
    const T rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
    cache.rstd[i] = rstd;
    auto xh = cache.xhat.row(i);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      yr[j] = xh[j] * gamma[j] + beta[j];
    }
  }
}

template <typename T>
void layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gamma,
                         const LayerNormCache<T>& cache, Matrix<T>& dx, Matrix<T>& dgamma,
                         Matrix<T>& dbeta) {
  const std::int64_t n = dy.rows();
  const std::size_t d = dy.cols();
  dx.resize(n, d);
  // Parameter gradients reduce over rows; keep that serial for a fixed order.
  for (std::int64_t i = 0; i < n; ++i) {
    auto g = dy.row(i);
    auto xh = cache.xhat.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += g[j] * xh[j];
      dbeta[j] += g[j];
    }
  }
#pragma omp parallel for schedule(static) if (n * std::int64_t(d) > kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    auto g = dy.row(i);
    auto xh = cache.xhat.row(i);
    T sum_g = 0, sum_gx = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T gh = g[j] * gamma[j];
      sum_g += gh;
      sum_gx += gh * xh[j];
    }
    const T inv_d = T(1) / T(d);
    auto out = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const T gh = g[j] * gamma[j];
      out[j] = cache.rstd[i] * (gh - inv_d * sum_g - xh[j] * inv_d * sum_gx);
    }
  }
}

template <typename T>
void gelu(const Matrix<T>& x, Matrix<T>& y) {
  y.resize(x.rows(), x.cols());
  const std::int64_t n = x.size();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    const T v = x[i];
    y[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
}

template <typename T>
void gelu_backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>& dx) {
  dx.resize(x.rows(), x.cols());
  const std::int64_t n = x.size();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
    dx[i] = dy[i] * (cdf + v * pdf);
  }
}

template <typename T>
void attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
               std::span<const int> key_mask, std::size_t heads, Matrix<T>& out,
               std::vector<Matrix<T>>& probs) {
  const std::size_t n = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) throw std::invalid_argument("attention: d not divisible by heads");
  if (key_mask.size() != n || k.rows() != n || v.rows() != n) {
    throw std::invalid_argument("attention: length mismatch");
  }
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  out.resize(n, d);
  probs.resize(heads);
  for (auto& p : probs) p.resize(n, n);
  const std::int64_t work = std::int64_t(heads * n);
#pragma omp parallel for schedule(static) if (work * std::int64_t(n * dh) > kParallelWork)
  for (std::int64_t hi = 0; hi < work; ++hi) {
    const std::size_t h = hi / n, i = hi % n, off = h * dh;
    auto prow = probs[h].row(i);
    const T* qi = q.data() + i * d + off;
    T maxv = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (!key_mask[j]) continue;
      const T* kj = k.data() + j * d + off;
      T s = 0;
      for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
      prow[j] = s * scale;
      if (prow[j] > maxv) maxv = prow[j];
    }
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!key_mask[j]) {
        prow[j] = 0;
        continue;
      }
      prow[j] = std::exp(prow[j] - maxv);
      total += prow[j];
    }
    T* oi = out.data() + i * d + off;
    if (total == T(0)) continue;
    for (std::size_t j = 0; j < n; ++j) prow[j] /= total;
    for (std::size_t j = 0; j < n; ++j) {
      const T pij = prow[j];
      if (pij == T(0)) continue;
      const T* vj = v.data() + j * d + off;
      for (std::size_t t = 0; t < dh; ++t) oi[t] += pij * vj[t];
    }
  }
}

template <typename T>
void attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                        std::size_t heads, const std::vector<Matrix<T>>& probs,
                        const Matrix<T>& dout, Matrix<T>& dq, Matrix<T>& dk, Matrix<T>& dv) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  dq.resize(n, d);
  dk.resize(n, d);
  dv.resize(n, d);
  const std::int64_t h_count = heads;
  // Heads own disjoint column blocks of dq/dk/dv.
#pragma omp parallel for schedule(static) if (h_count > 1 && std::int64_t(n * n * d) > kParallelWork)
  for (std::int64_t h = 0; h < h_count; ++h) {
    const std::size_t off = h * dh;
    const Matrix<T>& p = probs[h];
    std::vector<T> dp(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T* doi = dout.data() + i * d + off;
      auto prow = p.row(i);
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (prow[j] == T(0)) {
          dp[j] = 0;
          continue;
        }
        const T* vj = v.data() + j * d + off;
        T* dvj = dv.data() + j * d + off;
        T s = 0;
        for (std::size_t t = 0; t < dh; ++t) {
          s += doi[t] * vj[t];
          dvj[t] += prow[j] * doi[t];
        }
        dp[j] = s;
        dot += prow[j] * s;
      }
      T* dqi = dq.data() + i * d + off;
      const T* qi = q.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        if (prow[j] == T(0)) continue;
        const T ds = prow[j] * (dp[j] - dot) * scale;
        const T* kj = k.data() + j * d + off;
        T* dkj = dk.data() + j * d + off;
        for (std::size_t t = 0; t < dh; ++t) {
          dqi[t] += ds * kj[t];
          dkj[t] += ds * qi[t];
        }
      }
    }
  }
}

#define TRACER_INSTANTIATE(T)                                                                    \
  template void matmul<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&, bool);                 \
  template void matmul_nt<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&, bool);              \
  template void matmul_tn<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&, bool);              \
  template void add_row_vector<T>(Matrix<T>&, const Matrix<T>&);                                 \
  template void accumulate_column_sums<T>(const Matrix<T>&, Matrix<T>&);                         \
  template void layer_norm<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, Matrix<T>&,  \
                              LayerNormCache<T>&);                                               \
  template void layer_norm_backward<T>(const Matrix<T>&, const Matrix<T>&,                       \
                                       const LayerNormCache<T>&, Matrix<T>&, Matrix<T>&,         \
                                       Matrix<T>&);                                              \
  template void gelu<T>(const Matrix<T>&, Matrix<T>&);                                           \
  template void gelu_backward<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);                \
  template void attention<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,               \
                             std::span<const int>, std::size_t, Matrix<T>&,                      \
                             std::vector<Matrix<T>>&);                                           \
  template void attention_backward<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                      std::size_t, const std::vector<Matrix<T>>&,                \
                                      const Matrix<T>&, Matrix<T>&, Matrix<T>&, Matrix<T>&);

TRACER_INSTANTIATE(float)
TRACER_INSTANTIATE(double)

}  // namespace tracer::kernels
