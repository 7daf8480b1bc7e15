#include "tracer/kernels_reference.hpp"

#include <cmath>
#include <stdexcept>

namespace tracer::kernels::reference {

template <typename T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  if (!accumulate) c.resize(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) += s;
    }
}

template <typename T>
void matmul_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  if (!accumulate) c.resize(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
}

template <typename T>
void matmul_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
  if (!accumulate) c.resize(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) += s;
    }
}

template <typename T>
void add_row_vector(Matrix<T>& x, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += bias[j];
}

template <typename T>
void accumulate_column_sums(const Matrix<T>& x, Matrix<T>& out) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
}

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>& y,
                LayerNormCache<T>& cache) {
  const std::size_t n = x.rows(), d = x.cols();
  y.resize(n, d);
  cache.xhat.resize(n, d);
  cache.rstd.assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    T mean = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= T(d);
    for (std::size_t j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= T(d);
    cache.rstd[i] = T(1) / std::sqrt(var + T(kLayerNormEps));
    for (std::size_t j = 0; j < d; ++j) {
      cache.xhat(i, j) = (x(i, j) - mean) * cache.rstd[i];
      y(i, j) = cache.xhat(i, j) * gamma[j] + beta[j];
    }
  }
}

template <typename T>
void layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gamma,
                         const LayerNormCache<T>& cache, Matrix<T>& dx, Matrix<T>& dgamma,
                         Matrix<T>& dbeta) {
  const std::size_t n = dy.rows(), d = dy.cols();
  dx.resize(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    T sum_g = 0, sum_gx = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += dy(i, j) * cache.xhat(i, j);
      dbeta[j] += dy(i, j);
      sum_g += dy(i, j) * gamma[j];
      sum_gx += dy(i, j) * gamma[j] * cache.xhat(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) {
      dx(i, j) = cache.rstd[i] *
                 (dy(i, j) * gamma[j] - sum_g / T(d) - cache.xhat(i, j) * sum_gx / T(d));
    }
  }
}

template <typename T>
void gelu(const Matrix<T>& x, Matrix<T>& y) {
  y.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::sqrt(T(2))));
  }
}

template <typename T>
void gelu_backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>& dx) {
  dx.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::sqrt(T(2))));
    const T pdf = std::exp(T(-0.5) * x[i] * x[i]) / std::sqrt(T(2) * T(M_PI));
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

template <typename T>
void attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
               std::span<const int> key_mask, std::size_t heads, Matrix<T>& out,
               std::vector<Matrix<T>>& probs) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads;
  out.resize(n, d);
  probs.assign(heads, Matrix<T>(n, n));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> s(n, T(0));
      T maxv = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        if (!key_mask[j]) continue;
        for (std::size_t t = 0; t < dh; ++t) s[j] += q(i, h * dh + t) * k(j, h * dh + t);
        s[j] /= std::sqrt(T(dh));
        maxv = std::max(maxv, s[j]);
      }
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (key_mask[j]) total += std::exp(s[j] - maxv);
      }
      for (std::size_t j = 0; j < n; ++j) {
        probs[h](i, j) = key_mask[j] ? std::exp(s[j] - maxv) / total : T(0);
      }
      for (std::size_t t = 0; t < dh; ++t) {
        T acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += probs[h](i, j) * v(j, h * dh + t);
        out(i, h * dh + t) = acc;
      }
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
  for (std::size_t h = 0; h < heads; ++h) {
    const auto& p = probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> dp(n, T(0));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < dh; ++t) dp[j] += dout(i, h * dh + t) * v(j, h * dh + t);
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += p(i, j) * dp[j];
      for (std::size_t j = 0; j < n; ++j) {
        const T ds = p(i, j) * (dp[j] - dot) * scale;
        for (std::size_t t = 0; t < dh; ++t) {
          dv(j, h * dh + t) += p(i, j) * dout(i, h * dh + t);
          dq(i, h * dh + t) += ds * k(j, h * dh + t);
          dk(j, h * dh + t) += ds * q(i, h * dh + t);
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

}  // namespace tracer::kernels::reference
