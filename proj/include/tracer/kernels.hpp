#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tracer/matrix.hpp"

// Dense kernels behind the encoder, parallelized over rows (or heads) with
// OpenMP. Each output element is produced by exactly one thread, so results
// do not depend on the thread count. Serial counterparts live in
// kernels_reference.hpp.

namespace tracer::kernels {

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row statistics kept by layer_norm for the backward pass.
template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> rstd;
};

/// c = a·b, with a m×k and b k×n.
template <typename T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false);

/// c = a·bᵀ, with a m×k and b n×k.
template <typename T>
void matmul_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false);

/// c = aᵀ·b, with a k×m and b k×n.
template <typename T>
void matmul_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false);

template <typename T>
void add_row_vector(Matrix<T>& x, const Matrix<T>& bias);

template <typename T>
void accumulate_column_sums(const Matrix<T>& x, Matrix<T>& out);

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>& y,
                LayerNormCache<T>& cache);

/// dx is overwritten; dgamma and dbeta accumulate.
template <typename T>
void layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gamma,
                         const LayerNormCache<T>& cache, Matrix<T>& dx, Matrix<T>& dgamma,
                         Matrix<T>& dbeta);

/// Exact (erf) GELU.
template <typename T>
void gelu(const Matrix<T>& x, Matrix<T>& y);

template <typename T>
void gelu_backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>& dx);

/// Multi-head scaled dot-product attention over n positions. Keys with
/// key_mask[j] == 0 get zero weight. probs receives one n×n matrix per head.
template <typename T>
void attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
               std::span<const int> key_mask, std::size_t heads, Matrix<T>& out,
               std::vector<Matrix<T>>& probs);

/// dq, dk and dv are overwritten.
template <typename T>
void attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                        std::size_t heads, const std::vector<Matrix<T>>& probs,
                        const Matrix<T>& dout, Matrix<T>& dq, Matrix<T>& dk, Matrix<T>& dv);

}  // namespace tracer::kernels
