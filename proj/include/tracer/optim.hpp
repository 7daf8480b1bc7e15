#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tracer/matrix.hpp"

namespace tracer {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  std::uint64_t step = 0;
  AdamHyper hyper;
};

/// Zero moments shaped like `params`.
template <typename T>
AdamState<T> make_adam_state(std::span<Matrix<T>* const> params, AdamHyper hyper = {});

/// One bias-corrected Adam update. Throws NumericalError (leaving params and
/// state untouched) when a gradient entry is NaN or infinite.
template <typename T>
void adam_step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
               AdamState<T>& state, double lr);

/// Linear decay lr0·(1 − step/total) without warmup, floored at 0.
double lr_at(std::size_t step, std::size_t total_steps, double lr0);

}  // namespace tracer
