#include "tracer/optim.hpp"

#include <cmath>
#include <string>

#include "tracer/error.hpp"

namespace tracer {

template <typename T>
AdamState<T> make_adam_state(std::span<Matrix<T>* const> params, AdamHyper hyper) {
  AdamState<T> state;
  state.hyper = hyper;
  for (const auto* p : params) {
    state.m.emplace_back(p->rows(), p->cols());
    state.v.emplace_back(p->rows(), p->cols());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
               AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ValidationError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i])) {
      throw ValidationError("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    if (!all_finite(*grads[i])) {
      throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(i));
    }
  }
  ++state.step;
  const double b1 = state.hyper.beta1, b2 = state.hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->flat();
    auto g = grads[i]->flat();
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + state.hyper.eps));
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) throw ConfigError("lr_at: total_steps must be positive");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, lr0 * (1.0 - frac));
}

template AdamState<float> make_adam_state<float>(std::span<Matrix<float>* const>, AdamHyper);
template AdamState<double> make_adam_state<double>(std::span<Matrix<double>* const>, AdamHyper);
template void adam_step<float>(std::span<Matrix<float>* const>, std::span<const Matrix<float>* const>,
                               AdamState<float>&, double);
template void adam_step<double>(std::span<Matrix<double>* const>,
                                std::span<const Matrix<double>* const>, AdamState<double>&, double);

}  // namespace tracer
