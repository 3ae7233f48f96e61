#include "mbcal/nn/adam.hpp"

#include <cmath>

#include "mbcal/error.hpp"

namespace mbcal::nn {

AdamState::AdamState(const ParamSet& params) {
  for (const auto& b : params) {
    m.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
    v.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
  }
}

void adam_update(ParamSet& params, AdamState& state, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (state.m.size() != params.size()) throw ShapeError("adam state does not match parameter set");
  for (const auto& b : params) {
    if (!b.grad.allFinite()) throw NonFiniteError("adam: non-finite gradient in block '" + b.name + "'");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& b = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    if (m.rows() != b.value.rows() || m.cols() != b.value.cols()) {
      throw ShapeError("adam moment shape mismatch for block '" + b.name + "'");
    }
    m = config.beta1 * m + (1.0 - config.beta1) * b.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * b.grad.cwiseAbs2();
    b.value.array() -= config.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + config.epsilon);
  }
}

}  // namespace mbcal::nn
