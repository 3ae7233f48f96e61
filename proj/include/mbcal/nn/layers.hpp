#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mbcal/nn/params.hpp"

namespace mbcal::nn {

/// Lookup table; one row per category id.
struct Embedding {
  std::size_t table = 0;
  int rows = 0;
  int dim = 0;

  static Embedding create(ParamSet& params, const std::string& name, int rows, int dim, Rng& rng,
                          double init_bound = 0.01);

  Vector lookup(const ParamSet& params, int id) const;
  /// Accumulates `grad` into row `id` only.
  void backward(ParamSet& params, int id, const Vector& grad) const;
};

/// y = W x + b
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;

  static Dense create(ParamSet& params, const std::string& name, int in, int out, Rng& rng);

  Vector forward(const ParamSet& params, const Vector& x) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Vector backward(ParamSet& params, const Vector& x, const Vector& dy) const;
};

/// Affine layers with tanh between them and no output nonlinearity.
/// `dims` = {input, hidden..., output}; {n, n} is a single affine map.
struct Mlp {
  std::vector<Dense> layers;

  struct Cache {
    /// Input to each Dense layer (post-tanh activations after the first).
    std::vector<Vector> inputs;
  };

  static Mlp create(ParamSet& params, const std::string& name, const std::vector<int>& dims,
                    Rng& rng);

  int input_size() const { return layers.front().in; }
  int output_size() const { return layers.back().out; }

  Vector forward(const ParamSet& params, const Vector& x, Cache* cache = nullptr) const;
  Vector backward(ParamSet& params, const Cache& cache, const Vector& dy) const;
};

/// Gated recurrent unit.
///
///   z = sig(W_z x + U_z h + b_z)
///   r = sig(W_r x + U_r h + b_r)
///   c = tanh(W_c x + U_c (r * h) + b_c)
///   h' = (1 - z) * h + z * c
///
/// The input weights are stored stacked as one 3H x I block (rows z, r, c),
/// likewise the recurrent weights (3H x H) and the bias (3H).
struct Gru {
  std::size_t w_input = 0;
  std::size_t w_hidden = 0;
  std::size_t bias = 0;
  int input_size = 0;
  int hidden_size = 0;

  struct Cache {
    Vector h_prev, z, r, c, rh;
  };

  static Gru create(ParamSet& params, const std::string& name, int input_size, int hidden_size,
                    Rng& rng);

  Vector step(const ParamSet& params, const Vector& h_prev, const Vector& x,
              Cache* cache = nullptr) const;
  /// Accumulates gradients for all three blocks, writes dL/dh_prev, returns dL/dx.
  Vector backward(ParamSet& params, const Cache& cache, const Vector& x, const Vector& dh,
                  Vector& dh_prev) const;

  // Split-input form used by the sequence encoder. `input_proj` is the
  // already-computed W x (3H); `recurrent_zr`, when given, is the U_{z,r} h
  // term from recurrent_zr(). Both paths produce bit-identical results.
  Vector recurrent_zr(const ParamSet& params, const Vector& h_prev) const;
  Vector step_projected(const ParamSet& params, const Vector& h_prev, const Vector& input_proj,
                        const Vector* recurrent_zr, Cache* cache = nullptr) const;
  /// Gradients for the recurrent weights and bias; returns dL/d(input_proj).
  Vector backward_projected(ParamSet& params, const Cache& cache, const Vector& dh,
                            Vector& dh_prev) const;
};

/// Long short-term memory cell with gates stacked (i, f, o, g) in 4H rows.
///
///   c' = f * c + i * g,   h' = o * tanh(c')
struct Lstm {
  std::size_t w_input = 0;
  std::size_t w_hidden = 0;
  std::size_t bias = 0;
  int input_size = 0;
  int hidden_size = 0;

  struct State {
    Vector h, c;
  };
  struct Cache {
    Vector x, h_prev, c_prev, i, f, o, g, c, tanh_c;
  };

  static Lstm create(ParamSet& params, const std::string& name, int input_size, int hidden_size,
                     Rng& rng);

  State step(const ParamSet& params, const State& prev, const Vector& x,
             Cache* cache = nullptr) const;
  /// Returns dL/dx; writes gradients w.r.t. the previous state into `d_prev`.
  Vector backward(ParamSet& params, const Cache& cache, const State& d_next, State& d_prev) const;
};

Vector sigmoid(const Vector& v);

/// Max-subtracted softmax. Throws on an empty input.
Vector softmax(const Vector& logits);

/// Counts probability clamps in nll_loss.
struct LossStats {
  std::size_t clamped = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// -log(probs[label]), with probs[label] clamped at kProbabilityFloor.
double nll_loss(const Vector& probs, int label, LossStats* stats = nullptr);
/// Gradient of nll_loss(softmax(logits), label) w.r.t. the logits.
Vector softmax_nll_grad(const Vector& probs, int label);

double mse_loss(double pred, double target);
double mse_grad(double pred, double target);
/// Mean of (pred_i - target_i)^2.
double mse_loss(std::span<const double> pred, std::span<const double> target);

}  // namespace mbcal::nn
