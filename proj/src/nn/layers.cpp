#include "mbcal/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mbcal/error.hpp"

namespace mbcal::nn {

namespace {

void require_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected size " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

}  // namespace

Vector sigmoid(const Vector& v) {
  return v.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

// ---------------------------------------------------------------- Embedding

Embedding Embedding::create(ParamSet& params, const std::string& name, int rows, int dim, Rng& rng,
                            double init_bound) {
  Embedding e;
  e.table = params.add(name, rows, dim);
  e.rows = rows;
  e.dim = dim;
  init_uniform(params[e.table].value, init_bound, rng);
  return e;
}

Vector Embedding::lookup(const ParamSet& params, int id) const {
  if (id < 0 || id >= rows) {
    throw IndexError("embedding '" + params[table].name + "': id " + std::to_string(id) +
                     " out of range [0, " + std::to_string(rows) + ")");
  }
  return params[table].value.row(id).transpose();
}

void Embedding::backward(ParamSet& params, int id, const Vector& grad) const {
  if (id < 0 || id >= rows) {
    throw IndexError("embedding '" + params[table].name + "': id " + std::to_string(id) +
                     " out of range [0, " + std::to_string(rows) + ")");
  }
  require_size(grad, dim, "embedding gradient");
  params[table].grad.row(id) += grad.transpose();
}

// ---------------------------------------------------------------- Dense / MLP

Dense Dense::create(ParamSet& params, const std::string& name, int in, int out, Rng& rng) {
  Dense d;
  d.weight = params.add(name + ".weight", out, in);
  d.bias = params.add(name + ".bias", out, 1);
  d.in = in;
  d.out = out;
  init_glorot(params[d.weight].value, rng);
  return d;
}

Vector Dense::forward(const ParamSet& params, const Vector& x) const {
  require_size(x, in, "dense input");
  return params[weight].value * x + params[bias].value.col(0);
}

Vector Dense::backward(ParamSet& params, const Vector& x, const Vector& dy) const {
  require_size(dy, out, "dense output gradient");
  params[weight].grad.noalias() += dy * x.transpose();
  params[bias].grad.col(0) += dy;
  return params[weight].value.transpose() * dy;
}

Mlp Mlp::create(ParamSet& params, const std::string& name, const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("mlp needs at least input and output sizes");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Dense::create(params, name + "." + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return m;
}

Vector Mlp::forward(const ParamSet& params, const Vector& x, Cache* cache) const {
  if (cache) cache->inputs.clear();
  Vector a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (cache) cache->inputs.push_back(a);
    a = layers[i].forward(params, a);
    if (i + 1 < layers.size()) a = a.array().tanh().matrix();
  }
  return a;
}

Vector Mlp::backward(ParamSet& params, const Cache& cache, const Vector& dy) const {
  if (cache.inputs.size() != layers.size()) throw StateError("mlp backward called without a forward cache");
  Vector d = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    d = layers[i].backward(params, cache.inputs[i], d);
    if (i > 0) {
      const Vector& a = cache.inputs[i];  // tanh output of layer i-1
      d = d.cwiseProduct((1.0 - a.array().square()).matrix());
    }
  }
  return d;
}

// ---------------------------------------------------------------- GRU

Gru Gru::create(ParamSet& params, const std::string& name, int input_size, int hidden_size, Rng& rng) {
  Gru g;
  g.w_input = params.add(name + ".w_input", 3 * hidden_size, input_size);
  g.w_hidden = params.add(name + ".w_hidden", 3 * hidden_size, hidden_size);
  g.bias = params.add(name + ".bias", 3 * hidden_size, 1);
  g.input_size = input_size;
  g.hidden_size = hidden_size;
  // Each gate's block is initialized as its own fan_in x fan_out matrix.
  for (int k = 0; k < 3; ++k) {
    Matrix wx(hidden_size, input_size);
    init_glorot(wx, rng);
    params[g.w_input].value.middleRows(k * hidden_size, hidden_size) = wx;
    Matrix wh(hidden_size, hidden_size);
    init_glorot(wh, rng);
    params[g.w_hidden].value.middleRows(k * hidden_size, hidden_size) = wh;
  }
  return g;
}

Vector Gru::recurrent_zr(const ParamSet& params, const Vector& h_prev) const {
  require_size(h_prev, hidden_size, "gru hidden state");
  return params[w_hidden].value.topRows(2 * hidden_size) * h_prev;
}

Vector Gru::step(const ParamSet& params, const Vector& h_prev, const Vector& x, Cache* cache) const {
  require_size(x, input_size, "gru input");
  const Vector proj = params[w_input].value * x;
  return step_projected(params, h_prev, proj, nullptr, cache);
}

Vector Gru::step_projected(const ParamSet& params, const Vector& h_prev, const Vector& input_proj,
                           const Vector* rec_zr, Cache* cache) const {
  const int H = hidden_size;
  require_size(h_prev, H, "gru hidden state");
  require_size(input_proj, 3 * H, "gru input projection");
  const Matrix& wh = params[w_hidden].value;
  const auto b = params[bias].value.col(0);

  Vector local_zr;
  if (rec_zr == nullptr) {
    local_zr = recurrent_zr(params, h_prev);
    rec_zr = &local_zr;
  } else {
    require_size(*rec_zr, 2 * H, "gru recurrent term");
  }
  const Vector zr = sigmoid(input_proj.head(2 * H) + *rec_zr + b.head(2 * H));
  const Vector z = zr.head(H);
  const Vector r = zr.tail(H);
  const Vector rh = r.cwiseProduct(h_prev);
  const Vector rec_c = wh.bottomRows(H) * rh;
  const Vector c = (input_proj.tail(H) + rec_c + b.tail(H)).array().tanh().matrix();
  Vector h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(c);
  if (cache) {
    cache->h_prev = h_prev;
    cache->z = z;
    cache->r = r;
    cache->c = c;
    cache->rh = rh;
  }
  return h;
}

Vector Gru::backward_projected(ParamSet& params, const Cache& cache, const Vector& dh,
                               Vector& dh_prev) const {
  const int H = hidden_size;
  if (cache.z.size() != H) throw StateError("gru backward called without a forward cache");
  require_size(dh, H, "gru output gradient");
  const Matrix& wh = params[w_hidden].value;
  Matrix& g_wh = params[w_hidden].grad;

  const Vector dz = dh.cwiseProduct(cache.c - cache.h_prev);
  const Vector dc = dh.cwiseProduct(cache.z);
  dh_prev = dh.cwiseProduct((1.0 - cache.z.array()).matrix());

  Vector dpre(3 * H);
  dpre.tail(H) = dc.cwiseProduct((1.0 - cache.c.array().square()).matrix());
  g_wh.bottomRows(H).noalias() += dpre.tail(H) * cache.rh.transpose();
  const Vector drh = wh.bottomRows(H).transpose() * dpre.tail(H);
  const Vector dr = drh.cwiseProduct(cache.h_prev);
  dh_prev += drh.cwiseProduct(cache.r);

  dpre.head(H) = dz.cwiseProduct(cache.z.cwiseProduct((1.0 - cache.z.array()).matrix()));
  dpre.segment(H, H) = dr.cwiseProduct(cache.r.cwiseProduct((1.0 - cache.r.array()).matrix()));
  g_wh.topRows(2 * H).noalias() += dpre.head(2 * H) * cache.h_prev.transpose();
  dh_prev += wh.topRows(2 * H).transpose() * dpre.head(2 * H);

  params[bias].grad.col(0) += dpre;
  return dpre;
}

Vector Gru::backward(ParamSet& params, const Cache& cache, const Vector& x, const Vector& dh,
                     Vector& dh_prev) const {
  require_size(x, input_size, "gru input");
  const Vector dpre = backward_projected(params, cache, dh, dh_prev);
  params[w_input].grad.noalias() += dpre * x.transpose();
  return params[w_input].value.transpose() * dpre;
}

// ---------------------------------------------------------------- LSTM

Lstm Lstm::create(ParamSet& params, const std::string& name, int input_size, int hidden_size, Rng& rng) {
  Lstm l;
  l.w_input = params.add(name + ".w_input", 4 * hidden_size, input_size);
  l.w_hidden = params.add(name + ".w_hidden", 4 * hidden_size, hidden_size);
  l.bias = params.add(name + ".bias", 4 * hidden_size, 1);
  l.input_size = input_size;
  l.hidden_size = hidden_size;
  for (int k = 0; k < 4; ++k) {
    Matrix wx(hidden_size, input_size);
    init_glorot(wx, rng);
    params[l.w_input].value.middleRows(k * hidden_size, hidden_size) = wx;
    Matrix wh(hidden_size, hidden_size);
    init_glorot(wh, rng);
    params[l.w_hidden].value.middleRows(k * hidden_size, hidden_size) = wh;
  }
  return l;
}

Lstm::State Lstm::step(const ParamSet& params, const State& prev, const Vector& x, Cache* cache) const {
  const int H = hidden_size;
  require_size(x, input_size, "lstm input");
  require_size(prev.h, H, "lstm hidden state");
  require_size(prev.c, H, "lstm cell state");
  const Vector pre = params[w_input].value * x + params[w_hidden].value * prev.h +
                     params[bias].value.col(0);
  const Vector ifo = sigmoid(pre.head(3 * H));
  const Vector i = ifo.head(H);
  const Vector f = ifo.segment(H, H);
  const Vector o = ifo.tail(H);
  const Vector g = pre.tail(H).array().tanh().matrix();
  State next;
  next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  const Vector tanh_c = next.c.array().tanh().matrix();
  next.h = o.cwiseProduct(tanh_c);
  if (cache) {
    *cache = {x, prev.h, prev.c, i, f, o, g, next.c, tanh_c};
  }
  return next;
}

Vector Lstm::backward(ParamSet& params, const Cache& cache, const State& d_next, State& d_prev) const {
  const int H = hidden_size;
  if (cache.i.size() != H) throw StateError("lstm backward called without a forward cache");
  require_size(d_next.h, H, "lstm hidden gradient");
  require_size(d_next.c, H, "lstm cell gradient");
  const Vector dc = d_next.c + d_next.h.cwiseProduct(cache.o).cwiseProduct(
                                   (1.0 - cache.tanh_c.array().square()).matrix());
  const Vector d_o = d_next.h.cwiseProduct(cache.tanh_c);
  Vector dpre(4 * H);
  dpre.head(H) = dc.cwiseProduct(cache.g).cwiseProduct(cache.i.cwiseProduct((1.0 - cache.i.array()).matrix()));
  dpre.segment(H, H) =
      dc.cwiseProduct(cache.c_prev).cwiseProduct(cache.f.cwiseProduct((1.0 - cache.f.array()).matrix()));
  dpre.segment(2 * H, H) = d_o.cwiseProduct(cache.o.cwiseProduct((1.0 - cache.o.array()).matrix()));
  dpre.tail(H) = dc.cwiseProduct(cache.i).cwiseProduct((1.0 - cache.g.array().square()).matrix());
  d_prev.c = dc.cwiseProduct(cache.f);

  params[w_input].grad.noalias() += dpre * cache.x.transpose();
  params[w_hidden].grad.noalias() += dpre * cache.h_prev.transpose();
  params[bias].grad.col(0) += dpre;
  d_prev.h = params[w_hidden].value.transpose() * dpre;
  return params[w_input].value.transpose() * dpre;
}

// ---------------------------------------------------------------- losses

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double nll_loss(const Vector& probs, int label, LossStats* stats) {
  if (label < 0 || label >= probs.size()) {
    throw IndexError("nll label " + std::to_string(label) + " out of range");
  }
  double p = probs[label];
  if (p < kProbabilityFloor) {
    p = kProbabilityFloor;
    if (stats) ++stats->clamped;
  }
  return -std::log(p);
}

Vector softmax_nll_grad(const Vector& probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw IndexError("nll label " + std::to_string(label) + " out of range");
  }
  Vector g = probs;
  g[label] -= 1.0;
  return g;
}

double mse_loss(double pred, double target) {
  const double d = pred - target;
  return d * d;
}

double mse_grad(double pred, double target) { return 2.0 * (pred - target); }

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("mse: prediction/target length mismatch");
  if (pred.empty()) throw ShapeError("mse of an empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += mse_loss(pred[i], target[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace mbcal::nn
