#pragma once

// Differentiable building blocks with hand-written reverse passes.
//
// Sequence batches use a time-major row layout: a batch of B sequences of
// length T is a (T*B) x d matrix whose row t*B + b holds step t of sequence b.

#include "trajpred/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace trajpred {

// ---------------------------------------------------------------------------
// Linear

struct Linear {
  ParamId weight = 0;  // out x in
  ParamId bias = 0;    // out x 1, unused when !has_bias
  Index in = 0;
  Index out = 0;
  bool has_bias = true;
};

template <typename Scalar>
Linear add_linear(ParamStore<Scalar>& store, const std::string& prefix, Index in, Index out,
                  bool with_bias = true) {
  Linear l;
  l.weight = store.add(prefix + ".weight", out, in, ParamKind::kWeight);
  if (with_bias) l.bias = store.add(prefix + ".bias", out, 1, ParamKind::kBias);
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  return l;
}

template <typename Scalar>
Matrix<Scalar> linear_forward(const ParamStore<Scalar>& store, const Linear& layer,
                              const Matrix<Scalar>& x) {
  if (x.cols() != layer.in) {
    throw ShapeError("linear: expected " + std::to_string(layer.in) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  Matrix<Scalar> y = x * store.value(layer.weight).transpose();
  if (layer.has_bias) y.rowwise() += store.value(layer.bias).col(0).transpose();
  return y;
}

/// Accumulates weight/bias gradients and returns d(loss)/d(x).
template <typename Scalar>
Matrix<Scalar> linear_backward(const ParamStore<Scalar>& store, const Linear& layer,
                               const Matrix<Scalar>& x, const Matrix<Scalar>& dy,
                               GradientBuffer<Scalar>& grads) {
  grads[layer.weight].noalias() += dy.transpose() * x;
  if (layer.has_bias) grads[layer.bias] += dy.colwise().sum().transpose();
  return dy * store.value(layer.weight);
}

// ---------------------------------------------------------------------------
// Pointwise activations

template <typename Scalar>
Matrix<Scalar> leaky_relu(const Matrix<Scalar>& x, Scalar slope) {
  return x.unaryExpr([slope](Scalar v) { return v > Scalar(0) ? v : slope * v; });
}

template <typename Scalar>
Matrix<Scalar> leaky_relu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy,
                                   Scalar slope) {
  return dy.binaryExpr(x, [slope](Scalar g, Scalar v) { return v > Scalar(0) ? g : slope * g; });
}

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  return dy.binaryExpr(x, [](Scalar g, Scalar v) { return v > Scalar(0) ? g : Scalar(0); });
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  return Scalar(1) / (Scalar(1) + std::exp(-v));
}

// ---------------------------------------------------------------------------
// Point embedding: leaky-ReLU(W p + b).

struct Embedding {
  Linear proj;
  double slope = 0.1;
};

template <typename Scalar>
Embedding add_embedding(ParamStore<Scalar>& store, const std::string& prefix, Index in, Index out) {
  return Embedding{add_linear(store, prefix, in, out), 0.1};
}

template <typename Scalar>
struct EmbeddingCache {
  Matrix<Scalar> input;
  Matrix<Scalar> pre;
};

template <typename Scalar>
Matrix<Scalar> embed_forward(const ParamStore<Scalar>& store, const Embedding& layer,
                             const Matrix<Scalar>& x, EmbeddingCache<Scalar>* cache = nullptr) {
  Matrix<Scalar> pre = linear_forward(store, layer.proj, x);
  Matrix<Scalar> y = leaky_relu(pre, Scalar(layer.slope));
  if (cache != nullptr) {
    cache->input = x;
    cache->pre = std::move(pre);
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> embed_backward(const ParamStore<Scalar>& store, const Embedding& layer,
                              const EmbeddingCache<Scalar>& cache, const Matrix<Scalar>& dy,
                              GradientBuffer<Scalar>& grads) {
  return linear_backward(store, layer.proj, cache.input,
                         leaky_relu_backward(cache.pre, dy, Scalar(layer.slope)), grads);
}

// ---------------------------------------------------------------------------
// LSTM. Gate blocks are stacked in the order input, forget, cell, output.

struct Lstm {
  ParamId w_ih = 0;  // 4H x in
  ParamId w_hh = 0;  // 4H x H
  ParamId bias = 0;  // 4H x 1
  Index input = 0;
  Index hidden = 0;
};

template <typename Scalar>
Lstm add_lstm(ParamStore<Scalar>& store, const std::string& prefix, Index input, Index hidden) {
  Lstm l;
  l.w_ih = store.add(prefix + ".w_ih", 4 * hidden, input, ParamKind::kWeight);
  l.w_hh = store.add(prefix + ".w_hh", 4 * hidden, hidden, ParamKind::kWeight);
  l.bias = store.add(prefix + ".bias", 4 * hidden, 1, ParamKind::kLstmBias);
  l.input = input;
  l.hidden = hidden;
  return l;
}

template <typename Scalar>
struct LstmState {
  Matrix<Scalar> h;
  Matrix<Scalar> c;
};

/// Activated gates (B x 4H) plus the cell state of every step.
template <typename Scalar>
struct LstmTrace {
  Index steps = 0;
  Index batch = 0;
  std::vector<Matrix<Scalar>> gates;
  std::vector<Matrix<Scalar>> cells;
  Matrix<Scalar> hidden;  // (steps*batch) x H, time-major
};

namespace detail {

// One recurrence step given the input contribution x W_ih^T + b.
template <typename Scalar>
void lstm_gates(const ParamStore<Scalar>& store, const Lstm& layer, const Matrix<Scalar>& input_proj,
                const Matrix<Scalar>& h_prev, const Matrix<Scalar>& c_prev, Matrix<Scalar>& gates,
                Matrix<Scalar>& c, Matrix<Scalar>& h) {
  const Index H = layer.hidden;
  gates = input_proj;
  gates.noalias() += h_prev * store.value(layer.w_hh).transpose();
  for (Index r = 0; r < gates.rows(); ++r) {
    for (Index j = 0; j < H; ++j) {
      gates(r, j) = sigmoid(gates(r, j));
      gates(r, H + j) = sigmoid(gates(r, H + j));
      gates(r, 2 * H + j) = std::tanh(gates(r, 2 * H + j));
      gates(r, 3 * H + j) = sigmoid(gates(r, 3 * H + j));
    }
  }
  c = gates.middleCols(H, H).cwiseProduct(c_prev) +
      gates.leftCols(H).cwiseProduct(gates.middleCols(2 * H, H));
  h = gates.rightCols(H).cwiseProduct(c.array().tanh().matrix());
}

// Runs the recurrence from a zero state; input_proj(t) yields B x 4H.
template <typename Scalar, typename InputProj>
LstmTrace<Scalar> lstm_recur(const ParamStore<Scalar>& store, const Lstm& layer, Index steps,
                             Index batch, InputProj&& input_proj) {
  const Index H = layer.hidden;
  LstmTrace<Scalar> trace;
  trace.steps = steps;
  trace.batch = batch;
  trace.gates.resize(steps);
  trace.cells.resize(steps);
  trace.hidden.resize(steps * batch, H);
  Matrix<Scalar> h = Matrix<Scalar>::Zero(batch, H);
  Matrix<Scalar> c_prev = Matrix<Scalar>::Zero(batch, H);
  for (Index t = 0; t < steps; ++t) {
    Matrix<Scalar> h_next;
    lstm_gates(store, layer, input_proj(t), h, c_prev, trace.gates[t], trace.cells[t], h_next);
    trace.hidden.middleRows(t * batch, batch) = h_next;
    h = std::move(h_next);
    c_prev = trace.cells[t];
  }
  return trace;
}

// Backpropagates through time. Accumulates W_hh and bias gradients and
// returns the pre-activation gradients dZ ((steps*batch) x 4H, time-major),
// leaving the input-side contraction to the caller.
template <typename Scalar>
Matrix<Scalar> lstm_recur_backward(const ParamStore<Scalar>& store, const Lstm& layer,
                                   const LstmTrace<Scalar>& trace, const Matrix<Scalar>& dhidden,
                                   GradientBuffer<Scalar>& grads) {
  const Index H = layer.hidden;
  const Index B = trace.batch;
  const Matrix<Scalar>& w_hh = store.value(layer.w_hh);
  Matrix<Scalar> dz_all(trace.steps * B, 4 * H);
  Matrix<Scalar> dh_next = Matrix<Scalar>::Zero(B, H);
  Matrix<Scalar> dc_next = Matrix<Scalar>::Zero(B, H);
  Matrix<Scalar> dz(B, 4 * H);
  for (Index t = trace.steps - 1; t >= 0; --t) {
    const Matrix<Scalar>& g = trace.gates[t];
    const Matrix<Scalar>& c = trace.cells[t];
    for (Index r = 0; r < B; ++r) {
      for (Index j = 0; j < H; ++j) {
        const Scalar i_g = g(r, j);
        const Scalar f_g = g(r, H + j);
        const Scalar c_g = g(r, 2 * H + j);
        const Scalar o_g = g(r, 3 * H + j);
        const Scalar tc = std::tanh(c(r, j));
        const Scalar dh = dhidden(t * B + r, j) + dh_next(r, j);
        const Scalar dc = dc_next(r, j) + dh * o_g * (Scalar(1) - tc * tc);
        const Scalar c_prev = t > 0 ? trace.cells[t - 1](r, j) : Scalar(0);
        dz(r, j) = dc * c_g * i_g * (Scalar(1) - i_g);
        dz(r, H + j) = dc * c_prev * f_g * (Scalar(1) - f_g);
        dz(r, 2 * H + j) = dc * i_g * (Scalar(1) - c_g * c_g);
        dz(r, 3 * H + j) = dh * tc * o_g * (Scalar(1) - o_g);
        dc_next(r, j) = dc * f_g;
      }
    }
    if (t > 0) {
      grads[layer.w_hh].noalias() +=
          dz.transpose() * trace.hidden.middleRows((t - 1) * B, B);
    }
    grads[layer.bias] += dz.colwise().sum().transpose();
    dh_next.noalias() = dz * w_hh;
    dz_all.middleRows(t * B, B) = dz;
  }
  return dz_all;
}

}  // namespace detail

/// Single LSTM step from an explicit state.
template <typename Scalar>
LstmState<Scalar> lstm_cell(const ParamStore<Scalar>& store, const Lstm& layer,
                            const Matrix<Scalar>& x, const LstmState<Scalar>& state) {
  if (x.cols() != layer.input || state.h.cols() != layer.hidden ||
      state.c.cols() != layer.hidden || state.h.rows() != x.rows() ||
      state.c.rows() != x.rows()) {
    throw ShapeError("lstm_cell: inconsistent input/state shapes");
  }
  Matrix<Scalar> proj = x * store.value(layer.w_ih).transpose();
  proj.rowwise() += store.value(layer.bias).col(0).transpose();
  Matrix<Scalar> gates;
  LstmState<Scalar> next;
  detail::lstm_gates(store, layer, proj, state.h, state.c, gates, next.c, next.h);
  return next;
}

template <typename Scalar>
struct LstmCellGradients {
  Matrix<Scalar> dx;
  Matrix<Scalar> dh;
  Matrix<Scalar> dc;
};

/// Reverse pass of lstm_cell given d(loss)/d(h') and d(loss)/d(c').
template <typename Scalar>
LstmCellGradients<Scalar> lstm_cell_backward(const ParamStore<Scalar>& store, const Lstm& layer,
                                             const Matrix<Scalar>& x, const LstmState<Scalar>& state,
                                             const Matrix<Scalar>& dh_next,
                                             const Matrix<Scalar>& dc_next,
                                             GradientBuffer<Scalar>& grads) {
  const Index H = layer.hidden;
  Matrix<Scalar> proj = x * store.value(layer.w_ih).transpose();
  proj.rowwise() += store.value(layer.bias).col(0).transpose();
  Matrix<Scalar> gates, c, h;
  detail::lstm_gates(store, layer, proj, state.h, state.c, gates, c, h);
  Matrix<Scalar> dz(x.rows(), 4 * H);
  LstmCellGradients<Scalar> out;
  out.dc.resize(x.rows(), H);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index j = 0; j < H; ++j) {
      const Scalar i_g = gates(r, j);
      const Scalar f_g = gates(r, H + j);
      const Scalar c_g = gates(r, 2 * H + j);
      const Scalar o_g = gates(r, 3 * H + j);
      const Scalar tc = std::tanh(c(r, j));
      const Scalar dc = dc_next(r, j) + dh_next(r, j) * o_g * (Scalar(1) - tc * tc);
      dz(r, j) = dc * c_g * i_g * (Scalar(1) - i_g);
      dz(r, H + j) = dc * state.c(r, j) * f_g * (Scalar(1) - f_g);
      dz(r, 2 * H + j) = dc * i_g * (Scalar(1) - c_g * c_g);
      dz(r, 3 * H + j) = dh_next(r, j) * tc * o_g * (Scalar(1) - o_g);
      out.dc(r, j) = dc * f_g;
    }
  }
  grads[layer.w_ih].noalias() += dz.transpose() * x;
  grads[layer.w_hh].noalias() += dz.transpose() * state.h;
  grads[layer.bias] += dz.colwise().sum().transpose();
  out.dx = dz * store.value(layer.w_ih);
  out.dh = dz * store.value(layer.w_hh);
  return out;
}

/// Encodes B sequences of length `steps` (time-major rows) from a zero state
/// and returns every hidden state.
template <typename Scalar>
LstmTrace<Scalar> lstm_encode(const ParamStore<Scalar>& store, const Lstm& layer,
                              const Matrix<Scalar>& x, Index batch) {
  if (batch <= 0 || x.rows() == 0) throw ShapeError("lstm_encode: empty sequence");
  if (x.rows() % batch != 0 || x.cols() != layer.input) {
    throw ShapeError("lstm_encode: input shape does not match layer/batch");
  }
  const Index steps = x.rows() / batch;
  Matrix<Scalar> proj = x * store.value(layer.w_ih).transpose();
  proj.rowwise() += store.value(layer.bias).col(0).transpose();
  return detail::lstm_recur(store, layer, steps, batch,
                            [&](Index t) -> Matrix<Scalar> { return proj.middleRows(t * batch, batch); });
}

template <typename Scalar>
Matrix<Scalar> lstm_encode_backward(const ParamStore<Scalar>& store, const Lstm& layer,
                                    const Matrix<Scalar>& x, const LstmTrace<Scalar>& trace,
                                    const Matrix<Scalar>& dhidden, GradientBuffer<Scalar>& grads) {
  Matrix<Scalar> dz = detail::lstm_recur_backward(store, layer, trace, dhidden, grads);
  grads[layer.w_ih].noalias() += dz.transpose() * x;
  return dz * store.value(layer.w_ih);
}

/// Feeds the same input x (B x in) at each of `steps` steps.
template <typename Scalar>
LstmTrace<Scalar> lstm_repeat(const ParamStore<Scalar>& store, const Lstm& layer,
                              const Matrix<Scalar>& x, Index steps) {
  if (x.cols() != layer.input) throw ShapeError("lstm_repeat: input width mismatch");
  Matrix<Scalar> proj = x * store.value(layer.w_ih).transpose();
  proj.rowwise() += store.value(layer.bias).col(0).transpose();
  return detail::lstm_recur(store, layer, steps, x.rows(),
                            [&](Index) -> const Matrix<Scalar>& { return proj; });
}

template <typename Scalar>
Matrix<Scalar> lstm_repeat_backward(const ParamStore<Scalar>& store, const Lstm& layer,
                                    const Matrix<Scalar>& x, const LstmTrace<Scalar>& trace,
                                    const Matrix<Scalar>& dhidden, GradientBuffer<Scalar>& grads) {
  Matrix<Scalar> dz = detail::lstm_recur_backward(store, layer, trace, dhidden, grads);
  Matrix<Scalar> dz_sum = Matrix<Scalar>::Zero(x.rows(), dz.cols());
  for (Index t = 0; t < trace.steps; ++t) dz_sum += dz.middleRows(t * trace.batch, trace.batch);
  grads[layer.w_ih].noalias() += dz_sum.transpose() * x;
  return dz_sum * store.value(layer.w_ih);
}

// ---------------------------------------------------------------------------
// Layer normalization over the feature (column) axis of each row.

struct LayerNorm {
  ParamId gain = 0;  // d x 1
  ParamId bias = 0;  // d x 1
  Index dim = 0;
  double epsilon = 1e-5;
};

template <typename Scalar>
LayerNorm add_layer_norm(ParamStore<Scalar>& store, const std::string& prefix, Index dim) {
  LayerNorm n;
  n.gain = store.add(prefix + ".gain", dim, 1, ParamKind::kNormGain);
  n.bias = store.add(prefix + ".bias", dim, 1, ParamKind::kNormBias);
  n.dim = dim;
  return n;
}

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;  // pre-affine
  Vector<Scalar> inv_std;
};

template <typename Scalar>
Matrix<Scalar> normalize_rows(const Matrix<Scalar>& x, Scalar epsilon, Vector<Scalar>* inv_std) {
  const Index d = x.cols();
  Matrix<Scalar> out(x.rows(), d);
  if (inv_std != nullptr) inv_std->resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().sum() / Scalar(d);
    const Scalar is = Scalar(1) / std::sqrt(var + epsilon);
    out.row(r) = (x.row(r).array() - mean) * is;
    if (inv_std != nullptr) (*inv_std)(r) = is;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_forward(const ParamStore<Scalar>& store, const LayerNorm& layer,
                                  const Matrix<Scalar>& x, LayerNormCache<Scalar>* cache = nullptr) {
  if (x.cols() != layer.dim) throw ShapeError("layer_norm: width mismatch");
  Vector<Scalar> inv_std;
  Matrix<Scalar> xhat = normalize_rows(x, Scalar(layer.epsilon), &inv_std);
  Matrix<Scalar> y = xhat.array().rowwise() * store.value(layer.gain).col(0).transpose().array();
  y.rowwise() += store.value(layer.bias).col(0).transpose();
  if (cache != nullptr) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const ParamStore<Scalar>& store, const LayerNorm& layer,
                                   const LayerNormCache<Scalar>& cache, const Matrix<Scalar>& dy,
                                   GradientBuffer<Scalar>& grads) {
  const Matrix<Scalar>& xhat = cache.normalized;
  grads[layer.gain] += dy.cwiseProduct(xhat).colwise().sum().transpose();
  grads[layer.bias] += dy.colwise().sum().transpose();
  Matrix<Scalar> dxhat = dy.array().rowwise() * store.value(layer.gain).col(0).transpose().array();
  const Scalar d = Scalar(layer.dim);
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Index r = 0; r < dy.rows(); ++r) {
    const Scalar sum_d = dxhat.row(r).sum();
    const Scalar sum_dx = dxhat.row(r).dot(xhat.row(r));
    dx.row(r) = (cache.inv_std(r) / d) *
                (d * dxhat.row(r).array() - sum_d - xhat.row(r).array() * sum_dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention over each sequence of a time-major batch.

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  Index heads = 1;
  Index dim = 0;
};

template <typename Scalar>
MultiHeadAttention add_attention(ParamStore<Scalar>& store, const std::string& prefix, Index dim,
                                 Index heads) {
  if (heads <= 0 || dim % heads != 0) {
    throw ShapeError("attention: model width " + std::to_string(dim) +
                     " is not divisible by head count " + std::to_string(heads));
  }
  MultiHeadAttention a;
  a.query = add_linear(store, prefix + ".query", dim, dim);
  // A key bias adds q.b to every score in a row, which softmax cancels.
  a.key = add_linear(store, prefix + ".key", dim, dim, false);
  a.value = add_linear(store, prefix + ".value", dim, dim);
  a.output = add_linear(store, prefix + ".output", dim, dim);
  a.heads = heads;
  a.dim = dim;
  return a;
}

template <typename Scalar>
struct AttentionCache {
  Index steps = 0;
  Index batch = 0;
  Matrix<Scalar> input;
  Matrix<Scalar> q, k, v;
  Matrix<Scalar> context;               // concatenated head outputs
  std::vector<Matrix<Scalar>> weights;  // [b * heads + h], steps x steps
};

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& scores) {
  if (!scores.allFinite()) throw NumericError("softmax: non-finite attention scores");
  Matrix<Scalar> out(scores.rows(), scores.cols());
  for (Index r = 0; r < scores.rows(); ++r) {
    const Scalar m = scores.row(r).maxCoeff();
    out.row(r) = (scores.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> attention_forward(const ParamStore<Scalar>& store, const MultiHeadAttention& layer,
                                 const Matrix<Scalar>& x, Index batch,
                                 AttentionCache<Scalar>* cache = nullptr) {
  if (batch <= 0 || x.rows() % batch != 0 || x.cols() != layer.dim) {
    throw ShapeError("attention: input shape does not match layer/batch");
  }
  const Index T = x.rows() / batch;
  const Index dh = layer.dim / layer.heads;
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
  Matrix<Scalar> q = linear_forward(store, layer.query, x);
  Matrix<Scalar> k = linear_forward(store, layer.key, x);
  Matrix<Scalar> v = linear_forward(store, layer.value, x);
  Matrix<Scalar> context(x.rows(), layer.dim);
  std::vector<Matrix<Scalar>> weights;
  if (cache != nullptr) weights.reserve(batch * layer.heads);
  for (Index b = 0; b < batch; ++b) {
    const auto rows = Eigen::seqN(b, T, batch);
    for (Index h = 0; h < layer.heads; ++h) {
      const auto cols = Eigen::seqN(h * dh, dh);
      Matrix<Scalar> qh = q(rows, cols);
      Matrix<Scalar> kh = k(rows, cols);
      Matrix<Scalar> vh = v(rows, cols);
      Matrix<Scalar> a = softmax_rows<Scalar>((qh * kh.transpose()) * scale);
      context(rows, cols) = a * vh;
      if (cache != nullptr) weights.push_back(std::move(a));
    }
  }
  Matrix<Scalar> y = linear_forward(store, layer.output, context);
  if (cache != nullptr) {
    cache->steps = T;
    cache->batch = batch;
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->context = std::move(context);
    cache->weights = std::move(weights);
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> attention_backward(const ParamStore<Scalar>& store, const MultiHeadAttention& layer,
                                  const AttentionCache<Scalar>& cache, const Matrix<Scalar>& dy,
                                  GradientBuffer<Scalar>& grads) {
  const Index T = cache.steps;
  const Index B = cache.batch;
  const Index dh = layer.dim / layer.heads;
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
  Matrix<Scalar> dcontext = linear_backward(store, layer.output, cache.context, dy, grads);
  Matrix<Scalar> dq(cache.q.rows(), cache.q.cols());
  Matrix<Scalar> dk(cache.k.rows(), cache.k.cols());
  Matrix<Scalar> dv(cache.v.rows(), cache.v.cols());
  for (Index b = 0; b < B; ++b) {
    const auto rows = Eigen::seqN(b, T, B);
    for (Index h = 0; h < layer.heads; ++h) {
      const auto cols = Eigen::seqN(h * dh, dh);
      const Matrix<Scalar>& a = cache.weights[b * layer.heads + h];
      Matrix<Scalar> qh = cache.q(rows, cols);
      Matrix<Scalar> kh = cache.k(rows, cols);
      Matrix<Scalar> vh = cache.v(rows, cols);
      Matrix<Scalar> dout = dcontext(rows, cols);
      Matrix<Scalar> da = dout * vh.transpose();
      dv(rows, cols) = a.transpose() * dout;
      Vector<Scalar> row_dot = da.cwiseProduct(a).rowwise().sum();
      Matrix<Scalar> ds = a.cwiseProduct(da.colwise() - row_dot) * scale;
      dq(rows, cols) = ds * kh;
      dk(rows, cols) = ds.transpose() * qh;
    }
  }
  Matrix<Scalar> dx = linear_backward(store, layer.query, cache.input, dq, grads);
  dx += linear_backward(store, layer.key, cache.input, dk, grads);
  dx += linear_backward(store, layer.value, cache.input, dv, grads);
  return dx;
}

// ---------------------------------------------------------------------------
// Post-norm transformer encoder layer:
//   U = LayerNorm(H + MHA(H));  Z = LayerNorm(U + FFN(U)),  FFN = Linear-ReLU-Linear.

struct TransformerLayer {
  MultiHeadAttention attention;
  LayerNorm norm1;
  Linear ffn_in;
  Linear ffn_out;
  LayerNorm norm2;
};

template <typename Scalar>
TransformerLayer add_transformer(ParamStore<Scalar>& store, const std::string& prefix, Index dim,
                                 Index ffn_dim, Index heads) {
  TransformerLayer t;
  t.attention = add_attention(store, prefix + ".attn", dim, heads);
  t.norm1 = add_layer_norm(store, prefix + ".norm1", dim);
  t.ffn_in = add_linear(store, prefix + ".ffn_in", dim, ffn_dim);
  t.ffn_out = add_linear(store, prefix + ".ffn_out", ffn_dim, dim);
  t.norm2 = add_layer_norm(store, prefix + ".norm2", dim);
  return t;
}

template <typename Scalar>
struct TransformerCache {
  AttentionCache<Scalar> attention;
  LayerNormCache<Scalar> norm1;
  Matrix<Scalar> u;
  Matrix<Scalar> ffn_pre;
  Matrix<Scalar> ffn_act;
  LayerNormCache<Scalar> norm2;
};

template <typename Scalar>
Matrix<Scalar> transformer_forward(const ParamStore<Scalar>& store, const TransformerLayer& layer,
                                   const Matrix<Scalar>& x, Index batch,
                                   TransformerCache<Scalar>* cache = nullptr) {
  AttentionCache<Scalar>* ac = cache != nullptr ? &cache->attention : nullptr;
  Matrix<Scalar> r1 = x + attention_forward(store, layer.attention, x, batch, ac);
  Matrix<Scalar> u =
      layer_norm_forward(store, layer.norm1, r1, cache != nullptr ? &cache->norm1 : nullptr);
  Matrix<Scalar> pre = linear_forward(store, layer.ffn_in, u);
  Matrix<Scalar> act = relu(pre);
  Matrix<Scalar> r2 = u + linear_forward(store, layer.ffn_out, act);
  Matrix<Scalar> z =
      layer_norm_forward(store, layer.norm2, r2, cache != nullptr ? &cache->norm2 : nullptr);
  if (cache != nullptr) {
    cache->u = std::move(u);
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
  }
  return z;
}

template <typename Scalar>
Matrix<Scalar> transformer_backward(const ParamStore<Scalar>& store, const TransformerLayer& layer,
                                    const TransformerCache<Scalar>& cache, const Matrix<Scalar>& dz,
                                    GradientBuffer<Scalar>& grads) {
  Matrix<Scalar> dr2 = layer_norm_backward(store, layer.norm2, cache.norm2, dz, grads);
  Matrix<Scalar> dact = linear_backward(store, layer.ffn_out, cache.ffn_act, dr2, grads);
  Matrix<Scalar> du =
      dr2 + linear_backward(store, layer.ffn_in, cache.u, relu_backward(cache.ffn_pre, dact), grads);
  Matrix<Scalar> dr1 = layer_norm_backward(store, layer.norm1, cache.norm1, du, grads);
  return dr1 + attention_backward(store, layer.attention, cache.attention, dr1, grads);
}

// ---------------------------------------------------------------------------
// Initialization

/// Deterministic seeded initialization in store insertion order: weights
/// uniform in +-sqrt(6 / (fan_in + fan_out)), biases 0, LSTM forget-gate bias
/// 1, norm gains 1.
template <typename Scalar>
void init_params(ParamStore<Scalar>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (ParamId id = 0; id < store.size(); ++id) {
    Matrix<Scalar>& p = store.value(id);
    switch (store.kind(id)) {
      case ParamKind::kWeight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Index c = 0; c < p.cols(); ++c) {
          for (Index r = 0; r < p.rows(); ++r) p(r, c) = Scalar(dist(rng));
        }
        break;
      }
      case ParamKind::kBias:
      case ParamKind::kNormBias:
        p.setZero();
        break;
      case ParamKind::kLstmBias: {
        p.setZero();
        const Index hidden = p.rows() / 4;
        p.middleRows(hidden, hidden).setOnes();
        break;
      }
      case ParamKind::kNormGain:
        p.setOnes();
        break;
    }
  }
}

}  // namespace trajpred
