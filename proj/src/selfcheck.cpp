#include "trajpred/selfcheck.hpp"

#include "trajpred/layers.hpp"
#include "trajpred/model.hpp"
#include "trajpred/social_grid.hpp"
#include "trajpred/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

namespace trajpred {
namespace {

using Mat = Matrix<double>;

Mat random_matrix(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Perturbs every parameter so that zero biases and unit gains do not hide
// wiring mistakes.
void randomize(ParamStore<double>& store, double scale, std::mt19937_64& rng) {
  for (ParamId id = 0; id < store.size(); ++id) {
    Mat& p = store.value(id);
    p += random_matrix(p.rows(), p.cols(), scale, rng);
  }
}

// sum(output .* weights): a scalar whose gradient reaches every output entry.
double weighted_sum(const Mat& y, const Mat& w) { return y.cwiseProduct(w).sum(); }

CheckOutcome outcome(const std::string& name, const GradientCheckResult& r, double tolerance) {
  return {name, r.max_relative_error, tolerance, r.max_relative_error < tolerance, r.worst_parameter};
}

}  // namespace

TrajectorySample random_tiny_sample(int history_steps, int horizon, int channels, int cells,
                                    int neighbors, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TrajectorySample s;
  s.mask = OccupancyMask(channels, cells);
  s.target_history.resize(history_steps, 2);
  for (int t = 0; t < history_steps; ++t) {
    const double back = history_steps - 1 - t;
    s.target_history.row(t) << 0.1 * unit(rng) * back, -2.0 * back + 0.2 * unit(rng);
  }
  s.target_history.row(history_steps - 1).setZero();
  s.future.resize(horizon, 2);
  for (int t = 0; t < horizon; ++t) s.future.row(t) << 0.1 * unit(rng), 2.0 * (t + 1) + 0.3 * unit(rng);

  std::vector<GridCell> free;
  for (int c = 0; c < channels; ++c) {
    for (int g = 0; g < cells; ++g) {
      if (!(GridCell{c, g} == s.mask.target_cell())) free.push_back({c, g});
    }
  }
  std::shuffle(free.begin(), free.end(), rng);
  for (int k = 0; k < std::min<int>(neighbors, static_cast<int>(free.size())); ++k) {
    NeighborHistory n;
    n.cell = free[static_cast<std::size_t>(k)];
    n.vehicle_id = 100 + k;
    n.history.resize(history_steps, 2);
    const double dx = (n.cell.channel - channels / 2) * 3.7;
    const double dy = (n.cell.cell - cells / 2) * 5.0;
    for (int t = 0; t < history_steps; ++t) {
      const double back = history_steps - 1 - t;
      n.history.row(t) << dx + 0.1 * unit(rng), dy - 2.0 * back + 0.2 * unit(rng);
    }
    s.mask.set(n.cell);
    s.neighbors.push_back(std::move(n));
  }
  return s;
}

std::vector<CheckOutcome> gradient_suite(std::uint64_t seed) {
  std::vector<CheckOutcome> out;
  std::mt19937_64 rng(seed);
  GradientCheckOptions opts;
  opts.seed = seed;

  {
    ParamStore<double> store;
    const Linear lin = add_linear(store, "lin", 5, 4);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Mat x = random_matrix(3, 5, 1.0, rng);
    const Mat w = random_matrix(3, 4, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      const Mat y = linear_forward(p, lin, x);
      if (g != nullptr) linear_backward(p, lin, x, w, *g);
      return weighted_sum(y, w);
    };
    out.push_back(outcome("linear", check_gradients(loss, store, opts), 1e-6));
  }
  {
    ParamStore<double> store;
    const Embedding emb = add_embedding(store, "embed", 2, 6);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Mat x = random_matrix(4, 2, 2.0, rng);
    const Mat w = random_matrix(4, 6, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      EmbeddingCache<double> cache;
      const Mat y = embed_forward(p, emb, x, &cache);
      if (g != nullptr) embed_backward(p, emb, cache, w, *g);
      return weighted_sum(y, w);
    };
    out.push_back(outcome("embed", check_gradients(loss, store, opts), 1e-6));
  }
  {
    ParamStore<double> store;
    const Lstm lstm = add_lstm(store, "lstm", 3, 4);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Mat x = random_matrix(2, 3, 1.0, rng);
    const Mat h0 = random_matrix(2, 4, 0.5, rng);
    const Mat c0 = random_matrix(2, 4, 0.5, rng);
    // ||h'||^2 + sum(c') through one step from a non-zero state.
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      const LstmState<double> state{h0, c0};
      const LstmState<double> next = lstm_cell(p, lstm, x, state);
      if (g != nullptr) {
        lstm_cell_backward(p, lstm, x, state, Mat(2.0 * next.h), Mat::Ones(2, 4).eval(), *g);
      }
      return next.h.squaredNorm() + next.c.sum();
    };
    out.push_back(outcome("lstm_cell", check_gradients(loss, store, opts), 1e-4));
  }
  {
    ParamStore<double> store;
    const Lstm lstm = add_lstm(store, "lstm", 3, 5);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Index batch = 2;
    const Mat x = random_matrix(4 * batch, 3, 1.0, rng);
    const Mat w = random_matrix(4 * batch, 5, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      const LstmTrace<double> tr = lstm_encode(p, lstm, x, batch);
      if (g != nullptr) lstm_encode_backward(p, lstm, x, tr, w, *g);
      return weighted_sum(tr.hidden, w);
    };
    out.push_back(outcome("lstm_encode", check_gradients(loss, store, opts), 1e-4));
  }
  {
    ParamStore<double> store;
    const Lstm lstm = add_lstm(store, "dec", 6, 4);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Mat x = random_matrix(1, 6, 1.0, rng);
    const Mat w = random_matrix(3, 4, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      const LstmTrace<double> tr = lstm_repeat(p, lstm, x, 3);
      if (g != nullptr) lstm_repeat_backward(p, lstm, x, tr, w, *g);
      return weighted_sum(tr.hidden, w);
    };
    out.push_back(outcome("lstm_repeat", check_gradients(loss, store, opts), 1e-4));
  }
  {
    ParamStore<double> store;
    const LayerNorm norm = add_layer_norm(store, "norm", 6);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Mat x = random_matrix(3, 6, 2.0, rng);
    const Mat w = random_matrix(3, 6, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      LayerNormCache<double> cache;
      const Mat y = layer_norm_forward(p, norm, x, &cache);
      if (g != nullptr) layer_norm_backward(p, norm, cache, w, *g);
      return weighted_sum(y, w);
    };
    out.push_back(outcome("layer_norm", check_gradients(loss, store, opts), 1e-4));
  }
  {
    ParamStore<double> store;
    const MultiHeadAttention attn = add_attention(store, "attn", 8, 2);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Index batch = 2;
    const Mat x = random_matrix(3 * batch, 8, 1.0, rng);
    const Mat w = random_matrix(3 * batch, 8, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      AttentionCache<double> cache;
      const Mat y = attention_forward(p, attn, x, batch, &cache);
      if (g != nullptr) attention_backward(p, attn, cache, w, *g);
      return weighted_sum(y, w);
    };
    out.push_back(outcome("multi_head_attention", check_gradients(loss, store, opts), 1e-4));
  }
  {
    ParamStore<double> store;
    const TransformerLayer layer = add_transformer(store, "enc", 8, 12, 2);
    init_params(store, seed);
    randomize(store, 0.1, rng);
    const Index batch = 1;
    const Mat x = random_matrix(3, 8, 1.0, rng);
    const Mat w = random_matrix(3, 8, 1.0, rng);
    LossFunction<double> loss = [&](ParamStore<double>& p, GradientBuffer<double>* g) {
      TransformerCache<double> cache;
      const Mat y = transformer_forward(p, layer, x, batch, &cache);
      if (g != nullptr) transformer_backward(p, layer, cache, w, *g);
      return weighted_sum(y, w);
    };
    out.push_back(outcome("transformer_encoder_layer", check_gradients(loss, store, opts), 1e-4));
  }
  for (const ModelVariant variant : {ModelVariant::kFull, ModelVariant::kNaiveLstm}) {
    ModelConfig config = ModelConfig::tiny();
    config.variant = variant;
    Model model(config, seed);
    randomize(model.params(), 0.1, rng);
    std::vector<TrajectorySample> batch;
    for (int i = 0; i < 2; ++i) {
      batch.push_back(random_tiny_sample(config.history_steps, config.horizon, config.grid_channels,
                                         config.grid_cells, 2 + i, seed + 100 + i));
    }
    // check_gradients perturbs model.params() in place, which forward reads.
    LossFunction<double> loss = [&](ParamStore<double>&, GradientBuffer<double>* g) {
      std::vector<Prediction> preds;
      std::vector<Trajectory> truths;
      for (const auto& s : batch) {
        ForwardTrace trace;
        preds.push_back(forward(model, s, &trace));
        truths.push_back(s.future);
        if (g != nullptr) {
          const Trajectory dpred = (2.0 / static_cast<double>(batch.size())) * (preds.back() - s.future);
          backward(model, trace, dpred, *g);
        }
      }
      return trajectory_loss(preds, truths);
    };
    GradientCheckOptions model_opts = opts;
    // The tiny model is small enough to check every coordinate.
    model_opts.max_coordinates = static_cast<std::size_t>(model.params().total_size());
    out.push_back(outcome("model+loss (" + to_string(variant) + ", tiny)",
                          check_gradients(loss, model.params(), model_opts), 1e-4));
  }
  return out;
}

int scatter_oracle_mismatches(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int mismatches = 0;
  for (int k = 0; k < cases; ++k) {
    OccupancyMask mask(3, 13);
    std::vector<GridCell> cells;
    for (int c = 0; c < 3; ++c) {
      for (int g = 0; g < 13; ++g) {
        if (GridCell{c, g} == mask.target_cell()) continue;
        if (rng() % 3 == 0) cells.push_back({c, g});
      }
    }
    std::shuffle(cells.begin(), cells.end(), rng);
    for (const auto& c : cells) mask.set(c);
    const Mat enc = random_matrix(static_cast<Index>(cells.size()), 64, 1.0, rng);
    const SocialEncoding grid = masked_scatter(mask, cells, enc);

    Mat expected = Mat::Zero(39, 64);
    for (int c = 0; c < 3; ++c) {
      for (int g = 0; g < 13; ++g) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i].channel == c && cells[i].cell == g) {
            for (Index f = 0; f < 64; ++f) expected(c * 13 + g, f) = enc(static_cast<Index>(i), f);
          }
        }
      }
    }
    bool ok = (grid.array() == expected.array()).all();
    for (int c = 0; c < 3 && ok; ++c) {
      for (int g = 0; g < 13 && ok; ++g) {
        if (!mask.test(c, g)) ok = (grid.row(c * 13 + g).array() == 0.0).all();
      }
    }
    if (!ok) ++mismatches;
  }
  return mismatches;
}

bool run_selfcheck(std::ostream& log) {
  bool all = true;
  double worst = 0.0;
  char buf[256];
  for (const auto& c : gradient_suite()) {
    std::snprintf(buf, sizeof(buf), "%-4s gradient %-36s max rel. error %.3e (tol %.0e) at %s\n",
                  c.passed ? "PASS" : "FAIL", c.name.c_str(), c.max_relative_error, c.tolerance,
                  c.worst_parameter.c_str());
    log << buf;
    all = all && c.passed;
    worst = std::max(worst, c.max_relative_error);
  }
  const int mismatches = scatter_oracle_mismatches(1000);
  std::snprintf(buf, sizeof(buf), "%-4s masked scatter oracle: %d / 1000 mismatching cases\n",
                mismatches == 0 ? "PASS" : "FAIL", mismatches);
  log << buf;
  all = all && mismatches == 0;
  std::snprintf(buf, sizeof(buf), "max gradient rel. error %.3e\n", worst);
  log << buf;
  return all;
}

}  // namespace trajpred
