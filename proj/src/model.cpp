#include "trajpred/model.hpp"

#include <stdexcept>

namespace trajpred {
namespace {

SequenceEncoder add_encoder(ParamStore<double>& store, const std::string& prefix,
                            const ModelConfig& c) {
  SequenceEncoder e;
  e.embed = add_embedding(store, prefix + ".embed", 2, c.embed_dim);
  e.lstm = add_lstm(store, prefix + ".lstm", c.embed_dim, c.hidden_dim);
  e.transformer = add_transformer(store, prefix + ".transformer", c.hidden_dim, c.ffn_dim, c.heads);
  return e;
}

void check_history(const ModelConfig& c, const Trajectory& h, const char* what) {
  if (h.rows() != c.history_steps) {
    throw ShapeError(std::string(what) + " has " + std::to_string(h.rows()) + " steps, model expects " +
                     std::to_string(c.history_steps));
  }
}

}  // namespace

std::string to_string(ModelVariant v) {
  return v == ModelVariant::kFull ? "full" : "naive_lstm";
}

ModelVariant parse_variant(const std::string& s) {
  if (s == "full") return ModelVariant::kFull;
  if (s == "naive_lstm") return ModelVariant::kNaiveLstm;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (history_steps < 1 || horizon < 1 || embed_dim < 1 || hidden_dim < 1 || ffn_dim < 1 ||
      heads < 1 || decoder_hidden < 1 || grid_channels < 1 || grid_cells < 1) {
    throw ShapeError("model dimensions must be positive");
  }
  if (hidden_dim % heads != 0) {
    throw ShapeError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by heads " +
                     std::to_string(heads));
  }
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.history_steps = 3;
  c.horizon = 2;
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.ffn_dim = 12;
  c.heads = 2;
  c.decoder_hidden = 6;
  c.grid_channels = 3;
  c.grid_cells = 3;
  return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  layout_.target = add_encoder(params_, "target", config_);
  if (config_.variant == ModelVariant::kFull) {
    layout_.neighbor = add_encoder(params_, "neighbor", config_);
  }
  layout_.decoder = add_lstm(params_, "decoder.lstm", config_.combined_dim(), config_.decoder_hidden);
  layout_.head = add_linear(params_, "decoder.head", config_.decoder_hidden, 2);
  init_params(params_, seed);
}

Matrix<double> encode_sequences(const ParamStore<double>& params, const SequenceEncoder& encoder,
                                std::span<const Trajectory* const> histories, EncoderTrace* trace) {
  const auto batch = static_cast<Index>(histories.size());
  if (batch == 0) {
    if (trace != nullptr) trace->batch = 0;
    return Matrix<double>(0, encoder.lstm.hidden);
  }
  const Index steps = histories.front()->rows();
  if (steps == 0) throw ShapeError("encode_sequences: empty history");
  Matrix<double> input(steps * batch, 2);
  for (Index b = 0; b < batch; ++b) {
    if (histories[b]->rows() != steps) throw ShapeError("encode_sequences: ragged histories");
    for (Index t = 0; t < steps; ++t) input.row(t * batch + b) = histories[b]->row(t);
  }
  EncoderTrace local;
  EncoderTrace& tr = trace != nullptr ? *trace : local;
  tr.batch = batch;
  tr.embedded = embed_forward(params, encoder.embed, input, &tr.embed);
  tr.lstm = lstm_encode(params, encoder.lstm, tr.embedded, batch);
  Matrix<double> z = transformer_forward(params, encoder.transformer, tr.lstm.hidden, batch,
                                         trace != nullptr ? &tr.transformer : nullptr);
  return z.bottomRows(batch);
}

void encode_sequences_backward(const ParamStore<double>& params, const SequenceEncoder& encoder,
                               const EncoderTrace& trace, const Matrix<double>& dlast,
                               GradientBuffer<double>& grads) {
  if (trace.batch == 0) return;
  Matrix<double> dz = Matrix<double>::Zero(trace.lstm.hidden.rows(), trace.lstm.hidden.cols());
  dz.bottomRows(trace.batch) = dlast;
  Matrix<double> dh = transformer_backward(params, encoder.transformer, trace.transformer, dz, grads);
  Matrix<double> de = lstm_encode_backward(params, encoder.lstm, trace.embedded, trace.lstm, dh, grads);
  embed_backward(params, encoder.embed, trace.embed, de, grads);
}

Vector<double> encode_target(const Model& model, const Trajectory& history) {
  check_history(model.config(), history, "target history");
  const Trajectory* h = &history;
  return encode_sequences(model.params(), model.layout().target, {&h, 1}).row(0).transpose();
}

namespace {

Matrix<double> neighbor_rows(const Model& model, std::span<const NeighborHistory> neighbors,
                             std::vector<GridCell>& cells, EncoderTrace* trace) {
  std::vector<const Trajectory*> histories;
  histories.reserve(neighbors.size());
  cells.clear();
  for (const auto& n : neighbors) {
    check_history(model.config(), n.history, "neighbor history");
    histories.push_back(&n.history);
    cells.push_back(n.cell);
  }
  return encode_sequences(model.params(), *model.layout().neighbor, histories, trace);
}

}  // namespace

SocialEncoding encode_neighbors(const Model& model, std::span<const NeighborHistory> neighbors,
                                const OccupancyMask& mask) {
  const ModelConfig& c = model.config();
  if (!model.layout().neighbor) throw ShapeError("naive_lstm model has no neighbor encoder");
  if (mask.channels() != c.grid_channels || mask.cells() != c.grid_cells) {
    throw ShapeError("occupancy grid does not match model grid");
  }
  std::vector<GridCell> cells;
  Matrix<double> rows = neighbor_rows(model, neighbors, cells, nullptr);
  if (rows.rows() == 0) rows.resize(0, c.hidden_dim);
  return masked_scatter(mask, cells, rows);
}

Prediction forward(const Model& model, const TrajectorySample& sample, ForwardTrace* trace) {
  const ModelConfig& c = model.config();
  const ParamStore<double>& params = model.params();
  const ModelLayout& layout = model.layout();
  check_history(c, sample.target_history, "target history");

  ForwardTrace local;
  ForwardTrace& tr = trace != nullptr ? *trace : local;
  const Trajectory* target = &sample.target_history;
  Matrix<double> z = encode_sequences(params, layout.target, {&target, 1}, &tr.target);

  tr.combined.resize(1, c.combined_dim());
  if (c.variant == ModelVariant::kFull) {
    if (sample.mask.channels() != c.grid_channels || sample.mask.cells() != c.grid_cells) {
      throw ShapeError("occupancy grid does not match model grid");
    }
    Matrix<double> rows = neighbor_rows(model, sample.neighbors, tr.cells, &tr.neighbors);
    if (rows.rows() == 0) rows.resize(0, c.hidden_dim);
    const SocialEncoding grid = masked_scatter(sample.mask, tr.cells, rows);
    const Index social = grid.size();
    tr.combined.leftCols(social) = flatten_social(grid).transpose();
    tr.combined.rightCols(c.hidden_dim) = z;
  } else {
    tr.combined = z;
  }

  tr.decoder = lstm_repeat(params, layout.decoder, tr.combined, c.horizon);
  return linear_forward(params, layout.head, tr.decoder.hidden);
}

std::vector<Prediction> forward(const Model& model, std::span<const TrajectorySample> batch) {
  std::vector<Prediction> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(forward(model, s));
  return out;
}

void backward(const Model& model, const ForwardTrace& trace, const Trajectory& dprediction,
              GradientBuffer<double>& grads) {
  const ModelConfig& c = model.config();
  const ParamStore<double>& params = model.params();
  const ModelLayout& layout = model.layout();

  const Matrix<double> dpred = dprediction;
  Matrix<double> dhidden = linear_backward(params, layout.head, trace.decoder.hidden, dpred, grads);
  Matrix<double> dcombined =
      lstm_repeat_backward(params, layout.decoder, trace.combined, trace.decoder, dhidden, grads);

  const Matrix<double> dz = dcombined.rightCols(c.hidden_dim);
  encode_sequences_backward(params, layout.target, trace.target, dz, grads);

  if (c.variant == ModelVariant::kFull && !trace.cells.empty()) {
    const Index rows = static_cast<Index>(c.grid_channels) * c.grid_cells;
    const Vector<double> dflat = dcombined.leftCols(rows * c.hidden_dim).transpose();
    const SocialEncoding dgrid = unflatten_social(dflat, rows, c.hidden_dim);
    const Matrix<double> drows = masked_gather(dgrid, c.grid_cells, trace.cells);
    encode_sequences_backward(params, *layout.neighbor, trace.neighbors, drows, grads);
  }
}

}  // namespace trajpred
