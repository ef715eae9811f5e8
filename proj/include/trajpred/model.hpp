#pragma once

// Hybrid LSTM + transformer trajectory predictor.
//
//   target history  -> embed -> LSTM -> transformer -> last row ----------------------.
//   neighbor histories -> embed -> LSTM -> transformer -> last rows -> masked scatter -> flatten
//   concat(flattened grid, target encoding) -> decoder LSTM (same input every step) -> linear head

#include "trajpred/data_pipeline.hpp"
#include "trajpred/layers.hpp"
#include "trajpred/social_grid.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trajpred {

enum class ModelVariant { kFull, kNaiveLstm };

std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& s);

struct ModelConfig {
  int history_steps = 15;
  int horizon = 5;
  int embed_dim = 32;
  int hidden_dim = 64;
  int ffn_dim = 512;
  int heads = 8;
  int decoder_hidden = 128;
  int grid_channels = 3;
  int grid_cells = 13;
  ModelVariant variant = ModelVariant::kFull;

  Index combined_dim() const {
    return variant == ModelVariant::kFull
               ? static_cast<Index>(grid_channels) * grid_cells * hidden_dim + hidden_dim
               : hidden_dim;
  }
  /// Throws ShapeError on inconsistent dimensions.
  void validate() const;

  /// T=3, hidden 8, 3x3 grid: same wiring at gradient-check scale.
  static ModelConfig tiny();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using Prediction = Trajectory;

/// Embedding, LSTM and transformer stack shared by all sequences it encodes.
struct SequenceEncoder {
  Embedding embed;
  Lstm lstm;
  TransformerLayer transformer;
};

struct ModelLayout {
  SequenceEncoder target;
  std::optional<SequenceEncoder> neighbor;
  Lstm decoder;
  Linear head;
};

class Model {
 public:
  explicit Model(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  const ModelLayout& layout() const { return layout_; }
  ParamStore<double>& params() { return params_; }
  const ParamStore<double>& params() const { return params_; }

 private:
  ModelConfig config_;
  ParamStore<double> params_;
  ModelLayout layout_;
};

struct EncoderTrace {
  Index batch = 0;
  EmbeddingCache<double> embed;
  Matrix<double> embedded;
  LstmTrace<double> lstm;
  TransformerCache<double> transformer;
};

/// Encodes a batch of equal-length histories; returns the last-step row of
/// the transformer output per history (batch x hidden).
Matrix<double> encode_sequences(const ParamStore<double>& params, const SequenceEncoder& encoder,
                                std::span<const Trajectory* const> histories,
                                EncoderTrace* trace = nullptr);
void encode_sequences_backward(const ParamStore<double>& params, const SequenceEncoder& encoder,
                               const EncoderTrace& trace, const Matrix<double>& dlast,
                               GradientBuffer<double>& grads);

Vector<double> encode_target(const Model& model, const Trajectory& history);
SocialEncoding encode_neighbors(const Model& model, std::span<const NeighborHistory> neighbors,
                                const OccupancyMask& mask);

struct ForwardTrace {
  EncoderTrace target;
  EncoderTrace neighbors;
  std::vector<GridCell> cells;
  Matrix<double> combined;  // 1 x combined_dim
  LstmTrace<double> decoder;
};

Prediction forward(const Model& model, const TrajectorySample& sample, ForwardTrace* trace = nullptr);
std::vector<Prediction> forward(const Model& model, std::span<const TrajectorySample> batch);

/// Accumulates parameter gradients given d(loss)/d(prediction).
void backward(const Model& model, const ForwardTrace& trace, const Trajectory& dprediction,
              GradientBuffer<double>& grads);

}  // namespace trajpred
