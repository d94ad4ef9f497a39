#pragma once

// Tree transformer encoder: a stack of layers, each running pooled PTA
// self-attention on both clouds, pooled PTA cross-attention between them,
// and a feedforward block. Every block is pre-norm residual:
// x + block(LN(x)).

#include <cstddef>
#include <vector>

#include "ptt/attention.hpp"
#include "ptt/numerics.hpp"
#include "ptt/point_tree.hpp"
#include "ptt/pta.hpp"
#include "ptt/random.hpp"

namespace ptt {

/// Uniform init: the first layer in ±1/sqrt(in), the second in ±1/sqrt(hidden).
TwoLayerMlp random_mlp(std::size_t in, std::size_t hidden, std::size_t out, SplitMix64& rng);

struct EncoderConfig {
  std::size_t model_dim = 264;  // D, a multiple of both 6 and the head count
  std::size_t heads = 8;        // H
  std::size_t layers = 6;       // L_e
  std::size_t top_s = 8;        // S
  std::size_t tree_layers = 3;  // needed for unshared attention weights
  bool share_tree_params = true;
  double pe_base = kDefaultPeBase;

  /// Throws Config on inconsistent dimensions.
  void validate() const;
};

struct LayerNormParams {
  std::vector<double> gain;
  std::vector<double> bias;

  Matrix apply(const Matrix& x) const { return layer_norm(x, gain, bias); }
  static LayerNormParams identity(std::size_t dim);
};

struct PtaSublayer {
  LayerNormParams norm;
  PoolingMlp pool;
  PtaWeights attn;
};

struct FeedForward {
  LayerNormParams norm;
  TwoLayerMlp mlp;  // D → 2D → D
};

struct EncoderLayerWeights {
  PtaSublayer self_attn;
  PtaSublayer cross_attn;
  FeedForward ffn;
};

struct EncoderWeights {
  std::vector<EncoderLayerWeights> layers;

  static EncoderWeights random(const EncoderConfig& cfg, SplitMix64& rng);
};

struct EncoderOutput {
  Matrix x;  // conditioned densest-layer features of the first cloud
  Matrix y;
};

EncoderOutput encode(const PointTree& tree_x, const PointTree& tree_y, const Matrix& init_x,
                     const Matrix& init_y, const EncoderConfig& cfg, const EncoderWeights& weights);

}  // namespace ptt
