#pragma once

// Dense multi-head attention, the reference every sparse path is checked
// against, plus sinusoidal positional encoding of 3-D coordinates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptt/numerics.hpp"
#include "ptt/random.hpp"

namespace ptt {

struct MhaWeights {
  std::size_t model_dim = 0;
  std::size_t heads = 0;
  std::vector<Matrix> wq;  // per head, model_dim × head_dim
  std::vector<Matrix> wk;
  std::vector<Matrix> wv;
  Matrix wo;               // heads·head_dim × model_dim

  std::size_t head_dim() const { return heads == 0 ? 0 : model_dim / heads; }

  /// Throws Contract when shapes disagree or model_dim % heads != 0.
  void validate() const;

  /// Uniform init in [-1/sqrt(D), 1/sqrt(D)].
  static MhaWeights random(std::size_t model_dim, std::size_t heads, SplitMix64& rng);
};

struct AttentionOutput {
  Matrix features;  // n_q × D
  Matrix map;       // n_q × n_k, head-averaged softmax weights
};

/// Work and buffer accounting shared by the dense and sparse attention paths.
struct WorkCounter {
  std::uint64_t key_evaluations = 0;
  std::uint64_t peak_buffer_bytes = 0;

  void record(std::uint64_t keys, std::uint64_t buffer_bytes) {
    key_evaluations += keys;
    if (buffer_bytes > peak_buffer_bytes) peak_buffer_bytes = buffer_bytes;
  }
};

/// Bytes of score buffers held by one attention call: one softmax row per
/// head plus the head-averaged map, per attended entry.
inline std::uint64_t attention_buffer_bytes(std::uint64_t attended_entries, std::size_t heads) {
  return attended_entries * (heads + 1) * sizeof(double);
}

/// Per-head query/key/value projections of a block of features.
struct HeadProjections {
  std::vector<Matrix> q;
  std::vector<Matrix> k;
  std::vector<Matrix> v;
};

HeadProjections project_heads(const Matrix& fq, const Matrix& fk, const MhaWeights& w);

inline double scaled_dot(std::span<const double> a, std::span<const double> b, double inv_sqrt_dk) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc * inv_sqrt_dk;
}

AttentionOutput multihead_attention(const Matrix& fq, const Matrix& fk, const MhaWeights& w,
                                    WorkCounter* counter = nullptr);
AttentionOutput multihead_attention(const Matrix& fq, const Matrix& fk, const MhaWeights& w,
                                    const Mask& mask, WorkCounter* counter = nullptr);

inline constexpr double kDefaultPeBase = 10000.0;

/// Per-axis sinusoidal encoding: for axis a and pair k < D/6, columns
/// a·D/3 + 2k and a·D/3 + 2k + 1 hold sin and cos of coord[a] / base^(6k/D).
/// Throws Config when D is not a positive multiple of 6.
Matrix sinusoidal_pe(std::span<const Vec3> coords, std::size_t model_dim,
                     double base_freq = kDefaultPeBase);

}  // namespace ptt
