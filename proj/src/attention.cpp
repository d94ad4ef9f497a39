#include "ptt/attention.hpp"

#include <cmath>
#include <string>

#include "ptt/error.hpp"

namespace ptt {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

AttentionOutput attend(const Matrix& fq, const Matrix& fk, const MhaWeights& w, const Mask* mask,
                       WorkCounter* counter) {
  w.validate();
  require(fq.cols() == w.model_dim && fk.cols() == w.model_dim,
          "multihead_attention: feature width does not match model dim");
  if (mask != nullptr)
    require(mask->rows() == fq.rows() && mask->cols() == fk.rows(),
            "multihead_attention: mask shape does not match queries x keys");
  const std::size_t nq = fq.rows();
  const std::size_t nk = fk.rows();
  const std::size_t dk = w.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const HeadProjections proj = project_heads(fq, fk, w);

  Matrix concat(nq, w.heads * dk);
  Matrix map(nq, nk);
  std::vector<double> scores(nk);
  for (std::size_t h = 0; h < w.heads; ++h) {
    for (std::size_t i = 0; i < nq; ++i) {
      const auto qi = proj.q[h].row(i);
      for (std::size_t j = 0; j < nk; ++j) scores[j] = scaled_dot(qi, proj.k[h].row(j), inv_sqrt_dk);
      softmax_inplace(scores, mask != nullptr ? mask->row(i) : std::span<const std::uint8_t>{});
      auto out = concat.row(i).subspan(h * dk, dk);
      for (std::size_t j = 0; j < nk; ++j) {
        const auto vj = proj.v[h].row(j);
        for (std::size_t c = 0; c < dk; ++c) out[c] += scores[j] * vj[c];
        map(i, j) += scores[j];
      }
    }
  }
  const double inv_heads = 1.0 / static_cast<double>(w.heads);
  for (double& v : map.values()) v *= inv_heads;

  if (counter != nullptr) {
    std::uint64_t entries = 0;
    if (mask == nullptr) {
      entries = static_cast<std::uint64_t>(nq) * nk;
    } else {
      for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nk; ++j) entries += (*mask)(i, j) ? 1 : 0;
    }
    counter->record(entries, attention_buffer_bytes(entries, w.heads));
  }
  return {matmul(concat, w.wo), std::move(map)};
}

}  // namespace

void MhaWeights::validate() const {
  require(heads >= 1 && model_dim >= 1, "MhaWeights: heads and model_dim must be >= 1");
  require(model_dim % heads == 0, "MhaWeights: model_dim must be divisible by heads");
  require(wq.size() == heads && wk.size() == heads && wv.size() == heads,
          "MhaWeights: one projection per head required");
  const std::size_t dk = head_dim();
  for (std::size_t h = 0; h < heads; ++h) {
    for (const Matrix* m : {&wq[h], &wk[h], &wv[h]})
      require(m->rows() == model_dim && m->cols() == dk, "MhaWeights: head projection shape");
  }
  require(wo.rows() == heads * dk && wo.cols() == model_dim, "MhaWeights: output projection shape");
}

MhaWeights MhaWeights::random(std::size_t model_dim, std::size_t heads, SplitMix64& rng) {
  require(heads >= 1 && model_dim % heads == 0, "MhaWeights::random: model_dim must be divisible by heads");
  MhaWeights w;
  w.model_dim = model_dim;
  w.heads = heads;
  const std::size_t dk = model_dim / heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(model_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    w.wq.push_back(random_matrix(model_dim, dk, bound, rng));
    w.wk.push_back(random_matrix(model_dim, dk, bound, rng));
    w.wv.push_back(random_matrix(model_dim, dk, bound, rng));
  }
  w.wo = random_matrix(heads * dk, model_dim, bound, rng);
  return w;
}

HeadProjections project_heads(const Matrix& fq, const Matrix& fk, const MhaWeights& w) {
  HeadProjections p;
  for (std::size_t h = 0; h < w.heads; ++h) {
    p.q.push_back(matmul(fq, w.wq[h]));
    p.k.push_back(matmul(fk, w.wk[h]));
    p.v.push_back(matmul(fk, w.wv[h]));
  }
  return p;
}

AttentionOutput multihead_attention(const Matrix& fq, const Matrix& fk, const MhaWeights& w,
                                    WorkCounter* counter) {
  return attend(fq, fk, w, nullptr, counter);
}

AttentionOutput multihead_attention(const Matrix& fq, const Matrix& fk, const MhaWeights& w,
                                    const Mask& mask, WorkCounter* counter) {
  return attend(fq, fk, w, &mask, counter);
}

Matrix sinusoidal_pe(std::span<const Vec3> coords, std::size_t model_dim, double base_freq) {
  if (model_dim == 0 || model_dim % 6 != 0)
    fail(ErrorKind::Config, "sinusoidal_pe: model dim " + std::to_string(model_dim) +
                                " is not a positive multiple of 6");
  const std::size_t pairs = model_dim / 6;
  const std::size_t per_axis = model_dim / 3;
  std::vector<double> inv_freq(pairs);
  for (std::size_t k = 0; k < pairs; ++k)
    inv_freq[k] = 1.0 / std::pow(base_freq, static_cast<double>(6 * k) / static_cast<double>(model_dim));
  Matrix pe(coords.size(), model_dim);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double c = coords[i][a];
      for (std::size_t k = 0; k < pairs; ++k) {
        pe(i, a * per_axis + 2 * k) = std::sin(c * inv_freq[k]);
        pe(i, a * per_axis + 2 * k + 1) = std::cos(c * inv_freq[k]);
      }
    }
  }
  return pe;
}

}  // namespace ptt
