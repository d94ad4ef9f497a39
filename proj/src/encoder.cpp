#include "ptt/encoder.hpp"

#include <cmath>
#include <string>

#include "ptt/error.hpp"

namespace ptt {

namespace {

PtaSublayer random_sublayer(const EncoderConfig& cfg, SplitMix64& rng) {
  PtaSublayer s;
  s.norm = LayerNormParams::identity(cfg.model_dim);
  s.pool = PoolingMlp::random(cfg.model_dim, rng);
  const std::size_t copies = cfg.share_tree_params ? 1 : cfg.tree_layers;
  for (std::size_t i = 0; i < copies; ++i) s.attn.layers.push_back(MhaWeights::random(cfg.model_dim, cfg.heads, rng));
  return s;
}

void add_inplace(Matrix& x, const Matrix& delta) {
  require(x.rows() == delta.rows() && x.cols() == delta.cols(), "encoder: residual shape mismatch");
  auto dst = x.values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

TwoLayerMlp random_mlp(std::size_t in, std::size_t hidden, std::size_t out, SplitMix64& rng) {
  const auto fill = [&](Matrix& m, double bound) {
    for (double& v : m.values()) v = rng.uniform(-bound, bound);
  };
  const double b_in = 1.0 / std::sqrt(static_cast<double>(in));
  const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
  TwoLayerMlp mlp;
  mlp.w1 = Matrix(in, hidden);
  fill(mlp.w1, b_in);
  mlp.b1.resize(hidden);
  for (double& v : mlp.b1) v = rng.uniform(-b_in, b_in);
  mlp.w2 = Matrix(hidden, out);
  fill(mlp.w2, b_hid);
  mlp.b2.resize(out);
  for (double& v : mlp.b2) v = rng.uniform(-b_hid, b_hid);
  return mlp;
}

void EncoderConfig::validate() const {
  if (model_dim == 0 || heads == 0) fail(ErrorKind::Config, "encoder: model_dim and heads must be positive");
  if (model_dim % heads != 0)
    fail(ErrorKind::Config, "encoder: model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                                std::to_string(heads));
  if (model_dim % 6 != 0)
    fail(ErrorKind::Config, "encoder: model_dim " + std::to_string(model_dim) + " not divisible by 6");
  if (top_s == 0) fail(ErrorKind::Config, "encoder: top_s must be >= 1");
  if (tree_layers == 0) fail(ErrorKind::Config, "encoder: tree_layers must be >= 1");
  if (!(pe_base > 1.0)) fail(ErrorKind::Config, "encoder: pe_base must be > 1");
}

LayerNormParams LayerNormParams::identity(std::size_t dim) {
  return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
}

EncoderWeights EncoderWeights::random(const EncoderConfig& cfg, SplitMix64& rng) {
  cfg.validate();
  EncoderWeights w;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayerWeights layer;
    layer.self_attn = random_sublayer(cfg, rng);
    layer.cross_attn = random_sublayer(cfg, rng);
    layer.ffn.norm = LayerNormParams::identity(cfg.model_dim);
    layer.ffn.mlp = random_mlp(cfg.model_dim, 2 * cfg.model_dim, cfg.model_dim, rng);
    w.layers.push_back(std::move(layer));
  }
  return w;
}

EncoderOutput encode(const PointTree& tree_x, const PointTree& tree_y, const Matrix& init_x,
                     const Matrix& init_y, const EncoderConfig& cfg, const EncoderWeights& weights) {
  cfg.validate();
  require(weights.layers.size() == cfg.layers, "encode: weight stack depth does not match config");
  require(init_x.rows() == tree_x.layer_size(tree_x.densest_layer()) &&
              init_y.rows() == tree_y.layer_size(tree_y.densest_layer()),
          "encode: initial features do not match the densest tree layers");
  require(init_x.cols() == cfg.model_dim && init_y.cols() == cfg.model_dim,
          "encode: initial feature width does not match model_dim");

  EncoderOutput out;
  out.x = add(init_x, sinusoidal_pe(tree_x.coords(tree_x.densest_layer()), cfg.model_dim, cfg.pe_base));
  out.y = add(init_y, sinusoidal_pe(tree_y.coords(tree_y.densest_layer()), cfg.model_dim, cfg.pe_base));

  for (const EncoderLayerWeights& layer : weights.layers) {
    {
      const PtaSublayer& s = layer.self_attn;
      const FeatureTree fx = feature_pooling(tree_x, s.norm.apply(out.x), s.pool);
      const FeatureTree fy = feature_pooling(tree_y, s.norm.apply(out.y), s.pool);
      const PtaSide sx = pta_self(tree_x, fx, s.attn, cfg.top_s);
      const PtaSide sy = pta_self(tree_y, fy, s.attn, cfg.top_s);
      add_inplace(out.x, sx.features);
      add_inplace(out.y, sy.features);
    }
    {
      const PtaSublayer& s = layer.cross_attn;
      const FeatureTree fx = feature_pooling(tree_x, s.norm.apply(out.x), s.pool);
      const FeatureTree fy = feature_pooling(tree_y, s.norm.apply(out.y), s.pool);
      const PtaCrossResult r = pta_forward(tree_x, tree_y, fx, fy, s.attn, cfg.top_s);
      add_inplace(out.x, r.query.features);
      add_inplace(out.y, r.key.features);
    }
    add_inplace(out.x, layer.ffn.mlp.forward(layer.ffn.norm.apply(out.x)));
    add_inplace(out.y, layer.ffn.mlp.forward(layer.ffn.norm.apply(out.y)));
  }
  return out;
}

}  // namespace ptt
