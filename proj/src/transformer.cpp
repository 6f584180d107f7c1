#include "elyte/transformer.hpp"

#include <cassert>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "elyte/errors.hpp"
#include "elyte/selfies.hpp"
#include "elyte/smiles.hpp"
#include "json.hpp"

namespace elyte {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename P>
auto collect_tensors(P& params) {
  std::vector<decltype(&params.token_embedding)> out;
  for_each_tensor(params, [&](const std::string&, auto& t) { out.push_back(&t); });
  return out;
}

template <typename Real>
Matrix<Real> sinusoidal_table(int max_len, int d_model) {
  Matrix<Real> table(max_len, d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / d_model);
      const double angle = pos * freq;
      table(pos, i) = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

// Shapes per the manifest, all learned tensors zero, positional table filled.
template <typename Real>
ModelParams<Real> allocate_params(const ModelConfig& cfg) {
  const int d = cfg.d_model;
  ModelParams<Real> p;
  p.config = cfg;
  p.token_embedding = Matrix<Real>::Zero(cfg.vocab_size, d);
  const auto zero_attn = [d] {
    AttentionParams<Real> a;
    a.wq = a.wk = a.wv = a.wo = Matrix<Real>::Zero(d, d);
    a.bq = a.bk = a.bv = a.bo = Matrix<Real>::Zero(1, d);
    return a;
  };
  const auto zero_ln = [d] {
    return LayerNormParams<Real>{Matrix<Real>::Zero(1, d), Matrix<Real>::Zero(1, d)};
  };
  const auto zero_ff = [d, &cfg] {
    FeedForwardParams<Real> f;
    f.w1 = Matrix<Real>::Zero(d, cfg.d_ff);
    f.b1 = Matrix<Real>::Zero(1, cfg.d_ff);
    f.w2 = Matrix<Real>::Zero(cfg.d_ff, d);
    f.b2 = Matrix<Real>::Zero(1, d);
    return f;
  };
  p.encoder.resize(static_cast<std::size_t>(cfg.n_layers_enc));
  for (auto& l : p.encoder) {
    l.self_attn = zero_attn();
    l.ln_attn = zero_ln();
    l.ff = zero_ff();
    l.ln_ff = zero_ln();
  }
  p.decoder.resize(static_cast<std::size_t>(cfg.n_layers_dec));
  for (auto& l : p.decoder) {
    l.self_attn = zero_attn();
    l.ln_self = zero_ln();
    l.cross_attn = zero_attn();
    l.ln_cross = zero_ln();
    l.ff = zero_ff();
    l.ln_ff = zero_ln();
  }
  p.positional = sinusoidal_table<Real>(cfg.max_len, d);
  return p;
}

void check_sequence(const ModelConfig& cfg, const std::vector<int>& ids) {
  if (static_cast<int>(ids.size()) > cfg.max_len)
    throw SequenceTooLongError("sequence of " + std::to_string(ids.size()) +
                               " tokens exceeds max_len " + std::to_string(cfg.max_len));
  for (const int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw IdOutOfRangeError("token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(cfg.vocab_size));
}

template <typename Real>
Matrix<Real> embed_sequence(const ModelParams<Real>& p, const std::vector<int>& ids) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix<Real> x(n, p.config.d_model);
  for (Eigen::Index i = 0; i < n; ++i)
    x.row(i) = p.token_embedding.row(ids[static_cast<std::size_t>(i)]) + p.positional.row(i);
  return x;
}

template <typename Real>
Real gelu_value(Real u) {
  return Real(0.5) * u * (Real(1) + static_cast<Real>(std::erf(u * Real(M_SQRT1_2))));
}

template <typename Real>
Real gelu_slope(Real u) {
  const Real density = static_cast<Real>(std::exp(Real(-0.5) * u * u) * 0.3989422804014327);
  return Real(0.5) * (Real(1) + static_cast<Real>(std::erf(u * Real(M_SQRT1_2)))) + u * density;
}

template <typename Real>
struct AttnCache {
  Matrix<Real> q, k, v;            // projections, length x d_model
  std::vector<Matrix<Real>> attn;  // per head, queries x keys
  Matrix<Real> ctx;                // concatenated head outputs
};

template <typename Real>
struct LnCache {
  Matrix<Real> xhat;
  std::vector<Real> inv_std;
};

template <typename Real>
struct FfCache {
  Matrix<Real> pre, act;
};

template <typename Real>
Matrix<Real> attention_forward(const AttentionParams<Real>& w, const Matrix<Real>& x_q,
                               const Matrix<Real>& x_kv, bool causal, int n_heads,
                               AttnCache<Real>& c, std::vector<Matrix<Real>>* trace) {
  const Eigen::Index d = w.wq.rows();
  const Eigen::Index dh = d / n_heads;
  const Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
  c.q = x_q * w.wq;
  c.q.rowwise() += w.bq.row(0);
  c.k = x_kv * w.wk;
  c.k.rowwise() += w.bk.row(0);
  c.v = x_kv * w.wv;
  c.v.rowwise() += w.bv.row(0);
  c.attn.clear();
  c.attn.reserve(static_cast<std::size_t>(n_heads));
  c.ctx.resize(x_q.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const Eigen::Index off = h * dh;
    Matrix<Real> scores = c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose();
    scores *= inv_sqrt_dh;
    if (causal)
      for (Eigen::Index i = 0; i < scores.rows(); ++i)
        for (Eigen::Index j = i + 1; j < scores.cols(); ++j)
          scores(i, j) = -std::numeric_limits<Real>::infinity();
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const Real row_max = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - row_max).exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    c.ctx.middleCols(off, dh) = scores * c.v.middleCols(off, dh);
    c.attn.push_back(std::move(scores));
  }
  if (trace) *trace = c.attn;
  Matrix<Real> out = c.ctx * w.wo;
  out.rowwise() += w.bo.row(0);
  return out;
}

template <typename Real>
void attention_backward(const AttentionParams<Real>& w, const Matrix<Real>& x_q,
                        const Matrix<Real>& x_kv, int n_heads, const AttnCache<Real>& c,
                        const Matrix<Real>& d_out, AttentionParams<Real>& g, Matrix<Real>& d_xq,
                        Matrix<Real>& d_xkv) {
  const Eigen::Index d = w.wq.rows();
  const Eigen::Index dh = d / n_heads;
  const Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
  g.wo += c.ctx.transpose() * d_out;
  g.bo.row(0) += d_out.colwise().sum();
  const Matrix<Real> d_ctx = d_out * w.wo.transpose();
  Matrix<Real> dq = Matrix<Real>::Zero(x_q.rows(), d);
  Matrix<Real> dk = Matrix<Real>::Zero(x_kv.rows(), d);
  Matrix<Real> dv = Matrix<Real>::Zero(x_kv.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const Eigen::Index off = h * dh;
    const Matrix<Real>& a = c.attn[static_cast<std::size_t>(h)];
    const Matrix<Real> d_ctx_h = d_ctx.middleCols(off, dh);
    const Matrix<Real> d_a = d_ctx_h * c.v.middleCols(off, dh).transpose();
    dv.middleCols(off, dh) = a.transpose() * d_ctx_h;
    Matrix<Real> d_scores(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const Real dot = (d_a.row(i).array() * a.row(i).array()).sum();
      d_scores.row(i) = (a.row(i).array() * (d_a.row(i).array() - dot)).matrix();
    }
    dq.middleCols(off, dh) = d_scores * c.k.middleCols(off, dh) * inv_sqrt_dh;
    dk.middleCols(off, dh) = d_scores.transpose() * c.q.middleCols(off, dh) * inv_sqrt_dh;
  }
  g.wq += x_q.transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  g.wk += x_kv.transpose() * dk;
  g.bk.row(0) += dk.colwise().sum();
  g.wv += x_kv.transpose() * dv;
  g.bv.row(0) += dv.colwise().sum();
  d_xq += dq * w.wq.transpose();
  d_xkv += dk * w.wk.transpose();
  d_xkv += dv * w.wv.transpose();
}

template <typename Real>
Matrix<Real> layer_norm_forward(const LayerNormParams<Real>& w, const Matrix<Real>& x,
                                LnCache<Real>& c) {
  c.xhat.resize(x.rows(), x.cols());
  c.inv_std.assign(static_cast<std::size_t>(x.rows()), Real(0));
  Matrix<Real> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Real mean = x.row(i).mean();
    const Real var = (x.row(i).array() - mean).square().mean();
    const Real inv = Real(1) / static_cast<Real>(std::sqrt(var + Real(kLnEps)));
    c.inv_std[static_cast<std::size_t>(i)] = inv;
    c.xhat.row(i) = ((x.row(i).array() - mean) * inv).matrix();
    y.row(i) =
        (c.xhat.row(i).array() * w.scale.row(0).array() + w.offset.row(0).array()).matrix();
  }
  return y;
}

template <typename Real>
Matrix<Real> layer_norm_backward(const LayerNormParams<Real>& w, const LnCache<Real>& c,
                                 const Matrix<Real>& d_y, LayerNormParams<Real>& g) {
  g.scale.row(0) += (d_y.array() * c.xhat.array()).colwise().sum().matrix();
  g.offset.row(0) += d_y.colwise().sum();
  Matrix<Real> d_x(d_y.rows(), d_y.cols());
  for (Eigen::Index i = 0; i < d_y.rows(); ++i) {
    const auto d_xhat = (d_y.row(i).array() * w.scale.row(0).array()).eval();
    const Real m1 = d_xhat.mean();
    const Real m2 = (d_xhat * c.xhat.row(i).array()).mean();
    d_x.row(i) =
        (c.inv_std[static_cast<std::size_t>(i)] * (d_xhat - m1 - c.xhat.row(i).array() * m2))
            .matrix();
  }
  return d_x;
}

template <typename Real>
Matrix<Real> feed_forward_forward(const FeedForwardParams<Real>& w, const Matrix<Real>& x,
                                  FfCache<Real>& c) {
  c.pre = x * w.w1;
  c.pre.rowwise() += w.b1.row(0);
  c.act = c.pre.unaryExpr([](Real u) { return gelu_value(u); });
  Matrix<Real> y = c.act * w.w2;
  y.rowwise() += w.b2.row(0);
  return y;
}

template <typename Real>
Matrix<Real> feed_forward_backward(const FeedForwardParams<Real>& w, const Matrix<Real>& x,
                                   const FfCache<Real>& c, const Matrix<Real>& d_y,
                                   FeedForwardParams<Real>& g) {
  g.w2 += c.act.transpose() * d_y;
  g.b2.row(0) += d_y.colwise().sum();
  const Matrix<Real> d_act = d_y * w.w2.transpose();
  const Matrix<Real> d_pre =
      d_act.cwiseProduct(c.pre.unaryExpr([](Real u) { return gelu_slope(u); }));
  g.w1 += x.transpose() * d_pre;
  g.b1.row(0) += d_pre.colwise().sum();
  return d_pre * w.w1.transpose();
}

// Inverted dropout on a sublayer output; mask stays empty when inactive so
// the backward pass can tell. Draws row-major for reproducibility.
template <typename Real>
void apply_dropout(Matrix<Real>& x, Matrix<Real>& mask, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return;
  const Real keep = static_cast<Real>(1.0 / (1.0 - rate));
  mask.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask(i, j) = rng->next_double() < rate ? Real(0) : keep;
  x = x.cwiseProduct(mask);
}

template <typename Real>
Matrix<Real> dropout_backward(const Matrix<Real>& mask, const Matrix<Real>& d) {
  return mask.size() == 0 ? d : d.cwiseProduct(mask).eval();
}

template <typename Real>
struct EncLayerCache {
  Matrix<Real> x_in;
  AttnCache<Real> attn;
  Matrix<Real> drop_attn;
  LnCache<Real> ln_attn;
  Matrix<Real> x_mid;
  FfCache<Real> ff;
  Matrix<Real> drop_ff;
  LnCache<Real> ln_ff;
};

template <typename Real>
struct DecLayerCache {
  Matrix<Real> x_in;
  AttnCache<Real> self_attn;
  Matrix<Real> drop_self;
  LnCache<Real> ln_self;
  Matrix<Real> x_self;
  AttnCache<Real> cross_attn;
  Matrix<Real> drop_cross;
  LnCache<Real> ln_cross;
  Matrix<Real> x_cross;
  FfCache<Real> ff;
  Matrix<Real> drop_ff;
  LnCache<Real> ln_ff;
};

template <typename Real>
Matrix<Real> encoder_layer_forward(const EncoderLayerParams<Real>& w, const ModelConfig& cfg,
                                   const Matrix<Real>& x, EncLayerCache<Real>& c, Rng* drop_rng,
                                   std::vector<Matrix<Real>>* trace) {
  c.x_in = x;
  Matrix<Real> a = attention_forward(w.self_attn, x, x, false, cfg.n_heads, c.attn, trace);
  apply_dropout(a, c.drop_attn, cfg.dropout_rate, drop_rng);
  c.x_mid = layer_norm_forward(w.ln_attn, Matrix<Real>(x + a), c.ln_attn);
  Matrix<Real> f = feed_forward_forward(w.ff, c.x_mid, c.ff);
  apply_dropout(f, c.drop_ff, cfg.dropout_rate, drop_rng);
  return layer_norm_forward(w.ln_ff, Matrix<Real>(c.x_mid + f), c.ln_ff);
}

template <typename Real>
Matrix<Real> encoder_layer_backward(const EncoderLayerParams<Real>& w, const ModelConfig& cfg,
                                    const EncLayerCache<Real>& c, const Matrix<Real>& d_out,
                                    EncoderLayerParams<Real>& g) {
  const Matrix<Real> d_res2 = layer_norm_backward(w.ln_ff, c.ln_ff, d_out, g.ln_ff);
  const Matrix<Real> d_f = dropout_backward(c.drop_ff, d_res2);
  const Matrix<Real> d_mid = d_res2 + feed_forward_backward(w.ff, c.x_mid, c.ff, d_f, g.ff);
  const Matrix<Real> d_res1 = layer_norm_backward(w.ln_attn, c.ln_attn, d_mid, g.ln_attn);
  const Matrix<Real> d_a = dropout_backward(c.drop_attn, d_res1);
  Matrix<Real> d_x = d_res1;
  attention_backward(w.self_attn, c.x_in, c.x_in, cfg.n_heads, c.attn, d_a, g.self_attn, d_x, d_x);
  return d_x;
}

template <typename Real>
Matrix<Real> decoder_layer_forward(const DecoderLayerParams<Real>& w, const ModelConfig& cfg,
                                   const Matrix<Real>& x, const Matrix<Real>& memory,
                                   DecLayerCache<Real>& c, Rng* drop_rng,
                                   std::vector<Matrix<Real>>* trace_self,
                                   std::vector<Matrix<Real>>* trace_cross) {
  c.x_in = x;
  Matrix<Real> a =
      attention_forward(w.self_attn, x, x, true, cfg.n_heads, c.self_attn, trace_self);
  apply_dropout(a, c.drop_self, cfg.dropout_rate, drop_rng);
  c.x_self = layer_norm_forward(w.ln_self, Matrix<Real>(x + a), c.ln_self);
  Matrix<Real> cr = attention_forward(w.cross_attn, c.x_self, memory, false, cfg.n_heads,
                                      c.cross_attn, trace_cross);
  apply_dropout(cr, c.drop_cross, cfg.dropout_rate, drop_rng);
  c.x_cross = layer_norm_forward(w.ln_cross, Matrix<Real>(c.x_self + cr), c.ln_cross);
  Matrix<Real> f = feed_forward_forward(w.ff, c.x_cross, c.ff);
  apply_dropout(f, c.drop_ff, cfg.dropout_rate, drop_rng);
  return layer_norm_forward(w.ln_ff, Matrix<Real>(c.x_cross + f), c.ln_ff);
}

template <typename Real>
Matrix<Real> decoder_layer_backward(const DecoderLayerParams<Real>& w, const ModelConfig& cfg,
                                    const Matrix<Real>& memory, const DecLayerCache<Real>& c,
                                    const Matrix<Real>& d_out, DecoderLayerParams<Real>& g,
                                    Matrix<Real>& d_memory) {
  const Matrix<Real> d_res3 = layer_norm_backward(w.ln_ff, c.ln_ff, d_out, g.ln_ff);
  const Matrix<Real> d_f = dropout_backward(c.drop_ff, d_res3);
  const Matrix<Real> d_cross = d_res3 + feed_forward_backward(w.ff, c.x_cross, c.ff, d_f, g.ff);
  const Matrix<Real> d_res2 = layer_norm_backward(w.ln_cross, c.ln_cross, d_cross, g.ln_cross);
  const Matrix<Real> d_cr = dropout_backward(c.drop_cross, d_res2);
  Matrix<Real> d_self = d_res2;
  attention_backward(w.cross_attn, c.x_self, memory, cfg.n_heads, c.cross_attn, d_cr,
                     g.cross_attn, d_self, d_memory);
  const Matrix<Real> d_res1 = layer_norm_backward(w.ln_self, c.ln_self, d_self, g.ln_self);
  const Matrix<Real> d_a = dropout_backward(c.drop_self, d_res1);
  Matrix<Real> d_x = d_res1;
  attention_backward(w.self_attn, c.x_in, c.x_in, cfg.n_heads, c.self_attn, d_a, g.self_attn,
                     d_x, d_x);
  return d_x;
}

template <typename Real>
Matrix<Real> run_encoder(const ModelParams<Real>& p, const std::vector<int>& src,
                         std::vector<EncLayerCache<Real>>& caches, Rng* drop_rng,
                         AttentionTrace<Real>* trace, Matrix<Real>* x0_out) {
  check_sequence(p.config, src);
  Matrix<Real> x = embed_sequence(p, src);
  if (x0_out) *x0_out = x;
  caches.clear();
  caches.resize(p.encoder.size());
  if (trace) trace->encoder_self.resize(p.encoder.size());
  for (std::size_t i = 0; i < p.encoder.size(); ++i)
    x = encoder_layer_forward(p.encoder[i], p.config, x, caches[i], drop_rng,
                              trace ? &trace->encoder_self[i] : nullptr);
  return x;
}

template <typename Real>
struct DenoiseCache {
  Matrix<Real> enc_x0;
  std::vector<EncLayerCache<Real>> enc_layers;
  Matrix<Real> memory;
  std::vector<int> dec_input;
  Matrix<Real> dec_x0;
  std::vector<DecLayerCache<Real>> dec_layers;
  Matrix<Real> dec_out;
  Matrix<Real> probs;
};

template <typename Real>
DenoiseResult<Real> forward_denoise_impl(const ModelParams<Real>& p,
                                         const std::vector<int>& masked_src,
                                         const std::vector<int>& target, DenoiseCache<Real>& c,
                                         AttentionTrace<Real>* trace, Rng* drop_rng) {
  if (masked_src.empty() || target.empty())
    throw EmptySequenceError("denoising requires a non-empty source and target");
  check_sequence(p.config, target);
  c.memory = run_encoder(p, masked_src, c.enc_layers, drop_rng, trace, &c.enc_x0);
  c.dec_input.assign(1, kBosId);
  c.dec_input.insert(c.dec_input.end(), target.begin(), target.end() - 1);
  c.dec_x0 = embed_sequence(p, c.dec_input);
  c.dec_layers.clear();
  c.dec_layers.resize(p.decoder.size());
  if (trace) {
    trace->decoder_self.resize(p.decoder.size());
    trace->decoder_cross.resize(p.decoder.size());
  }
  Matrix<Real> x = c.dec_x0;
  for (std::size_t i = 0; i < p.decoder.size(); ++i)
    x = decoder_layer_forward(p.decoder[i], p.config, x, c.memory, c.dec_layers[i], drop_rng,
                              trace ? &trace->decoder_self[i] : nullptr,
                              trace ? &trace->decoder_cross[i] : nullptr);
  c.dec_out = x;
  DenoiseResult<Real> res;
  res.logits = x * p.token_embedding.transpose();
  const auto n = res.logits.rows();
  c.probs.resize(n, res.logits.cols());
  Real total = Real(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real row_max = res.logits.row(i).maxCoeff();
    const auto shifted = (res.logits.row(i).array() - row_max).exp().eval();
    const Real z = shifted.sum();
    c.probs.row(i) = (shifted / z).matrix();
    total += row_max + static_cast<Real>(std::log(z)) -
             res.logits(i, target[static_cast<std::size_t>(i)]);
  }
  res.loss = total / static_cast<Real>(n);
  assert(res.logits.allFinite());
  return res;
}

template <typename Real>
DenoiseResult<Real> backward_denoise_impl(const ModelParams<Real>& p,
                                          const std::vector<int>& masked_src,
                                          const std::vector<int>& target, ModelParams<Real>& g,
                                          Rng* drop_rng) {
  DenoiseCache<Real> c;
  DenoiseResult<Real> res = forward_denoise_impl(
      p, masked_src, target, c, static_cast<AttentionTrace<Real>*>(nullptr), drop_rng);
  const auto n = res.logits.rows();
  Matrix<Real> d_logits = c.probs;
  for (Eigen::Index i = 0; i < n; ++i) d_logits(i, target[static_cast<std::size_t>(i)]) -= Real(1);
  d_logits *= Real(1) / static_cast<Real>(n);
  g.token_embedding += d_logits.transpose() * c.dec_out;
  Matrix<Real> d_x = d_logits * p.token_embedding;
  Matrix<Real> d_memory = Matrix<Real>::Zero(c.memory.rows(), c.memory.cols());
  for (std::size_t i = p.decoder.size(); i-- > 0;)
    d_x = decoder_layer_backward(p.decoder[i], p.config, c.memory, c.dec_layers[i], d_x,
                                 g.decoder[i], d_memory);
  for (Eigen::Index i = 0; i < d_x.rows(); ++i)
    g.token_embedding.row(c.dec_input[static_cast<std::size_t>(i)]) += d_x.row(i);
  Matrix<Real> d_e = d_memory;
  for (std::size_t i = p.encoder.size(); i-- > 0;)
    d_e = encoder_layer_backward(p.encoder[i], p.config, c.enc_layers[i], d_e, g.encoder[i]);
  for (Eigen::Index i = 0; i < d_e.rows(); ++i)
    g.token_embedding.row(masked_src[static_cast<std::size_t>(i)]) += d_e.row(i);
  return res;
}

}  // namespace

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers_enc, "n_layers_enc");
  positive(n_layers_dec, "n_layers_dec");
  positive(d_ff, "d_ff");
  positive(max_len, "max_len");
  positive(vocab_size, "vocab_size");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must be in [0,1)");
  if (pooling != "mean" && pooling != "bos")
    throw ConfigError("pooling must be \"mean\" or \"bos\", got \"" + pooling + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive and finite");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must be in (0,1)");
}

template <typename Real>
ModelParams<Real> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<Real> p = allocate_params<Real>(cfg);
  Rng rng(seed);
  const auto fill = [&rng](Matrix<Real>& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<Real>(rng.uniform(-bound, bound));
  };
  const int d = cfg.d_model;
  fill(p.token_embedding, d);
  const auto fill_attn = [&](AttentionParams<Real>& a) {
    fill(a.wq, d);
    fill(a.wk, d);
    fill(a.wv, d);
    fill(a.wo, d);
  };
  const auto fill_ff = [&](FeedForwardParams<Real>& f) {
    fill(f.w1, d);
    fill(f.w2, cfg.d_ff);
  };
  for (auto& l : p.encoder) {
    fill_attn(l.self_attn);
    l.ln_attn.scale.setOnes();
    fill_ff(l.ff);
    l.ln_ff.scale.setOnes();
  }
  for (auto& l : p.decoder) {
    fill_attn(l.self_attn);
    l.ln_self.scale.setOnes();
    fill_attn(l.cross_attn);
    l.ln_cross.scale.setOnes();
    fill_ff(l.ff);
    l.ln_ff.scale.setOnes();
  }
  return p;
}

template <typename Real>
ModelParams<Real> zeros_like(const ModelParams<Real>& like) {
  return allocate_params<Real>(like.config);
}

std::vector<bool> content_positions(const std::vector<int>& ids) {
  std::vector<bool> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[i] = ids[i] != kPadId && ids[i] != kBosId && ids[i] != kEosId;
  return out;
}

template <typename Real>
Matrix<Real> encode(const ModelParams<Real>& params, const std::vector<int>& src,
                    AttentionTrace<Real>* trace) {
  std::vector<EncLayerCache<Real>> caches;
  return run_encoder(params, src, caches, nullptr, trace, static_cast<Matrix<Real>*>(nullptr));
}

template <typename Real>
Matrix<Real> pool_mean(const Matrix<Real>& states, const std::vector<bool>& include) {
  if (static_cast<Eigen::Index>(include.size()) != states.rows())
    throw DimensionMismatchError("pooling mask has " + std::to_string(include.size()) +
                                 " entries for " + std::to_string(states.rows()) + " states");
  Matrix<Real> sum = Matrix<Real>::Zero(1, states.cols());
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    if (!include[static_cast<std::size_t>(i)]) continue;
    sum.row(0) += states.row(i);
    ++n;
  }
  if (n == 0) throw EmptySequenceError("no content positions to pool");
  return sum / static_cast<Real>(n);
}

template <typename Real>
DenoiseResult<Real> forward_denoise(const ModelParams<Real>& params,
                                    const std::vector<int>& masked_src,
                                    const std::vector<int>& target, AttentionTrace<Real>* trace) {
  DenoiseCache<Real> cache;
  return forward_denoise_impl(params, masked_src, target, cache, trace, nullptr);
}

template <typename Real>
DenoiseResult<Real> backward_denoise(const ModelParams<Real>& params,
                                     const std::vector<int>& masked_src,
                                     const std::vector<int>& target, ModelParams<Real>& grads) {
  return backward_denoise_impl(params, masked_src, target, grads, nullptr);
}

template <typename Real>
AdamOptimizer<Real>::AdamOptimizer(const ModelParams<Real>& shapes, double learning_rate)
    : lr_(learning_rate), m_(zeros_like(shapes)), v_(zeros_like(shapes)) {}

template <typename Real>
void AdamOptimizer<Real>::step(ModelParams<Real>& params, const ModelParams<Real>& grads) {
  ++t_;
  const Real inv_bc1 = static_cast<Real>(1.0 / (1.0 - std::pow(kBeta1, t_)));
  const Real inv_bc2 = static_cast<Real>(1.0 / (1.0 - std::pow(kBeta2, t_)));
  const auto ps = collect_tensors(params);
  const auto gs = collect_tensors(grads);
  const auto ms = collect_tensors(m_);
  const auto vs = collect_tensors(v_);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& theta = *ps[k];
    const auto& g = *gs[k];
    auto& m = *ms[k];
    auto& v = *vs[k];
    m.array() = Real(kBeta1) * m.array() + Real(1.0 - kBeta1) * g.array();
    v.array() = Real(kBeta2) * v.array() + Real(1.0 - kBeta2) * g.array().square();
    theta.array() -= static_cast<Real>(lr_) * (m.array() * inv_bc1) /
                     ((v.array() * inv_bc2).sqrt() + Real(kAdamEps));
    assert(theta.allFinite());
  }
}

template <typename Real>
PretrainResult<Real> pretrain(const std::vector<std::string>& corpus_selfies,
                              const Vocabulary& vocab, const ModelConfig& cfg,
                              const TrainConfig& tc) {
  tc.validate();
  ModelConfig full = cfg;
  if (full.vocab_size == 0) full.vocab_size = vocab.size();
  if (full.vocab_size != vocab.size())
    throw ConfigError("config vocab_size " + std::to_string(full.vocab_size) +
                      " does not match vocabulary of " + std::to_string(vocab.size()));
  full.validate();
  if (corpus_selfies.empty()) throw EmptyCorpusError("pretraining corpus is empty");
  std::vector<std::vector<int>> sequences;
  sequences.reserve(corpus_selfies.size());
  for (const std::string& s : corpus_selfies) {
    sequences.push_back(tokenize(split_selfies(s), vocab));
    check_sequence(full, sequences.back());
  }
  PretrainResult<Real> out{init_model<Real>(full, tc.seed), {}};
  Rng root(tc.seed);
  Rng shuffle_rng = root.fork(1);
  Rng mask_rng = root.fork(2);
  Rng drop_rng = root.fork(3);
  Rng* drop = full.dropout_rate > 0.0 ? &drop_rng : nullptr;
  AdamOptimizer<Real> opt(out.params, tc.learning_rate);
  ModelParams<Real> grads = zeros_like(out.params);
  const int n = static_cast<int>(sequences.size());
  std::vector<int> order(sequences.size());
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    long correct = 0;
    long masked = 0;
    for (int start = 0; start < n; start += tc.batch_size) {
      const int count = std::min(tc.batch_size, n - start);
      for_each_tensor(grads, [](const std::string&, auto& t) { t.setZero(); });
      for (int j = start; j < start + count; ++j) {
        const std::vector<int>& seq = sequences[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
        const MaskedBatch mb = apply_masking(seq, tc.mask_ratio, mask_rng);
        const DenoiseResult<Real> res =
            backward_denoise_impl(out.params, mb.source, mb.target, grads, drop);
        loss_sum += static_cast<double>(res.loss);
        for (const int pos : mb.mask_positions) {
          Eigen::Index argmax = 0;
          res.logits.row(pos).maxCoeff(&argmax);
          if (argmax == seq[static_cast<std::size_t>(pos)]) ++correct;
          ++masked;
        }
      }
      const Real inv = Real(1) / static_cast<Real>(count);
      for_each_tensor(grads, [inv](const std::string&, auto& t) { t *= inv; });
      opt.step(out.params, grads);
    }
    out.report.epoch_loss.push_back(loss_sum / n);
    out.report.epoch_mask_accuracy.push_back(
        masked > 0 ? static_cast<double>(correct) / static_cast<double>(masked) : 0.0);
  }
  return out;
}

template <typename Real>
Eigen::VectorXd embed_molecule(const ModelParams<Real>& params, const Vocabulary& vocab,
                               const std::string& smiles) {
  const MolGraph mol = parse_smiles(smiles);
  const std::string selfies = encode_selfies(mol);
  const std::vector<int> ids = tokenize(split_selfies(selfies), vocab);
  const Matrix<Real> states = encode(params, ids);
  Matrix<Real> rep;
  if (params.config.pooling == "bos")
    rep = states.row(0);
  else
    rep = pool_mean(states, content_positions(ids));
  Eigen::VectorXd out(rep.cols());
  for (Eigen::Index j = 0; j < rep.cols(); ++j) out(j) = static_cast<double>(rep(0, j));
  return out;
}

void save_bundle(const ModelParams<float>& params, const Vocabulary& vocab,
                 const std::filesystem::path& dir, const TrainConfig* train_cfg,
                 const TrainReport* report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create bundle directory " + dir.string());
  vocab.save(dir / "vocab.txt");
  nlohmann::json j;
  j["model"] = {{"d_model", params.config.d_model},
                {"n_heads", params.config.n_heads},
                {"n_layers_enc", params.config.n_layers_enc},
                {"n_layers_dec", params.config.n_layers_dec},
                {"d_ff", params.config.d_ff},
                {"max_len", params.config.max_len},
                {"vocab_size", params.config.vocab_size},
                {"dropout_rate", params.config.dropout_rate},
                {"pooling", params.config.pooling}};
  nlohmann::json manifest = nlohmann::json::array();
  for_each_tensor(params, [&](const std::string& name, const Matrix<float>& t) {
    manifest.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  });
  j["weights"] = {{"file", "weights.bin"},
                  {"dtype", "float32"},
                  {"byte_order", "little"},
                  {"layout", "row-major"},
                  {"manifest", manifest}};
  if (train_cfg)
    j["training"] = {{"epochs", train_cfg->epochs},
                     {"batch_size", train_cfg->batch_size},
                     {"learning_rate", train_cfg->learning_rate},
                     {"mask_ratio", train_cfg->mask_ratio},
                     {"seed", train_cfg->seed}};
  if (report) {
    j["training"]["epoch_loss"] = report->epoch_loss;
    j["training"]["epoch_mask_accuracy"] = report->epoch_mask_accuracy;
  }
  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + (dir / "config.json").string());
  }
  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "weights.bin").string());
  for_each_tensor(params, [&](const std::string&, const Matrix<float>& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
  });
  if (!out) throw IoError("failed writing " + (dir / "weights.bin").string());
}

Bundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream cf(dir / "config.json", std::ios::binary);
  if (!cf) throw IoError("cannot open " + (dir / "config.json").string());
  nlohmann::json j;
  ModelConfig cfg;
  try {
    cf >> j;
    const nlohmann::json& m = j.at("model");
    cfg.d_model = m.at("d_model").get<int>();
    cfg.n_heads = m.at("n_heads").get<int>();
    cfg.n_layers_enc = m.at("n_layers_enc").get<int>();
    cfg.n_layers_dec = m.at("n_layers_dec").get<int>();
    cfg.d_ff = m.at("d_ff").get<int>();
    cfg.max_len = m.at("max_len").get<int>();
    cfg.vocab_size = m.at("vocab_size").get<int>();
    cfg.dropout_rate = m.at("dropout_rate").get<double>();
    cfg.pooling = m.at("pooling").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config.json: " + std::string(e.what()));
  }
  cfg.validate();
  Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
  if (vocab.size() != cfg.vocab_size)
    throw SchemaError("vocab.txt has " + std::to_string(vocab.size()) +
                      " tokens but config.json says " + std::to_string(cfg.vocab_size));
  ModelParams<float> params = allocate_params<float>(cfg);
  nlohmann::json manifest;
  try {
    manifest = j.at("weights").at("manifest");
    if (!manifest.is_array()) throw SchemaError("weights.manifest is not an array");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config.json: " + std::string(e.what()));
  }
  std::size_t index = 0;
  std::size_t total_bytes = 0;
  try {
    for_each_tensor(params, [&](const std::string& name, const Matrix<float>& t) {
      if (index >= manifest.size()) throw SchemaError("manifest is missing tensor " + name);
      const nlohmann::json& entry = manifest[index++];
      if (entry.at("name").get<std::string>() != name ||
          entry.at("rows").get<Eigen::Index>() != t.rows() ||
          entry.at("cols").get<Eigen::Index>() != t.cols())
        throw SchemaError("manifest entry " + std::to_string(index - 1) +
                          " does not match expected tensor " + name);
      total_bytes += sizeof(float) * static_cast<std::size_t>(t.size());
    });
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config.json: " + std::string(e.what()));
  }
  if (index != manifest.size())
    throw SchemaError("manifest lists " + std::to_string(manifest.size()) + " tensors, expected " +
                      std::to_string(index));
  const std::filesystem::path wpath = dir / "weights.bin";
  std::error_code ec;
  const auto file_bytes = std::filesystem::file_size(wpath, ec);
  if (ec) throw IoError("cannot stat " + wpath.string());
  if (file_bytes != total_bytes)
    throw IoError("weights.bin is " + std::to_string(file_bytes) + " bytes, manifest requires " +
                  std::to_string(total_bytes));
  std::ifstream wf(wpath, std::ios::binary);
  if (!wf) throw IoError("cannot open " + wpath.string());
  for_each_tensor(params, [&](const std::string& name, Matrix<float>& t) {
    wf.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
    if (!wf) throw IoError("failed reading tensor " + name + " from " + wpath.string());
  });
  return Bundle{std::move(params), std::move(vocab)};
}

template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
template ModelParams<float> zeros_like<float>(const ModelParams<float>&);
template ModelParams<double> zeros_like<double>(const ModelParams<double>&);
template Matrix<float> encode<float>(const ModelParams<float>&, const std::vector<int>&,
                                     AttentionTrace<float>*);
template Matrix<double> encode<double>(const ModelParams<double>&, const std::vector<int>&,
                                       AttentionTrace<double>*);
template Matrix<float> pool_mean<float>(const Matrix<float>&, const std::vector<bool>&);
template Matrix<double> pool_mean<double>(const Matrix<double>&, const std::vector<bool>&);
template DenoiseResult<float> forward_denoise<float>(const ModelParams<float>&,
                                                     const std::vector<int>&,
                                                     const std::vector<int>&,
                                                     AttentionTrace<float>*);
template DenoiseResult<double> forward_denoise<double>(const ModelParams<double>&,
                                                       const std::vector<int>&,
                                                       const std::vector<int>&,
                                                       AttentionTrace<double>*);
template DenoiseResult<float> backward_denoise<float>(const ModelParams<float>&,
                                                      const std::vector<int>&,
                                                      const std::vector<int>&,
                                                      ModelParams<float>&);
template DenoiseResult<double> backward_denoise<double>(const ModelParams<double>&,
                                                        const std::vector<int>&,
                                                        const std::vector<int>&,
                                                        ModelParams<double>&);
template class AdamOptimizer<float>;
template class AdamOptimizer<double>;
template PretrainResult<float> pretrain<float>(const std::vector<std::string>&, const Vocabulary&,
                                               const ModelConfig&, const TrainConfig&);
template PretrainResult<double> pretrain<double>(const std::vector<std::string>&,
                                                 const Vocabulary&, const ModelConfig&,
                                                 const TrainConfig&);
template Eigen::VectorXd embed_molecule<float>(const ModelParams<float>&, const Vocabulary&,
                                               const std::string&);
template Eigen::VectorXd embed_molecule<double>(const ModelParams<double>&, const Vocabulary&,
                                                const std::string&);

}  // namespace elyte
