#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "elyte/rng.hpp"
#include "elyte/tokenizer.hpp"

namespace elyte {

// Row-major storage so the byte order of a serialized tensor equals plain
// (row, col) iteration; weights.bin is the concatenation of the manifest
// tensors in exactly that order.
template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int d_ff = 128;
  int max_len = 128;
  int vocab_size = 0;
  double dropout_rate = 0.0;
  std::string pooling = "mean";  // "mean" over content positions, or "bos"

  // Throws ConfigError: every dimension >= 1, d_model divisible by n_heads,
  // dropout_rate in [0,1), pooling one of the two names above.
  void validate() const;
};

// Weights are laid out for right multiplication (y = x*W + b), so fan-in is
// the row count. Biases, layer-norm scales and offsets are 1 x n rows.
template <typename Real>
struct AttentionParams {
  Matrix<Real> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename Real>
struct LayerNormParams {
  Matrix<Real> scale, offset;
};

template <typename Real>
struct FeedForwardParams {
  Matrix<Real> w1, b1, w2, b2;
};

template <typename Real>
struct EncoderLayerParams {
  AttentionParams<Real> self_attn;
  LayerNormParams<Real> ln_attn;
  FeedForwardParams<Real> ff;
  LayerNormParams<Real> ln_ff;
};

template <typename Real>
struct DecoderLayerParams {
  AttentionParams<Real> self_attn;
  LayerNormParams<Real> ln_self;
  AttentionParams<Real> cross_attn;
  LayerNormParams<Real> ln_cross;
  FeedForwardParams<Real> ff;
  LayerNormParams<Real> ln_ff;
};

template <typename Real>
struct ModelParams {
  ModelConfig config;
  // Shared by encoder input, decoder input and (transposed) the output
  // projection; the single tensor receives all three gradient contributions.
  Matrix<Real> token_embedding;  // vocab_size x d_model
  std::vector<EncoderLayerParams<Real>> encoder;
  std::vector<DecoderLayerParams<Real>> decoder;
  // Fixed sinusoidal table, max_len x d_model. Not learned, not serialized;
  // rebuilt from the config on load.
  Matrix<Real> positional;
};

namespace detail {

template <typename A, typename Fn>
void visit_attention(const std::string& prefix, A& a, Fn&& fn) {
  fn(prefix + "wq", a.wq);
  fn(prefix + "bq", a.bq);
  fn(prefix + "wk", a.wk);
  fn(prefix + "bk", a.bk);
  fn(prefix + "wv", a.wv);
  fn(prefix + "bv", a.bv);
  fn(prefix + "wo", a.wo);
  fn(prefix + "bo", a.bo);
}

template <typename L, typename Fn>
void visit_layer_norm(const std::string& prefix, L& l, Fn&& fn) {
  fn(prefix + "scale", l.scale);
  fn(prefix + "offset", l.offset);
}

template <typename F, typename Fn>
void visit_feed_forward(const std::string& prefix, F& f, Fn&& fn) {
  fn(prefix + "w1", f.w1);
  fn(prefix + "b1", f.b1);
  fn(prefix + "w2", f.w2);
  fn(prefix + "b2", f.b2);
}

}  // namespace detail

// Visits every learned tensor in manifest order: the embedding, then each
// encoder layer (self_attn, ln_attn, ff, ln_ff), then each decoder layer
// (self_attn, ln_self, cross_attn, ln_cross, ff, ln_ff). The positional
// table is deliberately absent. P is ModelParams<Real> or const-qualified.
template <typename P, typename Fn>
void for_each_tensor(P& params, Fn&& fn) {
  fn(std::string("token_embedding"), params.token_embedding);
  for (std::size_t i = 0; i < params.encoder.size(); ++i) {
    const std::string pre = "encoder." + std::to_string(i) + ".";
    auto& l = params.encoder[i];
    detail::visit_attention(pre + "self_attn.", l.self_attn, fn);
    detail::visit_layer_norm(pre + "ln_attn.", l.ln_attn, fn);
    detail::visit_feed_forward(pre + "ff.", l.ff, fn);
    detail::visit_layer_norm(pre + "ln_ff.", l.ln_ff, fn);
  }
  for (std::size_t i = 0; i < params.decoder.size(); ++i) {
    const std::string pre = "decoder." + std::to_string(i) + ".";
    auto& l = params.decoder[i];
    detail::visit_attention(pre + "self_attn.", l.self_attn, fn);
    detail::visit_layer_norm(pre + "ln_self.", l.ln_self, fn);
    detail::visit_attention(pre + "cross_attn.", l.cross_attn, fn);
    detail::visit_layer_norm(pre + "ln_cross.", l.ln_cross, fn);
    detail::visit_feed_forward(pre + "ff.", l.ff, fn);
    detail::visit_layer_norm(pre + "ln_ff.", l.ln_ff, fn);
  }
}

// Scaled-uniform init: weight entries uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// drawn in manifest order, biases and offsets 0, layer-norm scales 1, so the
// initial output distribution is near-uniform over the vocabulary.
template <typename Real>
ModelParams<Real> init_model(const ModelConfig& cfg, std::uint64_t seed);

// Same shapes as `like`, every learned tensor zero (gradient accumulator).
template <typename Real>
ModelParams<Real> zeros_like(const ModelParams<Real>& like);

// Per-head attention rows recorded during a forward pass; each matrix is
// queries x keys and every row sums to 1.
template <typename Real>
struct AttentionTrace {
  std::vector<std::vector<Matrix<Real>>> encoder_self;
  std::vector<std::vector<Matrix<Real>>> decoder_self;
  std::vector<std::vector<Matrix<Real>>> decoder_cross;
};

// Encoder states, one d_model row per source position. Throws
// SequenceTooLongError past max_len, IdOutOfRangeError for ids outside the
// vocabulary. Read-only on the model; dropout is never applied here.
template <typename Real>
Matrix<Real> encode(const ModelParams<Real>& params, const std::vector<int>& src,
                    AttentionTrace<Real>* trace = nullptr);

// Positions of ids that are neither PAD, BOS nor EOS.
std::vector<bool> content_positions(const std::vector<int>& ids);

// Arithmetic mean of the included rows (1 x d). Throws EmptySequenceError if
// nothing is included, DimensionMismatchError if the mask length is wrong.
template <typename Real>
Matrix<Real> pool_mean(const Matrix<Real>& states, const std::vector<bool>& include);

template <typename Real>
struct DenoiseResult {
  Matrix<Real> logits;  // target length x vocab_size
  Real loss = Real(0);  // mean cross-entropy over all target positions
};

// Teacher-forced reconstruction: the decoder reads BOS + target[:-1], cross-
// attends to the encoded masked source, and is scored against the full
// target. Throws SequenceTooLongError / IdOutOfRangeError as encode does.
template <typename Real>
DenoiseResult<Real> forward_denoise(const ModelParams<Real>& params,
                                    const std::vector<int>& masked_src,
                                    const std::vector<int>& target,
                                    AttentionTrace<Real>* trace = nullptr);

// Forward plus analytic gradients of the loss, accumulated (+=) into grads,
// which must have the shapes of params. The positional table gets none.
template <typename Real>
DenoiseResult<Real> backward_denoise(const ModelParams<Real>& params,
                                     const std::vector<int>& masked_src,
                                     const std::vector<int>& target,
                                     ModelParams<Real>& grads);

// Adam with beta1=0.9, beta2=0.999, eps=1e-8 and a fixed learning rate.
template <typename Real>
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams<Real>& shapes, double learning_rate);
  void step(ModelParams<Real>& params, const ModelParams<Real>& grads);

 private:
  double lr_;
  long t_ = 0;
  ModelParams<Real> m_;
  ModelParams<Real> v_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double mask_ratio = 0.15;
  std::uint64_t seed = 0;

  // Throws ConfigError: epochs >= 0, batch_size >= 1, learning_rate > 0 and
  // finite, mask_ratio in (0,1).
  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;           // mean denoising loss
  std::vector<double> epoch_mask_accuracy;  // argmax == target at masked positions
};

template <typename Real>
struct PretrainResult {
  ModelParams<Real> params;
  TrainReport report;
};

// Denoising pretraining: each epoch shuffles the corpus, masks each sequence
// with apply_masking, accumulates gradients over fixed-order batches
// (averaged by the batch's sequence count) and takes one Adam step per
// batch. Initial weights come from init_model(cfg, tc.seed); masking and
// shuffling use independent streams forked from the same seed, so the whole
// run is bit-reproducible. epochs=0 returns the init unchanged. Throws
// EmptyCorpusError for an empty corpus plus anything the components throw.
template <typename Real>
PretrainResult<Real> pretrain(const std::vector<std::string>& corpus_selfies,
                              const Vocabulary& vocab, const ModelConfig& cfg,
                              const TrainConfig& tc);

// parse -> canonical SELFIES -> tokenize -> encode -> pool, per the config's
// pooling mode. The result is the molecule's d_model-long representation.
template <typename Real>
Eigen::VectorXd embed_molecule(const ModelParams<Real>& params, const Vocabulary& vocab,
                               const std::string& smiles);

// Model bundle directory:
//   config.json  - model config, tensor manifest, optional training metadata
//   vocab.txt    - tokenizer vocabulary, one token per line
//   weights.bin  - manifest tensors as little-endian float32, row-major
void save_bundle(const ModelParams<float>& params, const Vocabulary& vocab,
                 const std::filesystem::path& dir, const TrainConfig* train_cfg = nullptr,
                 const TrainReport* report = nullptr);

struct Bundle {
  ModelParams<float> params;
  Vocabulary vocab;
};

// Throws IoError on unreadable files or a weights.bin whose byte length does
// not equal the manifest total, SchemaError on malformed or inconsistent
// config.json, ConfigError on invalid stored dimensions.
Bundle load_bundle(const std::filesystem::path& dir);

extern template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
extern template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
extern template ModelParams<float> zeros_like<float>(const ModelParams<float>&);
extern template ModelParams<double> zeros_like<double>(const ModelParams<double>&);
extern template Matrix<float> encode<float>(const ModelParams<float>&, const std::vector<int>&,
                                            AttentionTrace<float>*);
extern template Matrix<double> encode<double>(const ModelParams<double>&, const std::vector<int>&,
                                              AttentionTrace<double>*);
extern template Matrix<float> pool_mean<float>(const Matrix<float>&, const std::vector<bool>&);
extern template Matrix<double> pool_mean<double>(const Matrix<double>&, const std::vector<bool>&);
extern template DenoiseResult<float> forward_denoise<float>(const ModelParams<float>&,
                                                            const std::vector<int>&,
                                                            const std::vector<int>&,
                                                            AttentionTrace<float>*);
extern template DenoiseResult<double> forward_denoise<double>(const ModelParams<double>&,
                                                              const std::vector<int>&,
                                                              const std::vector<int>&,
                                                              AttentionTrace<double>*);
extern template DenoiseResult<float> backward_denoise<float>(const ModelParams<float>&,
                                                             const std::vector<int>&,
                                                             const std::vector<int>&,
                                                             ModelParams<float>&);
extern template DenoiseResult<double> backward_denoise<double>(const ModelParams<double>&,
                                                               const std::vector<int>&,
                                                               const std::vector<int>&,
                                                               ModelParams<double>&);
extern template class AdamOptimizer<float>;
extern template class AdamOptimizer<double>;
extern template PretrainResult<float> pretrain<float>(const std::vector<std::string>&,
                                                      const Vocabulary&, const ModelConfig&,
                                                      const TrainConfig&);
extern template PretrainResult<double> pretrain<double>(const std::vector<std::string>&,
                                                        const Vocabulary&, const ModelConfig&,
                                                        const TrainConfig&);
extern template Eigen::VectorXd embed_molecule<float>(const ModelParams<float>&, const Vocabulary&,
                                                      const std::string&);
extern template Eigen::VectorXd embed_molecule<double>(const ModelParams<double>&,
                                                       const Vocabulary&, const std::string&);

}  // namespace elyte
