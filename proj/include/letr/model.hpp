// Joint CTC-attention transformer with the optional N-best embedding (NE)
// side module.
//
// Parameter names are grouped by prefix so checkpoints can be loaded
// selectively: encoder.*, ctc_head.*, embed.*, decoder.*, ne.*.
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "letr/ctc.hpp"
#include "letr/data.hpp"
#include "letr/tensor.hpp"

namespace letr {

enum class Method { Baseline, EF, AEF, NE };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct ModelConfig {
  int input_dim = 16;
  int d_model = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ne_layers = 1;
  // Width of the N-best list fed to the NE module. 0 builds a model without
  // any NE parameters.
  int ne_nbest = 0;
  int ne_beam_width = 5;
  int vocab_size = 0;
  double dropout = 0.1;
  std::string positional_encoding = "sinusoidal";
  int subsample_factor = 4;
  int conv_channels = 32;

  static ModelConfig desk();
  /// 12 encoder / 6 decoder / 2 NE layers, d_model 256, ffn 1024, 4 heads, 80-dim input.
  static ModelConfig full_scale();

  bool has_ne() const { return ne_nbest > 0 && ne_layers > 0; }
  int head_dim() const { return d_model / num_heads; }
  void validate() const;
};

struct FusionConfig {
  Method method = Method::Baseline;
  double alpha = 0.5;
  int n = 3;
  int beam_width = 5;

  void validate() const;
};

/// Carries the dropout switch and a per-call seed stream so that a forward
/// pass is a pure function of (parameters, inputs, seed).
class ForwardContext {
 public:
  static ForwardContext inference() { return ForwardContext(false, 0); }
  static ForwardContext training(std::uint64_t seed) { return ForwardContext(true, seed); }

  bool is_training() const { return training_; }
  Tensor dropout(const Tensor& x, double rate);

 private:
  ForwardContext(bool training, std::uint64_t seed) : training_(training), seed_(seed) {}
  bool training_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct EncoderOutput {
  Tensor h;  // [frames x d_model], real frames only
  std::size_t frames = 0;
};

/// Output length of the convolutional front-end for `frames` input frames.
std::size_t subsampled_length(std::size_t frames, int factor);

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  bool has_ne() const { return config_.has_ne(); }

  const std::vector<NamedTensor>& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;
  bool has_parameter(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t num_parameters() const;
  void zero_grad();

  /// Encodes the first `valid_frames` rows of `features`; rows beyond are
  /// padding and never influence the result.
  EncoderOutput encode(const FeatureMatrix& features, std::size_t valid_frames, ForwardContext& ctx) const;
  EncoderOutput encode(const FeatureMatrix& features, ForwardContext& ctx) const {
    return encode(features, features.frames, ctx);
  }

  /// Per-frame log-probabilities over the full vocabulary (blank included).
  Tensor ctc_head(const EncoderOutput& enc) const;

  /// Shared word embedding scaled by sqrt(d_model) plus positional encoding.
  Tensor embed_tokens(std::span<const int> tokens) const;

  /// NE input: every hypothesis is padded with eos to `max_len` and embedded,
  /// the n embeddings are concatenated per position and projected back to
  /// d_model. Short lists repeat their last hypothesis up to n.
  Tensor ne_input(const NBestList& nbest, std::size_t max_len) const;
  Tensor ne_encode(const Tensor& x, ForwardContext& ctx) const;
  /// ne_encode(ne_input(nbest, longest hypothesis)).
  Tensor ne_memory(const NBestList& nbest, ForwardContext& ctx) const;

  /// Vocabulary logits [L x V]. `ne_memory` must be given exactly when the
  /// model has the NE module.
  Tensor decoder_forward(const Tensor& input_emb, const EncoderOutput& enc, const Tensor* ne_memory,
                         ForwardContext& ctx) const;

 private:
  struct Linear {
    Tensor w;
    Tensor b;
    Tensor operator()(const Tensor& x) const { return add_row(matmul(x, w), b); }
  };
  struct Norm {
    Tensor gamma;
    Tensor beta;
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct FeedForward {
    Linear fc1, fc2;
  };
  struct EncoderLayer {
    Norm norm1, norm2;
    Attention attn;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Norm norm1, norm2, norm3;
    Attention self_attn, src_attn;
    FeedForward ffn;
    bool has_ne = false;
    Attention ne_attn;
    Linear ne_proj;  // [2 d_model -> d_model]
  };

  Tensor add_param(const std::string& name, Shape shape, std::vector<Scalar> values);
  Tensor add_uniform(const std::string& name, Shape shape, Scalar bound, std::mt19937_64& rng);
  Linear make_linear(const std::string& name, int in, int out, std::mt19937_64& rng);
  Norm make_norm(const std::string& name, int dim);
  Attention make_attention(const std::string& name, std::mt19937_64& rng);
  FeedForward make_ffn(const std::string& name, std::mt19937_64& rng);
  EncoderLayer make_encoder_layer(const std::string& name, std::mt19937_64& rng);

  Tensor attend(const Attention& a, const Tensor& query, const Tensor& memory,
                const std::vector<std::uint8_t>* keep) const;
  Tensor feed_forward(const FeedForward& f, const Tensor& x) const;
  Tensor encoder_block(const EncoderLayer& layer, const Tensor& x, ForwardContext& ctx) const;
  Tensor positional(std::size_t length) const;

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;

  Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  Linear subsample_out_;
  std::vector<EncoderLayer> encoder_layers_;
  Norm encoder_norm_;
  Linear ctc_;
  Tensor embed_table_;
  std::vector<DecoderLayer> decoder_layers_;
  Norm decoder_norm_;
  Linear output_;
  Linear ne_input_proj_;
  std::vector<EncoderLayer> ne_layers_;
  Norm ne_norm_;
};

/// alpha * emb_w + (1 - alpha) * emb_y; both terms stay in the graph.
Tensor fuse_embeddings(const Tensor& emb_y, const Tensor& emb_w, double alpha);

/// Closed-form parameter count for a configuration.
std::size_t count_params(const ModelConfig& config);

/// Pads (by repeating the last hypothesis) or trims an N-best list to n.
NBestList fit_nbest(const NBestList& nbest, std::size_t n);

}  // namespace letr
