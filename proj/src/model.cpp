#include "letr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace letr {

const char* method_name(Method m) {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::EF: return "ef";
    case Method::AEF: return "aef";
    case Method::NE: return "ne";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "baseline" || lower == "transformer") return Method::Baseline;
  if (lower == "ef") return Method::EF;
  if (lower == "aef") return Method::AEF;
  if (lower == "ne") return Method::NE;
  throw std::invalid_argument("unknown method '" + name + "' (expected baseline, ef, aef or ne)");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.input_dim = 80;
  c.d_model = 256;
  c.num_heads = 4;
  c.ffn_dim = 1024;
  c.encoder_layers = 12;
  c.decoder_layers = 6;
  c.ne_layers = 2;
  c.conv_channels = 256;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  require(input_dim >= 1, "input_dim must be >= 1");
  require(d_model >= 1 && num_heads >= 1, "d_model and num_heads must be >= 1");
  require(d_model % num_heads == 0, "d_model must be divisible by num_heads");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(encoder_layers >= 1 && decoder_layers >= 1, "encoder/decoder layer counts must be >= 1");
  require(ne_layers >= 0 && ne_nbest >= 0, "NE sizes must be >= 0");
  require(ne_nbest == 0 || ne_beam_width >= ne_nbest, "ne_beam_width must be >= ne_nbest");
  require(vocab_size > Vocabulary::kNumSpecial, "vocab_size must exceed the special tokens");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(positional_encoding == "sinusoidal", "positional_encoding must be 'sinusoidal'");
  require(subsample_factor == 1 || subsample_factor == 2 || subsample_factor == 4,
          "subsample_factor must be 1, 2 or 4");
  require(conv_channels >= 1, "conv_channels must be >= 1");
}

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fusion: alpha must be in [0, 1]");
  if (method == Method::NE && (n < 1 || beam_width < n)) {
    throw std::invalid_argument("fusion: NE needs n >= 1 and beam_width >= n");
  }
}

Tensor ForwardContext::dropout(const Tensor& x, double rate) {
  if (!training_ || rate <= 0.0) return x;
  // splitmix64 finalizer decorrelates consecutive call seeds
  std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * (++counter_);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return letr::dropout(x, rate, z ^ (z >> 31));
}

std::size_t subsampled_length(std::size_t frames, int factor) {
  for (int f = factor; f > 1; f /= 2) frames = (frames + 1) / 2;
  return frames;
}

namespace {

std::size_t subsampled_dim(int input_dim, int factor) {
  return subsampled_length(static_cast<std::size_t>(input_dim), factor);
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> keep(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) keep[i * n + j] = 1;
  return keep;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction

Tensor Model::add_param(const std::string& name, Shape shape, std::vector<Scalar> values) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  Tensor t = Tensor::from(std::move(shape), std::move(values), true);
  index_[name] = params_.size();
  params_.push_back({name, t});
  return t;
}

Tensor Model::add_uniform(const std::string& name, Shape shape, Scalar bound, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  std::vector<Scalar> values(n);
  for (auto& v : values) v = dist(rng);
  return add_param(name, std::move(shape), std::move(values));
}

Model::Linear Model::make_linear(const std::string& name, int in, int out, std::mt19937_64& rng) {
  const auto i = static_cast<std::size_t>(in), o = static_cast<std::size_t>(out);
  Linear l;
  l.w = add_uniform(name + ".weight", {i, o}, std::sqrt(6.0 / (in + out)), rng);
  l.b = add_param(name + ".bias", {o}, std::vector<Scalar>(o, 0.0));
  return l;
}

Model::Norm Model::make_norm(const std::string& name, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  return {add_param(name + ".gamma", {d}, std::vector<Scalar>(d, 1.0)),
          add_param(name + ".beta", {d}, std::vector<Scalar>(d, 0.0))};
}

Model::Attention Model::make_attention(const std::string& name, std::mt19937_64& rng) {
  const int d = config_.d_model;
  return {make_linear(name + ".q", d, d, rng), make_linear(name + ".k", d, d, rng),
          make_linear(name + ".v", d, d, rng), make_linear(name + ".o", d, d, rng)};
}

Model::FeedForward Model::make_ffn(const std::string& name, std::mt19937_64& rng) {
  return {make_linear(name + ".fc1", config_.d_model, config_.ffn_dim, rng),
          make_linear(name + ".fc2", config_.ffn_dim, config_.d_model, rng)};
}

Model::EncoderLayer Model::make_encoder_layer(const std::string& name, std::mt19937_64& rng) {
  EncoderLayer l;
  l.norm1 = make_norm(name + ".norm1", config_.d_model);
  l.attn = make_attention(name + ".attn", rng);
  l.norm2 = make_norm(name + ".norm2", config_.d_model);
  l.ffn = make_ffn(name + ".ffn", rng);
  return l;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.d_model;
  const int channels = config_.conv_channels;
  const auto ch = static_cast<std::size_t>(channels);

  int front_dim = config_.input_dim;
  if (config_.subsample_factor >= 2) {
    const Scalar b1 = std::sqrt(6.0 / (9.0 * (1 + channels)));
    conv1_w_ = add_uniform("encoder.subsample.conv1.weight", {ch, 1, 3, 3}, b1, rng);
    conv1_b_ = add_param("encoder.subsample.conv1.bias", {ch}, std::vector<Scalar>(ch, 0.0));
    front_dim = channels * static_cast<int>(subsampled_dim(config_.input_dim, 2));
  }
  if (config_.subsample_factor == 4) {
    const Scalar b2 = std::sqrt(6.0 / (9.0 * (2 * channels)));
    conv2_w_ = add_uniform("encoder.subsample.conv2.weight", {ch, ch, 3, 3}, b2, rng);
    conv2_b_ = add_param("encoder.subsample.conv2.bias", {ch}, std::vector<Scalar>(ch, 0.0));
    front_dim = channels * static_cast<int>(subsampled_dim(config_.input_dim, 4));
  }
  subsample_out_ = make_linear("encoder.subsample.out", front_dim, d, rng);
  for (int i = 0; i < config_.encoder_layers; ++i) {
    encoder_layers_.push_back(make_encoder_layer("encoder.layers." + std::to_string(i), rng));
  }
  encoder_norm_ = make_norm("encoder.final_norm", d);
  ctc_ = make_linear("ctc_head", d, config_.vocab_size, rng);

  const auto v = static_cast<std::size_t>(config_.vocab_size);
  embed_table_ = add_uniform("embed.table", {v, static_cast<std::size_t>(d)}, std::sqrt(3.0 / d), rng);

  for (int i = 0; i < config_.decoder_layers; ++i) {
    const std::string name = "decoder.layers." + std::to_string(i);
    DecoderLayer l;
    l.norm1 = make_norm(name + ".norm1", d);
    l.self_attn = make_attention(name + ".self_attn", rng);
    l.norm2 = make_norm(name + ".norm2", d);
    l.src_attn = make_attention(name + ".src_attn", rng);
    l.norm3 = make_norm(name + ".norm3", d);
    l.ffn = make_ffn(name + ".ffn", rng);
    decoder_layers_.push_back(std::move(l));
  }
  decoder_norm_ = make_norm("decoder.final_norm", d);
  output_ = make_linear("decoder.out", d, config_.vocab_size, rng);

  if (config_.has_ne()) {
    ne_input_proj_ = make_linear("ne.input_proj", config_.ne_nbest * d, d, rng);
    for (int i = 0; i < config_.ne_layers; ++i) {
      ne_layers_.push_back(make_encoder_layer("ne.layers." + std::to_string(i), rng));
    }
    ne_norm_ = make_norm("ne.final_norm", d);
    for (int i = 0; i < config_.decoder_layers; ++i) {
      const std::string name = "ne.decoder." + std::to_string(i);
      auto& l = decoder_layers_[static_cast<std::size_t>(i)];
      l.has_ne = true;
      l.ne_attn = make_attention(name + ".attn", rng);
      l.ne_proj = make_linear(name + ".proj", 2 * d, d, rng);
    }
  }
}

Tensor& Model::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second].tensor;
}

const Tensor& Model::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second].tensor;
}

std::size_t Model::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor Model::attend(const Attention& a, const Tensor& query, const Tensor& memory,
                     const std::vector<std::uint8_t>* keep) const {
  const Tensor q = a.q(query);
  const Tensor k = a.k(memory);
  const Tensor v = a.v(memory);
  const auto dk = static_cast<std::size_t>(config_.head_dim());
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dk));
  const std::vector<std::uint8_t> all(query.rows() * memory.rows(), 1);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < static_cast<std::size_t>(config_.num_heads); ++h) {
    const Tensor qh = slice_cols(q, h * dk, dk);
    const Tensor kh = slice_cols(k, h * dk, dk);
    const Tensor vh = slice_cols(v, h * dk, dk);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    heads.push_back(matmul(masked_softmax(scores, keep ? *keep : all), vh));
  }
  return a.o(heads.size() == 1 ? heads[0] : concat_cols(heads));
}

Tensor Model::feed_forward(const FeedForward& f, const Tensor& x) const { return f.fc2(relu(f.fc1(x))); }

Tensor Model::encoder_block(const EncoderLayer& layer, const Tensor& x, ForwardContext& ctx) const {
  const Tensor n1 = layer.norm1(x);
  Tensor out = add(x, ctx.dropout(attend(layer.attn, n1, n1, nullptr), config_.dropout));
  return add(out, ctx.dropout(feed_forward(layer.ffn, layer.norm2(out)), config_.dropout));
}

Tensor Model::positional(std::size_t length) const {
  const auto d = static_cast<std::size_t>(config_.d_model);
  std::vector<Scalar> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const Scalar angle = static_cast<Scalar>(pos) / std::pow(10000.0, static_cast<Scalar>(i) / static_cast<Scalar>(d));
      pe[pos * d + i] = std::sin(angle);
      if (i + 1 < d) pe[pos * d + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, d}, std::move(pe));
}

// ---------------------------------------------------------------------------
// Forward passes

EncoderOutput Model::encode(const FeatureMatrix& features, std::size_t valid_frames, ForwardContext& ctx) const {
  if (features.dims != static_cast<std::size_t>(config_.input_dim)) {
    throw DimensionError("encode: features have " + std::to_string(features.dims) + " dims, model expects " +
                         std::to_string(config_.input_dim));
  }
  if (valid_frames == 0 || valid_frames > features.frames) {
    throw DimensionError("encode: need at least one real frame (got " + std::to_string(valid_frames) + " of " +
                         std::to_string(features.frames) + ")");
  }
  // Only real frames enter the network; zero padding inside the convolutions
  // stands in for the padded region.
  const std::size_t dims = features.dims;
  std::vector<Scalar> values(features.values.begin(),
                             features.values.begin() + static_cast<std::ptrdiff_t>(valid_frames * dims));
  Tensor x;
  if (config_.subsample_factor == 1) {
    x = subsample_out_(Tensor::from({valid_frames, dims}, std::move(values)));
  } else {
    Tensor c = relu(conv2d(Tensor::from({1, valid_frames, dims}, std::move(values)), conv1_w_, conv1_b_, 2, 1));
    if (config_.subsample_factor == 4) c = relu(conv2d(c, conv2_w_, conv2_b_, 2, 1));
    x = subsample_out_(flatten_time_major(c));
  }
  const std::size_t frames = x.rows();
  x = add(scale(x, std::sqrt(static_cast<Scalar>(config_.d_model))), positional(frames));
  x = ctx.dropout(x, config_.dropout);
  for (const auto& layer : encoder_layers_) x = encoder_block(layer, x, ctx);
  return {encoder_norm_(x), frames};
}

Tensor Model::ctc_head(const EncoderOutput& enc) const { return log_softmax(ctc_(enc.h), 1); }

Tensor Model::embed_tokens(std::span<const int> tokens) const {
  const Tensor e = scale(embedding(embed_table_, tokens), std::sqrt(static_cast<Scalar>(config_.d_model)));
  return add(e, positional(tokens.size()));
}

Tensor fuse_embeddings(const Tensor& emb_y, const Tensor& emb_w, double alpha) {
  if (emb_y.shape() != emb_w.shape()) throw DimensionError("fuse_embeddings: operand shapes differ");
  return add(scale(emb_w, alpha), scale(emb_y, 1.0 - alpha));
}

NBestList fit_nbest(const NBestList& nbest, std::size_t n) {
  if (nbest.hypotheses.empty()) throw std::invalid_argument("N-best list is empty");
  NBestList out = nbest;
  if (out.hypotheses.size() > n) out.hypotheses.resize(n);
  while (out.hypotheses.size() < n) out.hypotheses.push_back(out.hypotheses.back());
  return out;
}

Tensor Model::ne_input(const NBestList& nbest, std::size_t max_len) const {
  if (!has_ne()) throw std::logic_error("ne_input: model has no NE module");
  if (max_len == 0) throw std::invalid_argument("ne_input: max_len must be positive");
  const auto fitted = fit_nbest(nbest, static_cast<std::size_t>(config_.ne_nbest));
  std::vector<Tensor> parts;
  for (const auto& h : fitted.hypotheses) {
    TokenSequence padded(h.tokens.begin(),
                         h.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(max_len, h.tokens.size())));
    padded.resize(max_len, Vocabulary::kEos);
    parts.push_back(embed_tokens(padded));
  }
  return ne_input_proj_(parts.size() == 1 ? parts[0] : concat_cols(parts));
}

Tensor Model::ne_encode(const Tensor& x, ForwardContext& ctx) const {
  if (!has_ne()) throw std::logic_error("ne_encode: model has no NE module");
  Tensor h = ctx.dropout(x, config_.dropout);
  for (const auto& layer : ne_layers_) h = encoder_block(layer, h, ctx);
  return ne_norm_(h);
}

Tensor Model::ne_memory(const NBestList& nbest, ForwardContext& ctx) const {
  const auto fitted = fit_nbest(nbest, static_cast<std::size_t>(config_.ne_nbest));
  std::size_t max_len = 1;
  for (const auto& h : fitted.hypotheses) max_len = std::max(max_len, h.tokens.size());
  return ne_encode(ne_input(fitted, max_len), ctx);
}

Tensor Model::decoder_forward(const Tensor& input_emb, const EncoderOutput& enc, const Tensor* ne_memory,
                              ForwardContext& ctx) const {
  if ((ne_memory != nullptr) != has_ne()) {
    throw std::logic_error(has_ne() ? "decoder_forward: NE model needs ne_memory"
                                    : "decoder_forward: ne_memory given to a model without NE");
  }
  const auto keep = causal_mask(input_emb.rows());
  Tensor x = ctx.dropout(input_emb, config_.dropout);
  for (const auto& layer : decoder_layers_) {
    const Tensor n1 = layer.norm1(x);
    Tensor self = attend(layer.self_attn, n1, n1, &keep);
    if (layer.has_ne) {
      // Side attention reads the same normalized input and its output is
      // merged with the self-attention output before the residual.
      const Tensor side = attend(layer.ne_attn, n1, *ne_memory, nullptr);
      self = layer.ne_proj(concat_cols({self, side}));
    }
    x = add(x, ctx.dropout(self, config_.dropout));
    x = add(x, ctx.dropout(attend(layer.src_attn, layer.norm2(x), enc.h, nullptr), config_.dropout));
    x = add(x, ctx.dropout(feed_forward(layer.ffn, layer.norm3(x)), config_.dropout));
  }
  return output_(decoder_norm_(x));
}

// ---------------------------------------------------------------------------

std::size_t count_params(const ModelConfig& c) {
  c.validate();
  const std::size_t d = static_cast<std::size_t>(c.d_model);
  const std::size_t f = static_cast<std::size_t>(c.ffn_dim);
  const std::size_t v = static_cast<std::size_t>(c.vocab_size);
  const std::size_t ch = static_cast<std::size_t>(c.conv_channels);
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t norm = 2 * d;
  const std::size_t attention = 4 * linear(d, d);
  const std::size_t ffn = linear(d, f) + linear(f, d);
  const std::size_t enc_layer = 2 * norm + attention + ffn;
  const std::size_t dec_layer = 3 * norm + 2 * attention + ffn;

  std::size_t front = 0;
  if (c.subsample_factor == 1) {
    front = linear(static_cast<std::size_t>(c.input_dim), d);
  } else if (c.subsample_factor == 2) {
    front = ch * 9 + ch + linear(ch * subsampled_dim(c.input_dim, 2), d);
  } else {
    front = ch * 9 + ch + ch * ch * 9 + ch + linear(ch * subsampled_dim(c.input_dim, 4), d);
  }
  std::size_t total = front + static_cast<std::size_t>(c.encoder_layers) * enc_layer + norm;
  total += linear(d, v);                                                  // ctc head
  total += v * d;                                                         // shared embedding
  total += static_cast<std::size_t>(c.decoder_layers) * dec_layer + norm + linear(d, v);
  if (c.has_ne()) {
    total += linear(static_cast<std::size_t>(c.ne_nbest) * d, d);
    total += static_cast<std::size_t>(c.ne_layers) * enc_layer + norm;
    total += static_cast<std::size_t>(c.decoder_layers) * (attention + linear(2 * d, d));
  }
  return total;
}

}  // namespace letr
