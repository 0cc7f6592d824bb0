#include "letr/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace letr {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects any key nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type (" + std::string(j_.at(key).type_name()) + ")");
    }
  }

  template <class Parse>
  void read_enum(const char* key, Parse parse) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(path(key) + ": expected a string");
    try {
      parse(j_.at(key).get<std::string>());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  template <class T>
  void nested(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    Fields sub(j_.at(key), path(key));
    read_object(sub, out);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) throw ConfigError(path(it.key()) + ": unknown key");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  std::string label() const { return where_.empty() ? "config" : where_; }

  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

void read_object(Fields& f, ModelConfig& c) {
  f.read("input_dim", c.input_dim);
  f.read("d_model", c.d_model);
  f.read("num_heads", c.num_heads);
  f.read("ffn_dim", c.ffn_dim);
  f.read("encoder_layers", c.encoder_layers);
  f.read("decoder_layers", c.decoder_layers);
  f.read("ne_layers", c.ne_layers);
  f.read("ne_nbest", c.ne_nbest);
  f.read("ne_beam_width", c.ne_beam_width);
  f.read("vocab_size", c.vocab_size);
  f.read("dropout", c.dropout);
  f.read("positional_encoding", c.positional_encoding);
  f.read("subsample_factor", c.subsample_factor);
  f.read("conv_channels", c.conv_channels);
}

void read_object(Fields& f, FusionConfig& c) {
  f.read_enum("method", [&](const std::string& s) { c.method = parse_method(s); });
  f.read("alpha", c.alpha);
  f.read("n", c.n);
  f.read("beam_width", c.beam_width);
}

void read_object(Fields& f, GatingConfig& c) {
  f.read_enum("mode", [&](const std::string& s) {
    if (s == "absolute") {
      c.mode = GateMode::Absolute;
    } else if (s == "relative") {
      c.mode = GateMode::Relative;
    } else {
      throw std::invalid_argument("expected absolute or relative, got '" + s + "'");
    }
  });
  f.read("t_l", c.t_l);
  f.read("t_r", c.t_r);
}

void read_object(Fields& f, OptimizerConfig& c) {
  f.read("base_lr", c.base_lr);
  f.read("warmup_steps", c.warmup_steps);
  f.read("beta1", c.beta1);
  f.read("beta2", c.beta2);
  f.read("epsilon", c.epsilon);
  f.read("clip_norm", c.clip_norm);
}

void read_object(Fields& f, TrainConfig& c) {
  f.read("ctc_weight", c.ctc_weight);
  f.nested("fusion", c.fusion);
  f.nested("gating", c.gating);
  f.read("aef_align_before_gate", c.aef_align_before_gate);
  f.read("label_smoothing", c.label_smoothing);
  f.nested("optimizer", c.optimizer);
  f.read("epochs", c.epochs);
  f.read("batch_size", c.batch_size);
  f.read("pretrain_checkpoint", c.pretrain_checkpoint);
  f.read_enum("pretrain", [&](const std::string& s) { c.pretrain = parse_selection(s); });
  f.read("track_train_cer", c.track_train_cer);
}

void read_object(Fields& f, DecodeConfig& c) {
  f.read_enum("method", [&](const std::string& s) { c.method = parse_decode_method(s); });
  f.read("beam", c.beam);
  f.read("ctc_weight", c.ctc_weight);
  f.read("max_len_factor", c.max_len_factor);
}

void read_object(Fields& f, SynthConfig& c) {
  f.read("vocab_size", c.vocab_size);
  f.read("count", c.count);
  f.read("min_len", c.min_len);
  f.read("max_len", c.max_len);
  f.read("min_frames_per_token", c.min_frames_per_token);
  f.read("max_frames_per_token", c.max_frames_per_token);
  f.read("gap_frames", c.gap_frames);
  f.read("feature_dim", c.feature_dim);
  f.read("noise", c.noise);
  f.read("seed", c.seed);
}

void read_object(Fields& f, DataConfig& c) {
  f.read("train_manifest", c.train_manifest);
  f.read("eval_manifest", c.eval_manifest);
  f.read("vocab", c.vocab);
  f.nested("synth", c.synth);
}

void read_object(Fields& f, RunConfig& c) {
  f.nested("model", c.model);
  f.nested("train", c.train);
  f.nested("decode", c.decode);
  f.nested("data", c.data);
  f.read("output_dir", c.output_dir);
  f.read("seed", c.seed);
}

template <class T>
void read_top(const json& j, T& c, const std::string& where) {
  Fields f(j, where);
  read_object(f, c);
  f.finish();
}

json* locate(json& root, const std::string& dotted) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_dim", c.input_dim},
           {"d_model", c.d_model},
           {"num_heads", c.num_heads},
           {"ffn_dim", c.ffn_dim},
           {"encoder_layers", c.encoder_layers},
           {"decoder_layers", c.decoder_layers},
           {"ne_layers", c.ne_layers},
           {"ne_nbest", c.ne_nbest},
           {"ne_beam_width", c.ne_beam_width},
           {"vocab_size", c.vocab_size},
           {"dropout", c.dropout},
           {"positional_encoding", c.positional_encoding},
           {"subsample_factor", c.subsample_factor},
           {"conv_channels", c.conv_channels}};
}
void from_json(const json& j, ModelConfig& c) { read_top(j, c, "model"); }

void to_json(json& j, const TrainConfig& c) {
  j = json{{"ctc_weight", c.ctc_weight},
           {"fusion",
            {{"method", method_name(c.fusion.method)},
             {"alpha", c.fusion.alpha},
             {"n", c.fusion.n},
             {"beam_width", c.fusion.beam_width}}},
           {"gating",
            {{"mode", c.gating.mode == GateMode::Absolute ? "absolute" : "relative"},
             {"t_l", c.gating.t_l},
             {"t_r", c.gating.t_r}}},
           {"aef_align_before_gate", c.aef_align_before_gate},
           {"label_smoothing", c.label_smoothing},
           {"optimizer",
            {{"base_lr", c.optimizer.base_lr},
             {"warmup_steps", c.optimizer.warmup_steps},
             {"beta1", c.optimizer.beta1},
             {"beta2", c.optimizer.beta2},
             {"epsilon", c.optimizer.epsilon},
             {"clip_norm", c.optimizer.clip_norm}}},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"pretrain_checkpoint", c.pretrain_checkpoint},
           {"pretrain", selection_name(c.pretrain)},
           {"track_train_cer", c.track_train_cer}};
}
void from_json(const json& j, TrainConfig& c) { read_top(j, c, "train"); }

void to_json(json& j, const DecodeConfig& c) {
  j = json{{"method", decode_method_name(c.method)},
           {"beam", c.beam},
           {"ctc_weight", c.ctc_weight},
           {"max_len_factor", c.max_len_factor}};
}
void from_json(const json& j, DecodeConfig& c) { read_top(j, c, "decode"); }

void to_json(json& j, const SynthConfig& c) {
  j = json{{"vocab_size", c.vocab_size},
           {"count", c.count},
           {"min_len", c.min_len},
           {"max_len", c.max_len},
           {"min_frames_per_token", c.min_frames_per_token},
           {"max_frames_per_token", c.max_frames_per_token},
           {"gap_frames", c.gap_frames},
           {"feature_dim", c.feature_dim},
           {"noise", c.noise},
           {"seed", c.seed}};
}
void from_json(const json& j, SynthConfig& c) { read_top(j, c, "data.synth"); }

void to_json(json& j, const DataConfig& c) {
  j = json{{"train_manifest", c.train_manifest},
           {"eval_manifest", c.eval_manifest},
           {"vocab", c.vocab},
           {"synth", c.synth}};
}
void from_json(const json& j, DataConfig& c) { read_top(j, c, "data"); }

void to_json(json& j, const RunConfig& c) {
  j = json{{"model", c.model},   {"train", c.train},           {"decode", c.decode},
           {"data", c.data},     {"output_dir", c.output_dir}, {"seed", c.seed}};
}
void from_json(const json& j, RunConfig& c) { read_top(j, c, ""); }

void RunConfig::resolve() {
  train.seed = seed;
  if (train.fusion.method == Method::NE) {
    model.ne_nbest = train.fusion.n;
    model.ne_beam_width = train.fusion.beam_width;
  } else {
    model.ne_nbest = 0;
  }
  try {
    train.validate();
    decode.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.synth.count < 1 || data.synth.min_len < 1 || data.synth.max_len < data.synth.min_len ||
      data.synth.min_frames_per_token < 1 || data.synth.max_frames_per_token < data.synth.min_frames_per_token ||
      data.synth.feature_dim < 1 || data.synth.vocab_size < 1) {
    throw ConfigError("data.synth: sizes must be positive and ranges ordered");
  }
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  static const std::map<std::string, std::string> shorthand = {
      {"method", "train.fusion.method"}, {"t_l", "train.gating.t_l"}, {"t_r", "train.gating.t_r"},
      {"alpha", "train.fusion.alpha"},   {"n", "train.fusion.n"},     {"pretrain", "train.pretrain"},
      {"seed", "seed"},                  {"epochs", "train.epochs"}};
  const auto it = shorthand.find(key);
  const std::string path = it == shorthand.end() ? key : it->second;

  json j = config;
  json* slot = locate(j, path);
  if (!slot) throw ConfigError(key + ": unknown setting");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // bare words are strings
  }
  if (slot->is_string() && !parsed.is_string()) parsed = value;
  *slot = parsed;
  if (key == "t_l") j["train"]["gating"]["mode"] = "absolute";
  if (key == "t_r") j["train"]["gating"]["mode"] = "relative";
  config = j.get<RunConfig>();
  config.resolve();
}

}  // namespace letr
