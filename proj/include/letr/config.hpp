// JSON configuration. Every object is validated exhaustively: unknown keys,
// wrong types and out-of-range values are errors that name the offending key.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "letr/data.hpp"
#include "letr/decode.hpp"
#include "letr/model.hpp"
#include "letr/training.hpp"

namespace letr {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string train_manifest;  // empty: synthesize
  std::string eval_manifest;   // empty: evaluate on the training set
  std::string vocab;           // empty: build from the training transcripts
  SynthConfig synth;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  DataConfig data;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 7;

  /// Pushes shared values (seed, NE width) into the sub-configs and validates.
  void resolve();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and resolves; errors carry the file name.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// Sets one value addressed by a dotted path ("train.fusion.alpha") or by a
/// sweep shorthand: method, t_l, t_r, alpha, n, pretrain.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace letr
