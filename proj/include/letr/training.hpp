// Joint CTC-attention training: per-utterance decoder input construction for
// the Baseline / EF / AEF / NE methods, the interpolated loss, Adam with an
// inverse-square-root warmup schedule, checkpoints and pre-training loads.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "letr/alignment.hpp"
#include "letr/ctc.hpp"
#include "letr/data.hpp"
#include "letr/model.hpp"
#include "letr/serialize.hpp"

namespace letr {

/// Raised when a loss or update turns non-finite; the message names the
/// batch and the pathway involved.
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

enum class PretrainSelection { None, Encoder, EncoderDecoder };

const char* selection_name(PretrainSelection s);
PretrainSelection parse_selection(const std::string& name);

struct OptimizerConfig {
  double base_lr = 0.01;
  int warmup_steps = 25;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  // Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 5.0;
};

struct TrainConfig {
  double ctc_weight = 0.3;
  FusionConfig fusion;
  GatingConfig gating;
  bool aef_align_before_gate = true;
  double label_smoothing = 0.1;
  OptimizerConfig optimizer;
  int epochs = 30;
  std::size_t batch_size = 4;
  std::uint64_t seed = 7;
  std::string pretrain_checkpoint;
  PretrainSelection pretrain = PretrainSelection::None;
  // Greedy attention decoding of the training set after every epoch.
  bool track_train_cer = true;

  void validate() const;
};

/// Inverse square-root schedule with linear warmup; peaks at step == warmup.
double learning_rate(const OptimizerConfig& config, std::uint64_t step);

class Adam {
 public:
  Adam(std::vector<NamedTensor> params, OptimizerConfig config);

  /// One update from the accumulated gradients, which are zeroed afterwards.
  /// Returns the gradient norm before clipping.
  double step();

  std::uint64_t steps() const { return step_; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  std::vector<ContainerEntry> state_entries() const;
  void load_state(const std::vector<ContainerEntry>& entries);

 private:
  std::vector<NamedTensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<Scalar>> m_, v_;
  std::uint64_t step_ = 0;
};

/// lambda * l_ctc + (1 - lambda) * l_att.
double joint_loss(double l_ctc, double l_att, double lambda);
Tensor joint_loss(const Tensor& l_ctc, const Tensor& l_att, double lambda);

/// Sum over unmasked positions of the cross-entropy between the smoothed
/// one-hot target (1 - eps on the label, eps / (V - 1) elsewhere) and the
/// predicted distribution.
Tensor label_smoothed_ce(const Tensor& logits, const TokenSequence& target,
                         const std::vector<std::uint8_t>& mask, double epsilon);

struct DecoderInput {
  Tensor embeddings;            // [L x d_model]
  TokenSequence truth_tokens;   // sos + y (or sos + y_align)
  TokenSequence ctc_tokens;     // sos + W side when CTC output is used; empty otherwise
  TokenSequence target;
  std::vector<std::uint8_t> loss_mask;
  Pathway pathway = Pathway::GroundTruthOnly;
  std::size_t blanks_inserted = 0;
  std::optional<Tensor> ne_memory;
};

/// Builds the decoder-side tensors for one utterance with transcript `y`,
/// given the live CTC posterior of the same utterance. When `ctc_reachable`
/// is false the attention branch falls back to plain teacher forcing.
DecoderInput build_decoder_input(const Model& model, const TokenSequence& y, const CtcPosterior& posterior,
                                 const TrainConfig& config, ForwardContext& ctx, bool ctc_reachable = true);

struct PathwayCounts {
  std::size_t fuse = 0;
  std::size_t ctc_as_input = 0;
  std::size_t ground_truth_only = 0;

  void add(Pathway p);
  std::size_t total() const { return fuse + ctc_as_input + ground_truth_only; }
};

struct StepResult {
  double loss = 0.0;
  double ctc_loss = 0.0;  // mean over reachable utterances
  double att_loss = 0.0;  // mean over utterances
  std::size_t utterances = 0;
  std::size_t ctc_utterances = 0;
  std::size_t ctc_unreachable = 0;
  std::size_t blanks_inserted = 0;
  PathwayCounts pathways;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;      // mean over batches
  double ctc_loss = 0.0;  // mean over reachable utterances
  double att_loss = 0.0;  // mean over utterances
  std::size_t blanks_inserted = 0;
  PathwayCounts pathways;
  std::size_t utterances = 0;
  std::size_t ctc_unreachable = 0;
  std::uint64_t steps = 0;
  double learning_rate = 0.0;
  std::optional<double> train_cer;
  std::optional<double> ctc_cer;
  double wall_seconds = 0.0;  // human log only
};

/// One JSON object per line. Wall time is left out so that metrics files from
/// identical runs compare byte for byte.
std::string metrics_json_line(const EpochMetrics& m);
EpochMetrics parse_metrics_line(const std::string& line);
std::string metrics_log_line(const EpochMetrics& m);

class Trainer {
 public:
  using EpochCallback = std::function<void(const EpochMetrics&)>;

  /// `corpus` must already be tokenized and outlive the trainer.
  Trainer(Model& model, const std::vector<Utterance>& corpus, TrainConfig config);

  /// Loss of one batch without any update (dropout still follows `step`).
  Tensor batch_loss(const Batch& batch, std::uint64_t step, StepResult& stats);
  StepResult train_step(const Batch& batch);
  std::vector<Batch> epoch_batches(int epoch) const;
  EpochMetrics train_epoch(int epoch);
  std::vector<EpochMetrics> fit(const EpochCallback& on_epoch = {});

  Model& model() { return model_; }
  Adam& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return config_; }

 private:
  Model& model_;
  const std::vector<Utterance>& corpus_;
  TrainConfig config_;
  Adam optimizer_;
};

/// Character error rate of greedy CTC decoding and of greedy attention
/// decoding over a tokenized corpus.
double corpus_ctc_cer(const Model& model, const std::vector<Utterance>& corpus);
double corpus_attention_cer(const Model& model, const std::vector<Utterance>& corpus);

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
  ModelConfig model;
  std::uint64_t vocab_hash = 0;
  Method method = Method::Baseline;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<ContainerEntry> entries;

  const ContainerEntry* find(const std::string& name) const;
};

/// Writes the tensor container at `path` and the JSON sidecar at path + ".json".
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optimizer,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Fresh model with every parameter taken from the checkpoint.
Model model_from_checkpoint(const Checkpoint& checkpoint);
void restore_optimizer(Adam& optimizer, const Checkpoint& checkpoint);

/// Overwrites the selected parameter groups (encoder.* and ctc_head.*, plus
/// decoder.* and embed.* for EncoderDecoder). ne.* is never loaded.
void init_from_pretrained(Model& model, const Checkpoint& checkpoint, PretrainSelection selection,
                          std::optional<std::uint64_t> vocab_hash = std::nullopt);

}  // namespace letr
