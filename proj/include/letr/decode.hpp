// Inference: autoregressive beam search over the attention decoder, CTC
// N-best rescoring with teacher-forced attention scores, and corpus scoring.
#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "letr/alignment.hpp"
#include "letr/ctc.hpp"
#include "letr/data.hpp"
#include "letr/model.hpp"

namespace letr {

enum class DecodeMethod { AttentionBeam, CtcRescore };

const char* decode_method_name(DecodeMethod m);
DecodeMethod parse_decode_method(const std::string& name);

struct DecodeConfig {
  DecodeMethod method = DecodeMethod::AttentionBeam;
  int beam = 10;
  // Interpolation weight of the CTC score when rescoring.
  double ctc_weight = 0.3;
  // Output length cap as a multiple of the encoder frame count.
  double max_len_factor = 1.0;

  void validate() const;
};

struct DecodeResult {
  TokenSequence tokens;  // without sos / eos
  double score = 0.0;    // log-probability (combined score when rescoring)
  // Ranking score: score / (token count + 1) for attention search, equal to
  // score when rescoring.
  double normalized = 0.0;
  /// False when no hypothesis reached eos and the best partial was returned.
  bool finished = true;
};

/// Encoder output plus, for NE models, the N-best memory of the same
/// utterance. Computed once per utterance and shared by every search step.
struct DecodeContext {
  EncoderOutput enc;
  CtcPosterior posterior;
  std::optional<Tensor> ne_memory;
};

DecodeContext prepare_decode(const Model& model, const FeatureMatrix& features);

/// Log-probabilities over the vocabulary for the token after `prefix`
/// (prefix starts with sos).
std::vector<Scalar> next_token_log_probs(const Model& model, const DecodeContext& ctx, const TokenSequence& prefix);

/// Teacher-forced log p(tokens + eos | features).
double attention_log_likelihood(const Model& model, const DecodeContext& ctx, const TokenSequence& tokens);

std::size_t max_output_length(const DecodeConfig& config, std::size_t encoder_frames);

/// Beam search from sos. Every token except blank and sos may be emitted;
/// eos finishes a hypothesis. Finished hypotheses are ranked by score divided
/// by their length including eos.
DecodeResult attention_beam_decode(const Model& model, const DecodeContext& ctx, const DecodeConfig& config);
DecodeResult attention_beam_decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config);

/// Candidates from the CTC prefix beam search, each scored as
/// ctc_weight * ctc + (1 - ctc_weight) * attention.
DecodeResult ctc_rescore_decode(const Model& model, const DecodeContext& ctx, const DecodeConfig& config);
DecodeResult ctc_rescore_decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config);

DecodeResult decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config);

// ---------------------------------------------------------------------------
// Scoring

struct UtteranceScore {
  std::string id;
  TokenSequence reference;
  TokenSequence hypothesis;
  std::size_t ref_length = 0;
  std::size_t edits = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  double cer = 0.0;
};

struct EvalReport {
  std::vector<UtteranceScore> utterances;
  ErrorTotals totals;

  double corpus_cer() const { return totals.rate(); }
  /// Summary table: corpus CER, error breakdown and per-utterance CER spread.
  std::string table(const std::string& title = "eval") const;
  /// {utt_id, cer, subs, ins, dels} per line.
  void write_jsonl(std::ostream& out) const;
};

using UtteranceDecoder = std::function<TokenSequence(const Utterance&)>;

EvalReport evaluate(const std::vector<Utterance>& corpus, const UtteranceDecoder& decoder);
UtteranceDecoder model_decoder(const Model& model, const DecodeConfig& config);

/// utt_id<TAB>log_score<TAB>tokens
void write_hypothesis(std::ostream& out, const std::string& utt_id, const DecodeResult& result,
                      const Vocabulary& vocab);

}  // namespace letr
