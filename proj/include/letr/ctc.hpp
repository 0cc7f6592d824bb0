// CTC machinery: collapse, forward-backward loss, greedy 1-best and prefix
// beam search N-best. All functions are pure.
#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "letr/data.hpp"
#include "letr/tensor.hpp"

namespace letr {

/// Per-frame log-probabilities [frames x classes]; the blank class is part of
/// the label set.
struct CtcPosterior {
  std::size_t frames = 0;
  std::size_t classes = 0;
  int blank = Vocabulary::kBlank;
  std::vector<Scalar> log_probs;

  Scalar at(std::size_t t, std::size_t k) const { return log_probs[t * classes + k]; }

  static CtcPosterior from_tensor(const Tensor& log_probs, int blank = Vocabulary::kBlank);
  static CtcPosterior from_probs(std::size_t frames, std::size_t classes, const std::vector<Scalar>& probs,
                                 int blank = Vocabulary::kBlank);
};

/// Merges adjacent repeats, then removes blanks.
TokenSequence collapse(std::span<const int> path, int blank = Vocabulary::kBlank);

/// Frames needed to emit `target`: one per label plus one blank between
/// each pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const int> target);

struct CtcLossResult {
  bool reachable = false;
  Scalar loss = std::numeric_limits<Scalar>::infinity();
  /// d loss / d log_probs, row-major [frames x classes]; zeros when unreachable.
  std::vector<Scalar> grad;
};

CtcLossResult ctc_loss(const CtcPosterior& posterior, std::span<const int> target);

/// Differentiable form over a [frames x classes] log-probability tensor.
/// Returns nullopt when the target cannot be emitted in the available frames.
std::optional<Tensor> ctc_loss(const Tensor& log_probs, std::span<const int> target,
                               int blank = Vocabulary::kBlank);

/// Framewise argmax (ties -> lowest id), then collapse.
TokenSequence greedy_1best(const CtcPosterior& posterior);

struct Hypothesis {
  TokenSequence tokens;
  Scalar log_score = 0.0;
};

struct NBestList {
  std::vector<Hypothesis> hypotheses;
  /// Set when fewer than the requested n distinct prefixes survived.
  bool truncated = false;

  std::size_t size() const { return hypotheses.size(); }
};

inline constexpr std::size_t kUnboundedBeam = std::numeric_limits<std::size_t>::max();

/// CTC prefix beam search keeping per-prefix blank / non-blank ending
/// log-probabilities. Prefixes are pruned to `beam_width` by total
/// log-probability after every frame; ties go to the lexicographically
/// smaller prefix. Returns the best `n` prefixes.
NBestList prefix_beam_nbest(const CtcPosterior& posterior, std::size_t beam_width, std::size_t n);

/// utt_id<TAB>rank<TAB>log_score<TAB>tokens, ranks starting at 1.
void write_nbest(std::ostream& out, const std::string& utt_id, const NBestList& nbest, const Vocabulary& vocab);

Scalar log_add(Scalar a, Scalar b);

}  // namespace letr
