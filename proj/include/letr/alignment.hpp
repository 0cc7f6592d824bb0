// Edit-distance alignment, CER scoring, blank-inserting text alignment and
// the length gate that picks the decoder-input pathway.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "letr/data.hpp"

namespace letr {

enum class EditOp { Match, Substitute, Delete, Insert };

char edit_op_code(EditOp op);

/// Levenshtein alignment of `ref` against `hyp` with unit costs. A deletion is
/// a ref token missing from hyp; an insertion is an extra hyp token.
struct EditResult {
  std::size_t cost = 0;
  std::vector<EditOp> alignment;  // full path, matches included
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  /// Only the non-match operations.
  std::vector<EditOp> script() const;
};

/// Traceback prefers the diagonal (match / substitution), then deletion,
/// then insertion.
EditResult edit_distance(std::span<const int> ref, std::span<const int> hyp);

struct AlignedPair {
  TokenSequence y_align;
  TokenSequence w_align;
  std::size_t blanks_inserted = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
};

/// Aligns ground truth `y` with a hypothesis `w`, inserting `blank` into w_align
/// for every deletion and into y_align for every insertion.
AlignedPair aef_align(std::span<const int> y, std::span<const int> w, int blank = Vocabulary::kBlank);

enum class GateMode { Absolute, Relative };

struct GatingConfig {
  GateMode mode = GateMode::Absolute;
  int t_l = 2;
  double t_r = 0.15;
};

enum class Pathway { Fuse, CtcAsInput, GroundTruthOnly };

const char* pathway_name(Pathway p);

/// Equal lengths fuse; a difference within the active threshold (inclusive)
/// uses the CTC hypothesis; anything further falls back to ground truth.
Pathway gate(std::size_t len_ctc, std::size_t len_gt, const GatingConfig& config);

/// Edit distance over |ref|. Throws std::invalid_argument on an empty ref.
double cer(std::span<const int> ref, std::span<const int> hyp);

/// Corpus-level error accumulator: total edits / total reference length.
struct ErrorTotals {
  std::size_t edits = 0;
  std::size_t ref_length = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  void add(const EditResult& r, std::size_t ref_len);
  double rate() const;
};

/// REF / HYP / OPS rows padded into columns, followed by the blank count.
std::string format_alignment(const AlignedPair& pair, const Vocabulary& vocab);

}  // namespace letr
