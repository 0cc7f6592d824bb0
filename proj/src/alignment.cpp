#include "letr/alignment.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace letr {

char edit_op_code(EditOp op) {
  switch (op) {
    case EditOp::Match: return 'C';
    case EditOp::Substitute: return 'S';
    case EditOp::Delete: return 'D';
    case EditOp::Insert: return 'I';
  }
  return '?';
}

std::vector<EditOp> EditResult::script() const {
  std::vector<EditOp> out;
  std::copy_if(alignment.begin(), alignment.end(), std::back_inserter(out),
               [](EditOp op) { return op != EditOp::Match; });
  return out;
}

EditResult edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> dp((n + 1) * (m + 1));
  auto D = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) D(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) D(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      D(i, j) = std::min({D(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1u : 0u), D(i - 1, j) + 1, D(i, j - 1) + 1});

  EditResult r;
  r.cost = D(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && D(i, j) == D(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1u : 0u)) {
      const bool same = ref[i - 1] == hyp[j - 1];
      r.alignment.push_back(same ? EditOp::Match : EditOp::Substitute);
      if (!same) ++r.substitutions;
      --i;
      --j;
    } else if (i > 0 && D(i, j) == D(i - 1, j) + 1) {
      r.alignment.push_back(EditOp::Delete);
      ++r.deletions;
      --i;
    } else {
      r.alignment.push_back(EditOp::Insert);
      ++r.insertions;
      --j;
    }
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  return r;
}

AlignedPair aef_align(std::span<const int> y, std::span<const int> w, int blank) {
  if (std::find(y.begin(), y.end(), blank) != y.end() || std::find(w.begin(), w.end(), blank) != w.end()) {
    throw std::invalid_argument("aef_align: inputs must not contain blank");
  }
  const auto edits = edit_distance(y, w);
  AlignedPair out;
  out.substitutions = edits.substitutions;
  out.deletions = edits.deletions;
  out.insertions = edits.insertions;
  std::size_t i = 0, j = 0;
  for (EditOp op : edits.alignment) {
    switch (op) {
      case EditOp::Match:
      case EditOp::Substitute:
        out.y_align.push_back(y[i++]);
        out.w_align.push_back(w[j++]);
        break;
      case EditOp::Delete:
        out.y_align.push_back(y[i++]);
        out.w_align.push_back(blank);
        ++out.blanks_inserted;
        break;
      case EditOp::Insert:
        out.y_align.push_back(blank);
        out.w_align.push_back(w[j++]);
        ++out.blanks_inserted;
        break;
    }
  }
  return out;
}

const char* pathway_name(Pathway p) {
  switch (p) {
    case Pathway::Fuse: return "fuse";
    case Pathway::CtcAsInput: return "ctc_as_input";
    case Pathway::GroundTruthOnly: return "ground_truth_only";
  }
  return "?";
}

Pathway gate(std::size_t len_ctc, std::size_t len_gt, const GatingConfig& config) {
  if (len_gt == 0) throw std::invalid_argument("gate: ground-truth length must be positive");
  if (len_ctc == len_gt) return Pathway::Fuse;
  const std::size_t diff = len_ctc > len_gt ? len_ctc - len_gt : len_gt - len_ctc;
  bool close = false;
  if (config.mode == GateMode::Absolute) {
    close = config.t_l >= 0 && diff <= static_cast<std::size_t>(config.t_l);
  } else {
    close = static_cast<double>(diff) / static_cast<double>(len_gt) <= config.t_r;
  }
  return close ? Pathway::CtcAsInput : Pathway::GroundTruthOnly;
}

double cer(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw std::invalid_argument("cer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp).cost) / static_cast<double>(ref.size());
}

void ErrorTotals::add(const EditResult& r, std::size_t ref_len) {
  edits += r.cost;
  ref_length += ref_len;
  substitutions += r.substitutions;
  deletions += r.deletions;
  insertions += r.insertions;
}

double ErrorTotals::rate() const {
  return ref_length ? static_cast<double>(edits) / static_cast<double>(ref_length) : 0.0;
}

std::string format_alignment(const AlignedPair& pair, const Vocabulary& vocab) {
  std::vector<std::string> ref, hyp, ops;
  for (std::size_t k = 0; k < pair.y_align.size(); ++k) {
    const int a = pair.y_align[k], b = pair.w_align[k];
    ref.push_back(vocab.token(a));
    hyp.push_back(vocab.token(b));
    EditOp op = EditOp::Match;
    if (a == vocab.blank_id()) {
      op = EditOp::Insert;
    } else if (b == vocab.blank_id()) {
      op = EditOp::Delete;
    } else if (a != b) {
      op = EditOp::Substitute;
    }
    ops.emplace_back(1, edit_op_code(op));
  }
  // Column width counts code points so multi-byte characters line up.
  auto width = [](const std::string& s) { return split_chars(s).size(); };
  std::ostringstream rows[3];
  const char* labels[3] = {"REF:", "HYP:", "OPS:"};
  for (int k = 0; k < 3; ++k) rows[k] << labels[k];
  for (std::size_t c = 0; c < ref.size(); ++c) {
    const std::size_t w = std::max({width(ref[c]), width(hyp[c]), width(ops[c])});
    const std::string* cells[3] = {&ref[c], &hyp[c], &ops[c]};
    for (int k = 0; k < 3; ++k) rows[k] << ' ' << *cells[k] << std::string(w - width(*cells[k]), ' ');
  }
  std::ostringstream out;
  for (auto& r : rows) {
    std::string line = r.str();
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  out << "blanks: " << pair.blanks_inserted << '\n';
  return out.str();
}

}  // namespace letr
