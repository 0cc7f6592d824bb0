#include "letr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <stdexcept>

namespace letr {

namespace {
constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
}

Scalar log_add(Scalar a, Scalar b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const Scalar hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

CtcPosterior CtcPosterior::from_tensor(const Tensor& log_probs, int blank) {
  CtcPosterior p;
  p.frames = log_probs.rows();
  p.classes = log_probs.cols();
  p.blank = blank;
  p.log_probs.assign(log_probs.data().begin(), log_probs.data().end());
  return p;
}

CtcPosterior CtcPosterior::from_probs(std::size_t frames, std::size_t classes, const std::vector<Scalar>& probs,
                                      int blank) {
  if (probs.size() != frames * classes) throw DimensionError("CtcPosterior: probability count mismatch");
  CtcPosterior p;
  p.frames = frames;
  p.classes = classes;
  p.blank = blank;
  p.log_probs.resize(probs.size());
  std::transform(probs.begin(), probs.end(), p.log_probs.begin(), [](Scalar v) { return std::log(v); });
  return p;
}

TokenSequence collapse(std::span<const int> path, int blank) {
  TokenSequence out;
  int prev = -1;
  for (int tok : path) {
    if (tok != prev && tok != blank) out.push_back(tok);
    prev = tok;
  }
  return out;
}

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t need = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

CtcLossResult ctc_loss(const CtcPosterior& posterior, std::span<const int> target) {
  const std::size_t frames = posterior.frames;
  const std::size_t classes = posterior.classes;
  const int blank = posterior.blank;
  for (int tok : target) {
    if (tok == blank) throw std::invalid_argument("ctc_loss: target contains blank");
    if (tok < 0 || static_cast<std::size_t>(tok) >= classes) throw std::out_of_range("ctc_loss: target id out of range");
  }
  CtcLossResult result;
  result.grad.assign(frames * classes, 0.0);
  if (frames == 0 || ctc_min_frames(target) > frames) return result;

  // Extended label sequence with blanks interleaved: b l1 b l2 ... lL b.
  const std::size_t states = 2 * target.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<Scalar> alpha(frames * states, kNegInf);
  std::vector<Scalar> beta(frames * states, kNegInf);
  auto A = [&](std::size_t t, std::size_t s) -> Scalar& { return alpha[t * states + s]; };
  auto B = [&](std::size_t t, std::size_t s) -> Scalar& { return beta[t * states + s]; };
  auto lp = [&](std::size_t t, std::size_t s) { return posterior.at(t, static_cast<std::size_t>(ext[s])); };

  A(0, 0) = lp(0, 0);
  if (states > 1) A(0, 1) = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      Scalar acc = A(t - 1, s);
      if (s >= 1) acc = log_add(acc, A(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, A(t - 1, s - 2));
      if (acc != kNegInf) A(t, s) = acc + lp(t, s);
    }
  }
  const std::size_t last = frames - 1;
  B(last, states - 1) = lp(last, states - 1);
  if (states > 1) B(last, states - 2) = lp(last, states - 2);
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      Scalar acc = B(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, B(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) acc = log_add(acc, B(t + 1, s + 2));
      if (acc != kNegInf) B(t, s) = acc + lp(t, s);
    }
  }

  Scalar log_total = A(last, states - 1);
  if (states > 1) log_total = log_add(log_total, A(last, states - 2));
  if (log_total == kNegInf) return result;
  result.reachable = true;
  result.loss = -log_total;

  // Both alpha and beta include the emission at (t, s), hence the subtraction.
  std::vector<Scalar> occupancy(classes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < states; ++s) {
      const auto k = static_cast<std::size_t>(ext[s]);
      occupancy[k] = log_add(occupancy[k], A(t, s) + B(t, s));
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (occupancy[k] == kNegInf) continue;
      result.grad[t * classes + k] = -std::exp(occupancy[k] - posterior.at(t, k) - log_total);
    }
  }
  return result;
}

std::optional<Tensor> ctc_loss(const Tensor& log_probs, std::span<const int> target, int blank) {
  auto r = ctc_loss(CtcPosterior::from_tensor(log_probs, blank), target);
  if (!r.reachable) return std::nullopt;
  return scalar_with_gradient(r.loss, log_probs, std::move(r.grad));
}

TokenSequence greedy_1best(const CtcPosterior& posterior) {
  std::vector<int> path(posterior.frames);
  for (std::size_t t = 0; t < posterior.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < posterior.classes; ++k)
      if (posterior.at(t, k) > posterior.at(t, best)) best = k;
    path[t] = static_cast<int>(best);
  }
  return collapse(path, posterior.blank);
}

NBestList prefix_beam_nbest(const CtcPosterior& posterior, std::size_t beam_width, std::size_t n) {
  if (n == 0 || beam_width < n) throw std::invalid_argument("prefix_beam_nbest: requires beam_width >= n >= 1");

  struct Entry {
    Scalar blank = kNegInf;
    Scalar non_blank = kNegInf;
    Scalar total() const { return log_add(blank, non_blank); }
  };
  using Beam = std::map<TokenSequence, Entry>;

  auto ranked = [](const Beam& beam) {
    std::vector<std::pair<TokenSequence, Entry>> items(beam.begin(), beam.end());
    // std::map iteration is lexicographic, so a stable sort breaks ties toward the smaller prefix.
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
    return items;
  };

  Beam beam;
  beam[TokenSequence{}].blank = 0.0;
  const int blank = posterior.blank;
  for (std::size_t t = 0; t < posterior.frames; ++t) {
    Beam next;
    for (const auto& [prefix, entry] : beam) {
      const Scalar total = entry.total();
      for (std::size_t k = 0; k < posterior.classes; ++k) {
        const Scalar p = posterior.at(t, k);
        if (p == kNegInf) continue;
        const int tok = static_cast<int>(k);
        if (tok == blank) {
          auto& e = next[prefix];
          e.blank = log_add(e.blank, total + p);
          continue;
        }
        TokenSequence extended = prefix;
        extended.push_back(tok);
        auto& ext = next[extended];
        if (!prefix.empty() && prefix.back() == tok) {
          // A repeat only extends the prefix across a blank.
          ext.non_blank = log_add(ext.non_blank, entry.blank + p);
          auto& same = next[prefix];
          same.non_blank = log_add(same.non_blank, entry.non_blank + p);
        } else {
          ext.non_blank = log_add(ext.non_blank, total + p);
        }
      }
    }
    if (next.size() > beam_width) {
      auto items = ranked(next);
      items.resize(beam_width);
      beam = Beam(items.begin(), items.end());
    } else {
      beam = std::move(next);
    }
  }

  NBestList out;
  for (auto& [prefix, entry] : ranked(beam)) {
    if (out.hypotheses.size() == n) break;
    if (entry.total() == kNegInf) continue;
    out.hypotheses.push_back({prefix, entry.total()});
  }
  out.truncated = out.hypotheses.size() < n;
  return out;
}

void write_nbest(std::ostream& out, const std::string& utt_id, const NBestList& nbest, const Vocabulary& vocab) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  for (std::size_t r = 0; r < nbest.hypotheses.size(); ++r) {
    const auto& h = nbest.hypotheses[r];
    out << utt_id << '\t' << (r + 1) << '\t' << std::setprecision(17) << h.log_score << '\t'
        << vocab.join(h.tokens) << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace letr
