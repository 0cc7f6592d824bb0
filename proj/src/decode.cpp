#include "letr/decode.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace letr {

const char* decode_method_name(DecodeMethod m) {
  return m == DecodeMethod::AttentionBeam ? "attention" : "ctc_rescore";
}

DecodeMethod parse_decode_method(const std::string& name) {
  if (name == "attention" || name == "attention_beam") return DecodeMethod::AttentionBeam;
  if (name == "ctc_rescore" || name == "rescore") return DecodeMethod::CtcRescore;
  throw std::invalid_argument("unknown decode method '" + name + "' (expected attention or ctc_rescore)");
}

void DecodeConfig::validate() const {
  if (beam < 1) throw std::invalid_argument("decode config: beam must be >= 1");
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw std::invalid_argument("decode config: ctc_weight must be in [0, 1]");
  if (!(max_len_factor > 0.0)) throw std::invalid_argument("decode config: max_len_factor must be positive");
}

DecodeContext prepare_decode(const Model& model, const FeatureMatrix& features) {
  NoGradGuard guard;
  ForwardContext fwd = ForwardContext::inference();
  DecodeContext ctx;
  ctx.enc = model.encode(features, fwd);
  ctx.posterior = CtcPosterior::from_tensor(model.ctc_head(ctx.enc));
  if (model.has_ne()) {
    const auto& c = model.config();
    const auto nbest = prefix_beam_nbest(ctx.posterior, static_cast<std::size_t>(c.ne_beam_width),
                                         static_cast<std::size_t>(c.ne_nbest));
    ctx.ne_memory = model.ne_memory(nbest, fwd);
  }
  return ctx;
}

namespace {

Tensor decoder_log_probs(const Model& model, const DecodeContext& ctx, const TokenSequence& input) {
  ForwardContext fwd = ForwardContext::inference();
  const Tensor* ne = ctx.ne_memory ? &*ctx.ne_memory : nullptr;
  return log_softmax(model.decoder_forward(model.embed_tokens(input), ctx.enc, ne, fwd), 1);
}

}  // namespace

std::vector<Scalar> next_token_log_probs(const Model& model, const DecodeContext& ctx, const TokenSequence& prefix) {
  NoGradGuard guard;
  const Tensor lp = decoder_log_probs(model, ctx, prefix);
  const std::size_t v = lp.cols(), last = lp.rows() - 1;
  const auto d = lp.data();
  return std::vector<Scalar>(d.begin() + static_cast<std::ptrdiff_t>(last * v),
                             d.begin() + static_cast<std::ptrdiff_t>((last + 1) * v));
}

double attention_log_likelihood(const Model& model, const DecodeContext& ctx, const TokenSequence& tokens) {
  NoGradGuard guard;
  TokenSequence input{Vocabulary::kSos};
  input.insert(input.end(), tokens.begin(), tokens.end());
  const Tensor lp = decoder_log_probs(model, ctx, input);
  double total = 0.0;
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    const int next = i < tokens.size() ? tokens[i] : Vocabulary::kEos;
    total += lp.at(i, static_cast<std::size_t>(next));
  }
  return total;
}

std::size_t max_output_length(const DecodeConfig& config, std::size_t encoder_frames) {
  const double cap = std::ceil(config.max_len_factor * static_cast<double>(encoder_frames));
  return std::max<std::size_t>(1, static_cast<std::size_t>(cap));
}

DecodeResult attention_beam_decode(const Model& model, const DecodeContext& ctx, const DecodeConfig& config) {
  config.validate();
  struct Hyp {
    TokenSequence seq;  // starts with sos
    double score = 0.0;
  };
  const std::size_t beam = static_cast<std::size_t>(config.beam);
  const std::size_t max_len = max_output_length(config, ctx.enc.frames);
  std::vector<Hyp> live{{{Vocabulary::kSos}, 0.0}};
  std::vector<DecodeResult> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hyp> candidates;
    for (const auto& h : live) {
      const auto lp = next_token_log_probs(model, ctx, h.seq);
      for (std::size_t k = 0; k < lp.size(); ++k) {
        const int tok = static_cast<int>(k);
        if (tok == Vocabulary::kBlank || tok == Vocabulary::kSos) continue;
        Hyp c{h.seq, h.score + lp[k]};
        c.seq.push_back(tok);
        candidates.push_back(std::move(c));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.seq < b.seq;
    });
    if (candidates.size() > beam) candidates.resize(beam);
    live.clear();
    for (auto& c : candidates) {
      if (c.seq.back() == Vocabulary::kEos) {
        DecodeResult r;
        r.tokens.assign(c.seq.begin() + 1, c.seq.end() - 1);
        r.score = c.score;
        r.normalized = c.score / static_cast<double>(r.tokens.size() + 1);
        finished.push_back(std::move(r));
      } else {
        live.push_back(std::move(c));
      }
    }
  }

  auto better = [](const DecodeResult& a, const DecodeResult& b) { return a.normalized > b.normalized; };
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), better);

  std::vector<DecodeResult> partial;
  for (const auto& h : live) {
    DecodeResult r;
    r.tokens.assign(h.seq.begin() + 1, h.seq.end());
    r.score = h.score;
    r.normalized = h.score / static_cast<double>(r.tokens.size());
    r.finished = false;
    partial.push_back(std::move(r));
  }
  return *std::min_element(partial.begin(), partial.end(), better);
}

DecodeResult attention_beam_decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config) {
  return attention_beam_decode(model, prepare_decode(model, features), config);
}

DecodeResult ctc_rescore_decode(const Model& model, const DecodeContext& ctx, const DecodeConfig& config) {
  config.validate();
  const auto beam = static_cast<std::size_t>(config.beam);
  const NBestList candidates = prefix_beam_nbest(ctx.posterior, beam, beam);
  DecodeResult best;
  bool have = false;
  for (const auto& h : candidates.hypotheses) {
    const double att = attention_log_likelihood(model, ctx, h.tokens);
    const double combined = config.ctc_weight * h.log_score + (1.0 - config.ctc_weight) * att;
    if (!have || combined > best.score) {
      best.tokens = h.tokens;
      best.score = combined;
      best.normalized = combined;
      have = true;
    }
  }
  return best;
}

DecodeResult ctc_rescore_decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config) {
  return ctc_rescore_decode(model, prepare_decode(model, features), config);
}

DecodeResult decode(const Model& model, const FeatureMatrix& features, const DecodeConfig& config) {
  return config.method == DecodeMethod::AttentionBeam ? attention_beam_decode(model, features, config)
                                                      : ctc_rescore_decode(model, features, config);
}

// ---------------------------------------------------------------------------

EvalReport evaluate(const std::vector<Utterance>& corpus, const UtteranceDecoder& decoder) {
  EvalReport report;
  for (const auto& u : corpus) {
    UtteranceScore s;
    s.id = u.id;
    s.reference = u.transcript;
    s.hypothesis = decoder(u);
    const EditResult e = edit_distance(s.reference, s.hypothesis);
    s.ref_length = s.reference.size();
    s.edits = e.cost;
    s.substitutions = e.substitutions;
    s.insertions = e.insertions;
    s.deletions = e.deletions;
    // An empty reference has no defined rate; count it as fully wrong unless
    // the hypothesis is empty too.
    s.cer = s.reference.empty() ? (s.hypothesis.empty() ? 0.0 : 1.0) : cer(s.reference, s.hypothesis);
    report.totals.add(e, s.ref_length);
    report.utterances.push_back(std::move(s));
  }
  return report;
}

std::string EvalReport::table(const std::string& title) const {
  std::vector<double> rates;
  for (const auto& u : utterances) rates.push_back(u.cer);
  std::sort(rates.begin(), rates.end());
  auto quantile = [&](double q) {
    if (rates.empty()) return 0.0;
    return rates[static_cast<std::size_t>(q * static_cast<double>(rates.size() - 1) + 0.5)];
  };
  double mean = 0.0;
  for (double r : rates) mean += r;
  if (!rates.empty()) mean /= static_cast<double>(rates.size());

  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "== " << title << " ==\n";
  out << std::left << std::setw(18) << "utterances" << utterances.size() << '\n';
  out << std::setw(18) << "reference tokens" << totals.ref_length << '\n';
  out << std::setw(18) << "corpus CER" << corpus_cer() << '\n';
  out << std::setw(18) << "substitutions" << totals.substitutions << '\n';
  out << std::setw(18) << "insertions" << totals.insertions << '\n';
  out << std::setw(18) << "deletions" << totals.deletions << '\n';
  out << std::setw(18) << "utterance CER" << "mean " << mean << "  median " << quantile(0.5) << "  p90 "
      << quantile(0.9) << "  max " << (rates.empty() ? 0.0 : rates.back()) << '\n';
  return out.str();
}

void EvalReport::write_jsonl(std::ostream& out) const {
  for (const auto& u : utterances) {
    nlohmann::ordered_json j;
    j["utt_id"] = u.id;
    j["cer"] = u.cer;
    j["subs"] = u.substitutions;
    j["ins"] = u.insertions;
    j["dels"] = u.deletions;
    out << j.dump() << '\n';
  }
}

UtteranceDecoder model_decoder(const Model& model, const DecodeConfig& config) {
  return [&model, config](const Utterance& u) { return decode(model, u.features, config).tokens; };
}

void write_hypothesis(std::ostream& out, const std::string& utt_id, const DecodeResult& result,
                      const Vocabulary& vocab) {
  out << utt_id << '\t' << std::fixed << std::setprecision(6) << result.score << '\t' << vocab.join(result.tokens)
      << '\n';
}

}  // namespace letr
