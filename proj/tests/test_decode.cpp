#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "letr/decode.hpp"
#include "oracles.hpp"

using namespace letr;

namespace {

// Four specials plus three characters.
ModelConfig toy(int ne_nbest = 0) {
  ModelConfig c;
  c.input_dim = 4;
  c.d_model = 8;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ne_nbest = ne_nbest;
  c.ne_beam_width = 3;
  c.vocab_size = 7;
  c.conv_channels = 2;
  return c;
}

FeatureMatrix features(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMatrix f;
  f.frames = frames;
  f.dims = 4;
  for (double v : oracle::random_values(frames * 4, rng)) f.values.push_back(static_cast<float>(v));
  return f;
}

// Sharpen the output layer so that short hypotheses ending in eos compete.
void sharpen(Model& m, double factor) {
  for (auto& v : m.parameter("decoder.out.weight").mutable_data()) v *= factor;
}

DecodeConfig beam(int width) {
  DecodeConfig c;
  c.beam = width;
  return c;
}

}  // namespace

TEST(AttentionBeam, WidthOneIsStepwiseArgmax) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Model m(toy(), seed);
    sharpen(m, 3.0);
    auto ctx = prepare_decode(m, features(14, seed));
    const std::size_t cap = max_output_length(beam(1), ctx.enc.frames);
    TokenSequence prefix{Vocabulary::kSos};
    double score = 0;
    bool finished = false;
    while (prefix.size() - 1 < cap) {
      auto lp = next_token_log_probs(m, ctx, prefix);
      int best = -1;
      for (int k = 0; k < static_cast<int>(lp.size()); ++k) {
        if (k == Vocabulary::kBlank || k == Vocabulary::kSos) continue;
        if (best < 0 || lp[k] > lp[best]) best = k;
      }
      score += lp[best];
      if (best == Vocabulary::kEos) {
        finished = true;
        break;
      }
      prefix.push_back(best);
    }
    auto r = attention_beam_decode(m, ctx, beam(1));
    EXPECT_EQ(r.tokens, TokenSequence(prefix.begin() + 1, prefix.end())) << "seed " << seed;
    EXPECT_EQ(r.finished, finished);
    EXPECT_NEAR(r.score, score, 1e-12);
  }
}

TEST(AttentionBeam, UnprunedSearchEqualsExhaustiveEnumeration) {
  const std::vector<int> emit = {Vocabulary::kUnk, 4, 5, 6};
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Model m(toy(), 100 + seed);
    sharpen(m, 3.0);
    auto ctx = prepare_decode(m, features(10, seed));
    ASSERT_EQ(ctx.enc.frames, 3u);
    const std::size_t cap = max_output_length(beam(1), ctx.enc.frames);

    // Every string of at most cap - 1 tokens followed by eos.
    double best = -INFINITY;
    TokenSequence best_seq;
    std::vector<TokenSequence> frontier{{}};
    for (std::size_t len = 0; len < cap; ++len) {
      std::vector<TokenSequence> next;
      for (const auto& s : frontier) {
        const double norm = attention_log_likelihood(m, ctx, s) / static_cast<double>(s.size() + 1);
        if (norm > best) {
          best = norm;
          best_seq = s;
        }
        for (int t : emit) {
          auto e = s;
          e.push_back(t);
          next.push_back(e);
        }
      }
      frontier = std::move(next);
    }
    auto r = attention_beam_decode(m, ctx, beam(10000));
    ASSERT_TRUE(r.finished);
    EXPECT_EQ(r.tokens, best_seq) << "seed " << seed;
    EXPECT_NEAR(r.normalized, best, 1e-9);
  }
}

TEST(AttentionBeam, Deterministic) {
  Model m(toy(), 3);
  auto f = features(20, 3);
  auto a = attention_beam_decode(m, f, beam(4)), b = attention_beam_decode(m, f, beam(4));
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.score, b.score);
}

TEST(AttentionBeam, WiderBeamNeverScoresWorse) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Model m(toy(), 200 + seed);
    sharpen(m, 3.0);
    auto ctx = prepare_decode(m, features(12, seed));
    double prev = -INFINITY;
    for (int width = 1; width <= 6; ++width) {
      auto r = attention_beam_decode(m, ctx, beam(width));
      if (!r.finished) continue;
      EXPECT_GE(r.normalized, prev - 1e-12) << "seed " << seed << " width " << width;
      prev = std::max(prev, r.normalized);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(AttentionBeam, NoEosWithinCapReturnsFlaggedPartial) {
  Model m(toy(), 4);
  auto& b = m.parameter("decoder.out.bias");
  b.mutable_data()[Vocabulary::kEos] = -50.0;
  auto r = attention_beam_decode(m, features(6, 1), beam(3));
  EXPECT_FALSE(r.finished);
  EXPECT_EQ(r.tokens.size(), max_output_length(beam(3), subsampled_length(6, 4)));
}

TEST(AttentionBeam, NeModelDecodes) {
  Model m(toy(2), 5);
  auto a = attention_beam_decode(m, features(16, 2), beam(3));
  auto b = attention_beam_decode(m, features(16, 2), beam(3));
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.score, b.score);
}

TEST(CtcRescore, EndpointsAndBruteForce) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model m(toy(), 300 + seed);
    for (auto& v : m.parameter("ctc_head.weight").mutable_data()) v *= 4.0;
    auto ctx = prepare_decode(m, features(24, seed));
    auto candidates = prefix_beam_nbest(ctx.posterior, 5, 5);

    DecodeConfig c = beam(5);
    c.method = DecodeMethod::CtcRescore;
    c.ctc_weight = 1.0;
    EXPECT_EQ(ctc_rescore_decode(m, ctx, c).tokens, candidates.hypotheses[0].tokens);

    for (double lambda : {0.0, 0.3, 0.7}) {
      c.ctc_weight = lambda;
      double best = -INFINITY;
      TokenSequence want;
      for (const auto& h : candidates.hypotheses) {
        // Independent attention scorer: sum of per-step next-token log-probs.
        TokenSequence prefix{Vocabulary::kSos};
        double att = 0;
        for (std::size_t i = 0; i <= h.tokens.size(); ++i) {
          const int next = i < h.tokens.size() ? h.tokens[i] : Vocabulary::kEos;
          att += next_token_log_probs(m, ctx, prefix)[next];
          if (i < h.tokens.size()) prefix.push_back(next);
        }
        const double combined = lambda * h.log_score + (1 - lambda) * att;
        if (combined > best + 1e-12) {
          best = combined;
          want = h.tokens;
        }
      }
      auto r = ctc_rescore_decode(m, ctx, c);
      EXPECT_EQ(r.tokens, want) << "seed " << seed << " lambda " << lambda;
      EXPECT_NEAR(r.score, best, 1e-9);
    }
  }
}

TEST(Decode, DispatchAndConfigValidation) {
  Model m(toy(), 6);
  auto f = features(12, 6);
  DecodeConfig c = beam(3);
  EXPECT_EQ(decode(m, f, c).tokens, attention_beam_decode(m, f, c).tokens);
  c.method = DecodeMethod::CtcRescore;
  EXPECT_EQ(decode(m, f, c).tokens, ctc_rescore_decode(m, f, c).tokens);
  c.beam = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_decode_method("attention"), DecodeMethod::AttentionBeam);
  EXPECT_EQ(parse_decode_method("ctc_rescore"), DecodeMethod::CtcRescore);
  EXPECT_THROW(parse_decode_method("viterbi"), std::invalid_argument);
  EXPECT_EQ(max_output_length(beam(1), 0), 1u);
}

TEST(Evaluate, StubbedDecoders) {
  std::vector<Utterance> corpus(3);
  corpus[0].transcript = {4, 5, 6, 4};
  corpus[1].transcript = {4, 5};
  corpus[2].transcript = {6};
  for (std::size_t i = 0; i < 3; ++i) corpus[i].id = "u" + std::to_string(i);

  auto perfect = evaluate(corpus, [](const Utterance& u) { return u.transcript; });
  EXPECT_EQ(perfect.corpus_cer(), 0.0);
  auto empty = evaluate(corpus, [](const Utterance&) { return TokenSequence{}; });
  EXPECT_EQ(empty.corpus_cer(), 1.0);

  std::map<std::string, TokenSequence> hyps = {{"u0", {4, 6, 4}}, {"u1", {7, 5, 6}}, {"u2", {6}}};
  auto report = evaluate(corpus, [&](const Utterance& u) { return hyps[u.id]; });
  std::size_t edits = 0, ref = 0;
  for (const auto& u : corpus) {
    edits += oracle::levenshtein(u.transcript, hyps[u.id]);
    ref += u.transcript.size();
  }
  EXPECT_EQ(report.totals.edits, edits);
  EXPECT_DOUBLE_EQ(report.corpus_cer(), static_cast<double>(edits) / static_cast<double>(ref));
  for (const auto& s : report.utterances) EXPECT_EQ(s.cer, cer(s.reference, s.hypothesis));

  std::ostringstream jl;
  report.write_jsonl(jl);
  std::string first;
  std::getline(std::istringstream(jl.str()) >> std::ws, first);
  EXPECT_EQ(first, R"({"utt_id":"u0","cer":0.25,"subs":0,"ins":0,"dels":1})");
  EXPECT_NE(report.table().find("corpus CER"), std::string::npos);
}

TEST(Evaluate, HypothesisLineFormat) {
  auto vocab = Vocabulary::build({"abc"});
  DecodeResult r;
  r.tokens = {4, 6};
  r.score = -1.5;
  std::ostringstream out;
  write_hypothesis(out, "utt", r, vocab);
  EXPECT_EQ(out.str(), "utt\t-1.500000\ta c\n");
}
