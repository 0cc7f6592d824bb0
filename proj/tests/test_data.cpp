#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "letr/data.hpp"

using namespace letr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("letr_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Utterance> small_corpus(int count, std::uint64_t seed = 7) {
  SynthConfig c;
  c.count = count;
  c.seed = seed;
  auto corpus = synth_corpus(c);
  tokenize_corpus(corpus, Vocabulary::build(transcripts_of(corpus)));
  return corpus;
}

}  // namespace

TEST(Vocabulary, SpecialsThenSortedCharacters) {
  auto v = Vocabulary::build({"ab", "ba"});
  EXPECT_EQ(v.size(), Vocabulary::kNumSpecial + 2);
  EXPECT_EQ(v.token(Vocabulary::kNumSpecial), "a");
  EXPECT_EQ(v.token(Vocabulary::kNumSpecial + 1), "b");
  EXPECT_EQ(v.blank_id(), 0);
  EXPECT_EQ(v.hash(), Vocabulary::build({"ab", "ba"}).hash());
  EXPECT_EQ(v.tokens(), Vocabulary::build({"ab", "ba"}).tokens());
}

TEST(Vocabulary, EmptyCorpusIsAnError) { EXPECT_THROW(Vocabulary::build({}), DataError); }

TEST(Vocabulary, MultiByteCharactersAreSingleTokens) {
  auto v = Vocabulary::build({"你好", "好"});
  EXPECT_EQ(v.size(), Vocabulary::kNumSpecial + 2);
  EXPECT_EQ(v.encode("好你").size(), 2u);
}

TEST(Vocabulary, TokenizeRoundTrip) {
  std::mt19937_64 rng(2);
  const std::string alphabet = "xyzw";
  auto v = Vocabulary::build({alphabet});
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    for (int i = 0; i < static_cast<int>(rng() % 12); ++i) s += alphabet[rng() % alphabet.size()];
    EXPECT_EQ(v.decode(v.encode(s)), s);
  }
  EXPECT_EQ(v.encode("q")[0], v.unk_id());
}

TEST(Vocabulary, SaveLoadKeepsIdsAndHash) {
  auto dir = scratch("vocab");
  auto v = Vocabulary::build({"hello world"});
  v.save(dir / "v.txt");
  auto back = Vocabulary::load(dir / "v.txt");
  EXPECT_EQ(back.tokens(), v.tokens());
  EXPECT_EQ(back.hash(), v.hash());
}

TEST(Manifest, WriteLoadIsBitExact) {
  auto dir = scratch("manifest");
  auto corpus = small_corpus(2);
  write_manifest(dir / "m.tsv", dir / "feats", corpus);
  auto back = load_manifest(dir / "m.tsv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].id, corpus[i].id);
    EXPECT_EQ(back[i].text, corpus[i].text);
    EXPECT_EQ(back[i].features.frames, corpus[i].features.frames);
    EXPECT_EQ(back[i].features.values, corpus[i].features.values);
  }
}

TEST(Manifest, WrongFrameCountNamesTheUtterance) {
  auto dir = scratch("badframes");
  auto corpus = small_corpus(1);
  write_features(dir / "u.feat", corpus[0].features);
  std::ofstream(dir / "m.tsv") << "utt-bad\tu.feat\t" << corpus[0].features.frames + 1 << "\tabc\n";
  try {
    load_manifest(dir / "m.tsv");
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("utt-bad"), std::string::npos);
  }
}

TEST(Manifest, MissingFeatureFile) {
  auto dir = scratch("missing");
  std::ofstream(dir / "m.tsv") << "u1\tnope.feat\t3\tabc\n";
  EXPECT_THROW(load_manifest(dir / "m.tsv"), DataError);
}

TEST(Synth, SeedDeterminism) {
  SynthConfig c;
  c.count = 10;
  auto a = synth_corpus(c), b = synth_corpus(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].features.values, b[i].features.values);
  }
  c.seed = 8;
  EXPECT_NE(synth_corpus(c)[0].features.values, a[0].features.values);
}

TEST(Synth, NoiselessFeaturesTilePrototypes) {
  SynthConfig c;
  c.count = 20;
  c.noise = 0.0;
  c.min_frames_per_token = c.max_frames_per_token = 3;
  c.gap_frames = 1;
  auto corpus = synth_corpus(c);
  std::map<char, std::vector<float>> proto;
  for (const auto& u : corpus) {
    const std::size_t dims = u.features.dims;
    ASSERT_EQ(u.features.frames, u.text.size() * 3 + (u.text.size() - 1));
    for (std::size_t i = 0; i < u.text.size(); ++i) {
      const std::size_t start = i * 4;
      if (i > 0) {
        for (std::size_t d = 0; d < dims; ++d) EXPECT_EQ(u.features.at(start - 1, d), 0.0f);
      }
      std::vector<float> first(u.features.values.begin() + static_cast<long>(start * dims),
                               u.features.values.begin() + static_cast<long>((start + 1) * dims));
      for (std::size_t f = 1; f < 3; ++f)
        for (std::size_t d = 0; d < dims; ++d) EXPECT_EQ(u.features.at(start + f, d), first[d]);
      auto [it, fresh] = proto.emplace(u.text[i], first);
      if (!fresh) EXPECT_EQ(it->second, first);
    }
  }
}

TEST(Synth, DegenerateConfigs) {
  SynthConfig c;
  c.min_len = 5;
  c.max_len = 4;
  EXPECT_THROW(synth_corpus(c), DataError);
  c = {};
  c.max_frames_per_token = 0;
  EXPECT_THROW(synth_corpus(c), DataError);
  c = {};
  c.vocab_size = 1;
  EXPECT_THROW(synth_corpus(c), DataError);
}

TEST(Batching, SizesAndPartition) {
  auto corpus = small_corpus(5);
  for (auto policy : {BatchPolicy::Sequential, BatchPolicy::Shuffle, BatchPolicy::SortByLength}) {
    auto batches = make_batches(corpus, 2, policy, 3);
    std::vector<std::size_t> sizes;
    std::vector<std::string> ids;
    for (const auto& b : batches) {
      sizes.push_back(b.size());
      ids.insert(ids.end(), b.ids.begin(), b.ids.end());
    }
    std::sort(sizes.rbegin(), sizes.rend());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 1}));
    std::vector<std::string> want;
    for (const auto& u : corpus) want.push_back(u.id);
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(ids, want);
  }
  auto seq = make_batches(corpus, 2, BatchPolicy::Sequential, 0);
  EXPECT_EQ(seq[0].ids[0], corpus[0].id);
  EXPECT_EQ(seq[2].ids[0], corpus[4].id);
}

TEST(Batching, SameSeedSameOrder) {
  auto corpus = small_corpus(12);
  auto a = make_batches(corpus, 3, BatchPolicy::Shuffle, 9);
  auto b = make_batches(corpus, 3, BatchPolicy::Shuffle, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].ids, b[i].ids);
}

TEST(Batching, PaddingAndMasks) {
  auto corpus = small_corpus(6);
  for (const auto& b : make_batches(corpus, 3, BatchPolicy::Sequential, 0)) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      const auto& u = corpus[b.indices[k]];
      EXPECT_EQ(b.features[k].frames, b.max_frames);
      EXPECT_EQ(b.feature_lengths[k], u.features.frames);
      EXPECT_EQ(std::accumulate(b.frame_mask[k].begin(), b.frame_mask[k].end(), 0u), u.features.frames);
      for (std::size_t i = u.features.values.size(); i < b.features[k].values.size(); ++i)
        EXPECT_EQ(b.features[k].values[i], 0.0f);
      EXPECT_EQ(b.targets[k].size(), b.max_tokens);
      for (std::size_t i = u.transcript.size(); i < b.max_tokens; ++i) {
        EXPECT_EQ(b.targets[k][i], Vocabulary::kEos);
        EXPECT_EQ(b.target_mask[k][i], 0);
      }
    }
  }
}

TEST(Stats, BucketsAndFormatting) {
  auto s = corpus_stats(std::vector<std::size_t>{3, 7, 12});
  EXPECT_NEAR(s.percent[0], 100.0 / 3, 1e-9);
  EXPECT_NEAR(s.percent[1], 100.0 / 3, 1e-9);
  EXPECT_NEAR(s.percent[2], 100.0 / 3, 1e-9);
  EXPECT_EQ(s.percent[3], 0.0);
  const auto table = format_stats_table(s);
  EXPECT_NE(table.find("33.33%"), std::string::npos);
  EXPECT_NE(table.find("0.00%"), std::string::npos);
  EXPECT_NE(table.find(">=25"), std::string::npos);
}

TEST(Stats, BucketBoundaries) {
  EXPECT_EQ(length_bucket(5), 0u);
  EXPECT_EQ(length_bucket(6), 1u);
  EXPECT_EQ(length_bucket(9), 1u);
  EXPECT_EQ(length_bucket(10), 2u);
  EXPECT_EQ(length_bucket(24), 4u);
  EXPECT_EQ(length_bucket(25), 5u);
}

TEST(Stats, PercentagesSumToHundred) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> lengths(1 + rng() % 300);
    for (auto& l : lengths) l = 1 + rng() % 40;
    auto s = corpus_stats(lengths);
    EXPECT_NEAR(std::accumulate(s.percent.begin(), s.percent.end(), 0.0), 100.0, 0.01);
  }
}
