#include "letr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "letr/serialize.hpp"

namespace letr {

namespace {

const std::array<std::string, Vocabulary::kNumSpecial> kSpecialTokens = {"<blank>", "<unk>", "<sos>", "<eos>"};

bool is_space(std::string_view cp) {
  return cp == " " || cp == "\t" || cp == "\n" || cp == "\r" || cp == "\v" || cp == "\f" ||
         cp == "\xe3\x80\x80";  // U+3000 ideographic space
}

}  // namespace

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) throw DataError("invalid UTF-8 sequence in transcript");
    std::string_view cp = text.substr(i, len);
    if (!is_space(cp)) out.emplace_back(cp);
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(const std::vector<std::string>& transcripts) {
  if (transcripts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::set<std::string> chars;
  for (const auto& t : transcripts)
    for (auto& c : split_chars(t)) chars.insert(std::move(c));
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (const auto& c : chars)
    if (std::find(tokens.begin(), tokens.end(), c) == tokens.end()) tokens.push_back(c);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < kNumSpecial) throw DataError("vocabulary is missing special tokens");
  for (int i = 0; i < kNumSpecial; ++i) {
    if (id_to_token[static_cast<std::size_t>(i)] != kSpecialTokens[static_cast<std::size_t>(i)]) {
      throw DataError("vocabulary special token " + std::to_string(i) + " must be " +
                      kSpecialTokens[static_cast<std::size_t>(i)]);
    }
  }
  Vocabulary v;
  v.id_to_token_ = std::move(id_to_token);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + v.id_to_token_[i] + "'");
    }
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence ids;
  for (const auto& c : split_chars(text)) ids.push_back(id(c));
  return ids;
}

std::string Vocabulary::decode(const TokenSequence& ids) const {
  std::string out;
  for (int id : ids) out += token(id);
  return out;
}

std::string Vocabulary::join(const TokenSequence& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : id_to_token_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;  // token separator
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Feature files and manifests

namespace {
constexpr char kFeatureMagic[4] = {'L', 'E', 'T', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kFeatureF32 = 1;
}  // namespace

void write_features(const std::filesystem::path& path, const FeatureMatrix& features) {
  if (features.values.size() != features.frames * features.dims) {
    throw DataError("feature matrix size mismatch for " + path.string());
  }
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
  bytes::put_u32(out, kFeatureVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(features.frames));
  bytes::put_u32(out, static_cast<std::uint32_t>(features.dims));
  bytes::put_u32(out, kFeatureF32);
  for (float v : features.values) bytes::put_f32(out, v);
  bytes::write_file(path, out);
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::vector<std::uint8_t> raw;
  try {
    raw = bytes::read_file(path);
  } catch (const std::exception&) {
    throw DataError("missing feature file " + path.string());
  }
  try {
    bytes::Reader in(raw);
    if (in.str(4) != std::string(kFeatureMagic, 4)) throw DataError("bad feature magic in " + path.string());
    if (in.u32() != kFeatureVersion) throw DataError("unsupported feature version in " + path.string());
    FeatureMatrix f;
    f.frames = in.u32();
    f.dims = in.u32();
    if (in.u32() != kFeatureF32) throw DataError("unsupported feature dtype in " + path.string());
    f.values.resize(f.frames * f.dims);
    for (auto& v : f.values) {
      v = in.f32();
      if (!std::isfinite(v)) throw DataError("non-finite feature value in " + path.string());
    }
    if (!in.done()) throw DataError("trailing bytes in feature file " + path.string());
    return f;
  } catch (const FormatError& e) {
    throw DataError(std::string(e.what()) + " in " + path.string());
  }
}

std::vector<Utterance> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    Utterance u;
    u.id = fields[0];
    std::filesystem::path feat = fields[1];
    if (feat.is_relative()) feat = base / feat;
    std::size_t frames = 0;
    try {
      frames = std::stoul(fields[2]);
    } catch (const std::exception&) {
      throw DataError("utterance " + u.id + ": bad frame count '" + fields[2] + "'");
    }
    try {
      u.features = read_features(feat);
    } catch (const DataError& e) {
      throw DataError("utterance " + u.id + ": " + e.what());
    }
    if (u.features.frames != frames) {
      throw DataError("utterance " + u.id + ": feature file has " + std::to_string(u.features.frames) +
                      " frames, manifest says " + std::to_string(frames));
    }
    if (frames == 0) throw DataError("utterance " + u.id + ": no frames");
    u.text = fields[3];
    if (split_chars(u.text).empty()) throw DataError("utterance " + u.id + ": empty transcript");
    out.push_back(std::move(u));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::filesystem::path& feature_dir,
                    const std::vector<Utterance>& utterances) {
  std::filesystem::create_directories(feature_dir);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  for (const auto& u : utterances) {
    const auto feat = feature_dir / (u.id + ".feat");
    write_features(feat, u.features);
    auto rel = std::filesystem::relative(feat, base.empty() ? std::filesystem::path(".") : base);
    out << u.id << '\t' << rel.generic_string() << '\t' << u.features.frames << '\t' << u.text << '\n';
  }
}

void tokenize_corpus(std::vector<Utterance>& utterances, const Vocabulary& vocab) {
  for (auto& u : utterances) {
    u.transcript = vocab.encode(u.text);
    if (u.transcript.empty()) throw DataError("utterance " + u.id + ": empty transcript");
  }
}

std::vector<std::string> transcripts_of(const std::vector<Utterance>& utterances) {
  std::vector<std::string> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(u.text);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

std::vector<Utterance> synth_corpus(const SynthConfig& c) {
  static const std::string kAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  if (c.vocab_size < 2 || c.vocab_size > static_cast<int>(kAlphabet.size())) {
    throw DataError("synth: vocab_size must be in [2, " + std::to_string(kAlphabet.size()) + "]");
  }
  if (c.min_len < 1 || c.max_len < c.min_len) throw DataError("synth: empty transcript length range");
  if (c.min_frames_per_token < 1 || c.max_frames_per_token < c.min_frames_per_token) {
    throw DataError("synth: empty frames-per-token range");
  }
  if (c.gap_frames < 0) throw DataError("synth: gap_frames must be >= 0");
  if (c.feature_dim < 1 || c.count < 1 || c.noise < 0.0) throw DataError("synth: invalid size or noise");

  std::mt19937_64 gen(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dims = static_cast<std::size_t>(c.feature_dim);
  std::vector<std::vector<float>> prototypes(static_cast<std::size_t>(c.vocab_size), std::vector<float>(dims));
  for (auto& p : prototypes)
    for (auto& v : p) v = static_cast<float>(normal(gen));

  std::uniform_int_distribution<int> pick_token(0, c.vocab_size - 1);
  std::uniform_int_distribution<int> pick_len(c.min_len, c.max_len);
  std::uniform_int_distribution<int> pick_frames(c.min_frames_per_token, c.max_frames_per_token);

  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(c.count));
  for (int n = 0; n < c.count; ++n) {
    Utterance u;
    char name[32];
    std::snprintf(name, sizeof name, "synth-%05d", n);
    u.id = name;
    const int len = pick_len(gen);
    u.features.dims = dims;
    for (int i = 0; i < len; ++i) {
      // Noise-only pause frames keep adjacent repeats of a token apart.
      for (int g = 0; i > 0 && g < c.gap_frames; ++g) {
        for (std::size_t d = 0; d < dims; ++d) {
          u.features.values.push_back(static_cast<float>(c.noise > 0.0 ? c.noise * normal(gen) : 0.0));
        }
        ++u.features.frames;
      }
      const int tok = pick_token(gen);
      u.text += kAlphabet[static_cast<std::size_t>(tok)];
      const int frames = pick_frames(gen);
      for (int f = 0; f < frames; ++f) {
        for (std::size_t d = 0; d < dims; ++d) {
          const double noise = c.noise > 0.0 ? c.noise * normal(gen) : 0.0;
          u.features.values.push_back(static_cast<float>(prototypes[static_cast<std::size_t>(tok)][d] + noise));
        }
        ++u.features.frames;
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<Batch> make_batches(const std::vector<Utterance>& corpus, std::size_t batch_size,
                                BatchPolicy policy, std::uint64_t seed, int pad_id) {
  if (corpus.empty()) throw DataError("cannot batch an empty corpus");
  if (batch_size == 0) throw DataError("batch size must be positive");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  if (policy == BatchPolicy::Shuffle) {
    std::shuffle(order.begin(), order.end(), gen);
  } else if (policy == BatchPolicy::SortByLength) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return corpus[a].features.frames < corpus[b].features.frames;
    });
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
    for (auto i : b.indices) {
      b.max_frames = std::max(b.max_frames, corpus[i].features.frames);
      b.max_tokens = std::max(b.max_tokens, corpus[i].transcript.size());
    }
    for (auto i : b.indices) {
      const auto& u = corpus[i];
      b.ids.push_back(u.id);
      FeatureMatrix f = u.features;
      f.values.resize(b.max_frames * f.dims, 0.0f);
      f.frames = b.max_frames;
      b.features.push_back(std::move(f));
      b.feature_lengths.push_back(u.features.frames);
      std::vector<std::uint8_t> fm(b.max_frames, 0);
      std::fill_n(fm.begin(), u.features.frames, 1);
      b.frame_mask.push_back(std::move(fm));
      TokenSequence t = u.transcript;
      t.resize(b.max_tokens, pad_id);
      b.targets.push_back(std::move(t));
      b.target_lengths.push_back(u.transcript.size());
      std::vector<std::uint8_t> tm(b.max_tokens, 0);
      std::fill_n(tm.begin(), u.transcript.size(), 1);
      b.target_mask.push_back(std::move(tm));
    }
    batches.push_back(std::move(b));
  }
  if (policy == BatchPolicy::SortByLength) std::shuffle(batches.begin(), batches.end(), gen);
  return batches;
}

// ---------------------------------------------------------------------------
// Length statistics

std::size_t length_bucket(std::size_t length) {
  if (length <= 5) return 0;
  if (length <= 9) return 1;
  if (length <= 14) return 2;
  if (length <= 19) return 3;
  if (length <= 24) return 4;
  return 5;
}

LengthStats corpus_stats(const std::vector<std::size_t>& lengths) {
  LengthStats s;
  for (auto len : lengths) ++s.counts[length_bucket(len)];
  s.total = lengths.size();
  for (std::size_t b = 0; b < s.counts.size(); ++b) {
    s.percent[b] = s.total ? 100.0 * static_cast<double>(s.counts[b]) / static_cast<double>(s.total) : 0.0;
  }
  return s;
}

LengthStats corpus_stats(const std::vector<Utterance>& corpus) {
  std::vector<std::size_t> lengths;
  for (const auto& u : corpus) lengths.push_back(split_chars(u.text).size());
  return corpus_stats(lengths);
}

std::string format_stats_table(const LengthStats& stats, const std::string& subset) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "subset";
  for (auto label : LengthStats::kLabels) os << std::right << std::setw(9) << label;
  os << '\n' << std::left << std::setw(10) << subset;
  for (double p : stats.percent) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << p << '%';
    os << std::right << std::setw(9) << cell.str();
  }
  os << '\n';
  return os.str();
}

std::string format_stats_kv(const LengthStats& stats) {
  std::ostringstream os;
  os << "total=" << stats.total << '\n';
  for (std::size_t b = 0; b < stats.counts.size(); ++b) {
    os << "bucket[" << LengthStats::kLabels[b] << "].count=" << stats.counts[b] << '\n';
    os << "bucket[" << LengthStats::kLabels[b] << "].percent=" << std::fixed << std::setprecision(2)
       << stats.percent[b] << '\n';
  }
  return os.str();
}

}  // namespace letr
