// Vocabulary, utterance corpora, feature files, batching and corpus statistics.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace letr {

using TokenSequence = std::vector<int>;

/// Malformed or inconsistent input data (manifests, feature files, corpora).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Splits UTF-8 text into code points, dropping whitespace.
std::vector<std::string> split_chars(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecial = 4;

  /// Specials followed by every distinct character of the corpus in sorted
  /// (byte-wise) order.
  static Vocabulary build(const std::vector<std::string>& transcripts);
  /// Restores a vocabulary from its id-ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int blank_id() const { return kBlank; }
  int unk_id() const { return kUnk; }
  int sos_id() const { return kSos; }
  int eos_id() const { return kEos; }

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  TokenSequence encode(std::string_view text) const;
  std::string decode(const TokenSequence& ids) const;
  /// Space-separated token strings (special tokens shown as <name>).
  std::string join(const TokenSequence& ids) const;

  /// FNV-1a over the token list; identifies compatible checkpoints.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<float> values;  // row-major [frames x dims]

  float at(std::size_t t, std::size_t d) const { return values[t * dims + d]; }
};

struct Utterance {
  std::string id;
  FeatureMatrix features;
  std::string text;
  TokenSequence transcript;  // filled by tokenize_corpus
};

/// Feature file: "LETF" | u32 version | u32 rows | u32 cols | u32 dtype (1 = f32)
/// followed by row-major little-endian float32 values.
void write_features(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_features(const std::filesystem::path& path);

/// Manifest line: utt_id<TAB>feature_path<TAB>num_frames<TAB>transcript.
/// Relative feature paths resolve against the manifest's directory.
std::vector<Utterance> load_manifest(const std::filesystem::path& path);
/// Writes features under `feature_dir` and a manifest referencing them.
void write_manifest(const std::filesystem::path& path, const std::filesystem::path& feature_dir,
                    const std::vector<Utterance>& utterances);

void tokenize_corpus(std::vector<Utterance>& utterances, const Vocabulary& vocab);
std::vector<std::string> transcripts_of(const std::vector<Utterance>& utterances);

struct SynthConfig {
  int vocab_size = 16;
  int count = 200;
  int min_len = 3;
  int max_len = 8;
  int min_frames_per_token = 6;
  int max_frames_per_token = 10;
  int gap_frames = 2;
  int feature_dim = 16;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

/// Monotonic toy transduction task: each token owns a fixed random prototype
/// vector that is repeated for a random number of frames, plus Gaussian noise.
/// Consecutive tokens are separated by `gap_frames` noise-only frames.
std::vector<Utterance> synth_corpus(const SynthConfig& config);

enum class BatchPolicy { Sequential, Shuffle, SortByLength };

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source corpus
  std::vector<std::string> ids;
  std::size_t max_frames = 0;
  std::size_t max_tokens = 0;
  std::vector<FeatureMatrix> features;  // each padded to max_frames with 0.0
  std::vector<std::size_t> feature_lengths;
  std::vector<TokenSequence> targets;  // each padded to max_tokens with pad_id
  std::vector<std::size_t> target_lengths;
  std::vector<std::vector<std::uint8_t>> frame_mask;   // 1 = real frame
  std::vector<std::vector<std::uint8_t>> target_mask;  // 1 = real token

  std::size_t size() const { return indices.size(); }
};

std::vector<Batch> make_batches(const std::vector<Utterance>& corpus, std::size_t batch_size,
                                BatchPolicy policy, std::uint64_t seed,
                                int pad_id = Vocabulary::kEos);

struct LengthStats {
  static constexpr std::array<const char*, 6> kLabels = {"1-5", "6-9", "10-14", "15-19", "20-24", ">=25"};
  std::array<std::size_t, 6> counts{};
  std::size_t total = 0;
  std::array<double, 6> percent{};
};

std::size_t length_bucket(std::size_t length);
LengthStats corpus_stats(const std::vector<std::size_t>& lengths);
LengthStats corpus_stats(const std::vector<Utterance>& corpus);
std::string format_stats_table(const LengthStats& stats, const std::string& subset = "corpus");
std::string format_stats_kv(const LengthStats& stats);

}  // namespace letr
