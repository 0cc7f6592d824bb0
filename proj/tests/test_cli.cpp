#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = letr::cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("letr_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Tiny, fast training configuration.
fs::path tiny_config(const fs::path& dir) {
  write(dir / "c.json", R"({
    "model": {"d_model": 16, "ffn_dim": 16, "num_heads": 2, "encoder_layers": 1, "decoder_layers": 1,
              "conv_channels": 4},
    "train": {"epochs": 2},
    "decode": {"beam": 2},
    "data": {"synth": {"count": 8, "vocab_size": 5, "feature_dim": 6}}
  })");
  return dir / "c.json";
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  auto none = run({});
  EXPECT_EQ(none.code, 1);
  EXPECT_EQ(none.err.rfind("error: code=usage reason=", 0), 0u);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  auto bad = run({"train", "--set", "nonsense"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
}

TEST(Cli, AlignPrintsBlankInsertion) {
  auto dir = scratch("align");
  write(dir / "ref.txt", "ABCA\n");
  write(dir / "hyp.txt", "ACA\n");
  auto r = run({"align", (dir / "ref.txt").string(), (dir / "hyp.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("HYP: A <blank> C A"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("blanks: 1"), std::string::npos);

  write(dir / "hyp2.txt", "ACA\nB\n");
  auto mismatch = run({"align", (dir / "ref.txt").string(), (dir / "hyp2.txt").string()});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_EQ(mismatch.err.rfind("error: code=data reason=", 0), 0u);
}

TEST(Cli, MissingInputsAreDataErrors) {
  EXPECT_EQ(run({"decode", "--checkpoint", "/nonexistent/model.letc"}).code, 2);
  EXPECT_EQ(run({"report", "/nonexistent/metrics.jsonl"}).code, 2);
  EXPECT_EQ(run({"stats", "/nonexistent/manifest.tsv"}).code, 2);
}

TEST(Cli, SynthThenStats) {
  auto dir = scratch("synth");
  auto r = run({"synth", "--output-dir", dir.string(), "--count", "12", "--min-len", "3", "--max-len", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "manifest.tsv"));
  EXPECT_TRUE(fs::exists(dir / "vocab.txt"));
  auto s = run({"stats", (dir / "manifest.tsv").string(), "--kv"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("total=12"), std::string::npos);
}

TEST(Cli, TrainTwiceGivesIdenticalMetrics) {
  auto dir = scratch("determinism");
  auto cfg = tiny_config(dir);
  for (const char* name : {"a", "b"}) {
    auto r = run({"train", "--config", cfg.string(), "--seed", "7", "--output", (dir / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto a = slurp(dir / "a" / "metrics.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "metrics.jsonl"));
  for (const char* f : {"config.json", "vocab.txt", "inputs.json", "train.log", "model.letc", "model.letc.json",
                        "eval.txt", "eval.jsonl"})
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  EXPECT_EQ(slurp(dir / "a" / "inputs.json"), slurp(dir / "b" / "inputs.json"));
}

TEST(Cli, DecodeEvalAndReportOnATrainedRun) {
  auto dir = scratch("pipeline");
  auto cfg = tiny_config(dir);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--output", (dir / "run").string(), "--no-eval"}).code, 0);
  const auto ck = (dir / "run" / "model.letc").string();

  auto d = run({"decode", "--checkpoint", ck, "--beam", "2"});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(std::count(d.out.begin(), d.out.end(), '\n'), 8);
  auto n = run({"decode", "--checkpoint", ck, "--nbest", "2", "--output", (dir / "nbest.txt").string()});
  ASSERT_EQ(n.code, 0) << n.err;
  EXPECT_NE(slurp(dir / "nbest.txt").find("\t1\t"), std::string::npos);

  auto e = run({"eval", "--checkpoint", ck, "--method", "ctc_rescore", "--jsonl", (dir / "e.jsonl").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("corpus CER"), std::string::npos);
  EXPECT_NE(slurp(dir / "e.jsonl").find("\"utt_id\""), std::string::npos);

  auto rep = run({"report", (dir / "run" / "metrics.jsonl").string(), "--output-dir", (dir / "plots").string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  const auto blanks = slurp(dir / "plots" / "blanks.csv");
  EXPECT_EQ(blanks.rfind("x,series,value\n", 0), 0u);
  EXPECT_NE(slurp(dir / "plots" / "loss.csv").find("2,loss,"), std::string::npos);

  auto bad_method = run({"eval", "--checkpoint", ck, "--method", "viterbi"});
  EXPECT_EQ(bad_method.code, 1);
}

TEST(Cli, SweepWritesOneRunPerGridPoint) {
  auto dir = scratch("sweep");
  auto cfg = tiny_config(dir);
  auto r = run({"sweep", "--config", cfg.string(), "--grid", "n=1,3,5", "--set", "method=ne", "--set", "epochs=1",
                "--output", (dir / "grid").string(), "--no-eval", "--jobs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* run_dir : {"n=1", "n=3", "n=5"}) EXPECT_TRUE(fs::exists(dir / "grid" / run_dir / "metrics.jsonl"));
  const auto table = slurp(dir / "grid" / "comparison.tsv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  auto dir = scratch("env");
  auto cfg = tiny_config(dir);
  ::setenv("LETR_OUTPUT_DIR", (dir / "from_env").c_str(), 1);
  auto r = run({"train", "--config", cfg.string(), "--set", "epochs=1", "--no-eval"});
  ::unsetenv("LETR_OUTPUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from_env" / "metrics.jsonl"));
}
