#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "letr/config.hpp"
#include "letr/decode.hpp"
#include "letr/training.hpp"

namespace letr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Errors raised by the command layer itself.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\t', ' ');
  return s;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// git-style content hash: length header, then the bytes.
std::string content_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::uint64_t h = fnv1a(1469598103934665603ULL, header.data(), header.size());
  return hex64(fnv1a(h, bytes.data(), bytes.size()));
}

std::string corpus_hash(const std::vector<Utterance>& corpus) {
  std::string bytes;
  for (const auto& u : corpus) {
    bytes += u.id + '\t' + u.text + '\n';
    bytes.append(reinterpret_cast<const char*>(u.features.values.data()), u.features.values.size() * sizeof(float));
  }
  return content_hash(bytes);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

int thread_count(int flag) {
  if (flag > 0) return flag;
  const std::string v = env_or("LETR_THREADS", "1");
  try {
    const int n = std::stoi(v);
    if (n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw UsageError("LETR_THREADS must be a positive integer, got '" + v + "'");
}

// ---------------------------------------------------------------------------
// Data

struct Corpora {
  std::vector<Utterance> train;
  std::vector<Utterance> eval;
  Vocabulary vocab;
  std::string train_hash;
  std::string eval_hash;
};

std::vector<Utterance> load_or_synth(const std::string& manifest, const SynthConfig& synth) {
  return manifest.empty() ? synth_corpus(synth) : load_manifest(manifest);
}

Corpora load_corpora(const DataConfig& data) {
  Corpora c;
  c.train = load_or_synth(data.train_manifest, data.synth);
  c.vocab = data.vocab.empty() ? Vocabulary::build(transcripts_of(c.train)) : Vocabulary::load(data.vocab);
  tokenize_corpus(c.train, c.vocab);
  if (data.eval_manifest.empty()) {
    c.eval = c.train;
  } else {
    c.eval = load_manifest(data.eval_manifest);
    tokenize_corpus(c.eval, c.vocab);
  }
  c.train_hash = corpus_hash(c.train);
  c.eval_hash = corpus_hash(c.eval);
  return c;
}

// ---------------------------------------------------------------------------
// Training pipeline shared by `train` and `sweep`

struct RunSummary {
  std::string name;
  RunConfig config;
  std::vector<EpochMetrics> history;
  std::optional<double> eval_cer;
};

RunSummary run_training(RunConfig config, std::ostream& log, bool evaluate_after) {
  Corpora data = load_corpora(config.data);
  if (data.train.empty()) throw DataError("training corpus is empty");
  config.model.input_dim = static_cast<int>(data.train.front().features.dims);
  config.model.vocab_size = data.vocab.size();
  config.resolve();

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  Model model(config.model, config.seed);
  if (config.train.pretrain != PretrainSelection::None) {
    const Checkpoint donor = load_checkpoint(config.train.pretrain_checkpoint);
    init_from_pretrained(model, donor, config.train.pretrain, data.vocab.hash());
  }

  write_text(dir / "config.json", json(config).dump(2) + "\n");
  data.vocab.save(dir / "vocab.txt");
  json inputs = {{"train_corpus", data.train_hash},
                 {"eval_corpus", data.eval_hash},
                 {"vocab_hash", hex64(data.vocab.hash())},
                 {"seed", config.seed}};
  write_text(dir / "inputs.json", inputs.dump(2) + "\n");

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream human(dir / "train.log", std::ios::trunc);
  if (!metrics || !human) throw DataError("cannot write into " + dir.string());

  RunSummary summary;
  Trainer trainer(model, data.train, config.train);
  summary.history = trainer.fit([&](const EpochMetrics& m) {
    metrics << metrics_json_line(m) << '\n' << std::flush;
    human << metrics_log_line(m) << '\n' << std::flush;
    log << metrics_log_line(m) << '\n' << std::flush;
  });

  CheckpointMeta meta{config.model, data.vocab.hash(), config.train.fusion.method};
  save_checkpoint(dir / "model.letc", model, &trainer.optimizer(), meta);

  if (evaluate_after) {
    const EvalReport report = evaluate(data.eval, model_decoder(model, config.decode));
    std::ofstream jl(dir / "eval.jsonl", std::ios::binary);
    report.write_jsonl(jl);
    const std::string table = report.table("eval (" + std::string(decode_method_name(config.decode.method)) + ")");
    write_text(dir / "eval.txt", table);
    human << table;
    log << table;
    summary.eval_cer = report.corpus_cer();
  }
  summary.config = std::move(config);
  return summary;
}

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

void apply_settings(RunConfig& cfg, const std::vector<std::string>& settings) {
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

// ---------------------------------------------------------------------------
// Checkpoint-based commands

struct LoadedRun {
  Model model;
  Vocabulary vocab;
  std::vector<Utterance> corpus;
};

LoadedRun load_run(const std::string& checkpoint, const std::string& manifest, const std::string& vocab_path) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const fs::path dir = fs::path(checkpoint).parent_path();
  const fs::path vpath = vocab_path.empty() ? dir / "vocab.txt" : fs::path(vocab_path);
  Vocabulary vocab = Vocabulary::load(vpath);
  if (vocab.hash() != ck.meta.vocab_hash) throw DataError(vpath.string() + ": vocabulary does not match the checkpoint");

  std::vector<Utterance> corpus;
  if (!manifest.empty()) {
    corpus = load_manifest(manifest);
  } else {
    // Fall back to the data section of the run that produced the checkpoint.
    const fs::path run_config = dir / "config.json";
    if (!fs::exists(run_config)) throw UsageError("no --manifest given and no config.json next to the checkpoint");
    const RunConfig rc = load_run_config(run_config);
    corpus = load_or_synth(rc.data.eval_manifest.empty() ? rc.data.train_manifest : rc.data.eval_manifest,
                           rc.data.synth);
  }
  tokenize_corpus(corpus, vocab);
  return {model_from_checkpoint(ck), std::move(vocab), std::move(corpus)};
}

DecodeConfig decode_config(const std::string& method, int beam, double ctc_weight, double max_len_factor) {
  DecodeConfig c;
  c.method = parse_decode_method(method);
  c.beam = beam;
  c.ctc_weight = ctc_weight;
  c.max_len_factor = max_len_factor;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Report

std::string run_label(const fs::path& metrics_path) {
  const auto parent = metrics_path.parent_path().filename().string();
  return parent.empty() ? metrics_path.stem().string() : parent;
}

std::vector<EpochMetrics> read_metrics(const fs::path& path) {
  std::vector<EpochMetrics> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_metrics_line(line));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string metrics_table(const std::string& label, const std::vector<EpochMetrics>& rows) {
  std::ostringstream out;
  out << "== " << label << " ==\n";
  out << std::left << std::setw(6) << "epoch" << std::right << std::setw(10) << "loss" << std::setw(10) << "ctc"
      << std::setw(10) << "att" << std::setw(8) << "blanks" << std::setw(7) << "fuse" << std::setw(7) << "ctcin"
      << std::setw(7) << "gt" << std::setw(10) << "cer" << '\n';
  out << std::fixed;
  for (const auto& m : rows) {
    out << std::left << std::setw(6) << m.epoch << std::right << std::setprecision(4) << std::setw(10) << m.loss
        << std::setw(10) << m.ctc_loss << std::setw(10) << m.att_loss << std::setw(8) << m.blanks_inserted
        << std::setw(7) << m.pathways.fuse << std::setw(7) << m.pathways.ctc_as_input << std::setw(7)
        << m.pathways.ground_truth_only << std::setw(10);
    if (m.train_cer) {
      out << *m.train_cer;
    } else {
      out << "-";
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Sweep

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw UsageError("--grid expects key=v1,v2,..., got '" + spec + "'");
  }
  GridAxis axis{spec.substr(0, eq), {}};
  std::stringstream ss(spec.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ',')) {
    if (v.empty()) throw UsageError("--grid " + axis.key + ": empty value");
    axis.values.push_back(v);
  }
  return axis;
}

std::vector<std::vector<std::pair<std::string, std::string>>> grid_points(const std::vector<GridAxis>& axes) {
  std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& p : points) {
      for (const auto& v : axis.values) {
        auto q = p;
        q.emplace_back(axis.key, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::string comparison_table(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  out << "run\tmethod\tgate\tt_l\tt_r\talpha\tn\tpretrain\tepochs\tfinal_loss\ttrain_cer\teval_cer\tblanks_first\t"
         "blanks_final\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : runs) {
    const auto& t = r.config.train;
    out << r.name << '\t' << method_name(t.fusion.method) << '\t'
        << (t.gating.mode == GateMode::Absolute ? "absolute" : "relative") << '\t' << t.gating.t_l << '\t'
        << t.gating.t_r << '\t' << t.fusion.alpha << '\t' << t.fusion.n << '\t' << selection_name(t.pretrain) << '\t'
        << r.history.size() << '\t';
    if (r.history.empty()) {
      out << "-\t-\t";
    } else {
      out << r.history.back().loss << '\t';
      if (r.history.back().train_cer) {
        out << *r.history.back().train_cer << '\t';
      } else {
        out << "-\t";
      }
    }
    if (r.eval_cer) {
      out << *r.eval_cer << '\t';
    } else {
      out << "-\t";
    }
    if (r.history.empty()) {
      out << "-\t-\n";
    } else {
      out << r.history.front().blanks_inserted << '\t' << r.history.back().blanks_inserted << '\n';
    }
  }
  return out.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"letr: joint CTC-attention speech recognition toolkit", "letr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "letr 0.1.0");

  // train
  std::string config_path, output_flag;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed_flag;
  bool no_eval = false;
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint, metrics and logs");
  train->add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  train->add_option("--seed", seed_flag, "Seed for initialization, dropout and batching");
  train->add_option("--output", output_flag, "Run directory (overrides LETR_OUTPUT_DIR and the config)");
  train->add_option("--set", settings, "Override a config value, e.g. train.fusion.alpha=0.3");
  train->add_flag("--no-eval", no_eval, "Skip decoding the evaluation set after training");

  // decode / eval
  std::string checkpoint, manifest, vocab_path, method = "attention", hyp_out, jsonl_out;
  int beam = 10, nbest = 0;
  double ctc_weight = 0.3, max_len_factor = 1.0;
  auto add_decode_options = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    cmd->add_option("--manifest", manifest, "Utterances to decode (default: the run's own data)");
    cmd->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt next to the checkpoint)");
    cmd->add_option("--method", method, "attention or ctc_rescore");
    cmd->add_option("--beam", beam, "Beam width");
    cmd->add_option("--ctc-weight", ctc_weight, "CTC weight when rescoring");
    cmd->add_option("--max-len-factor", max_len_factor, "Output length cap per encoder frame");
  };
  auto* decode_cmd = app.add_subcommand("decode", "Decode utterances to hypothesis lines");
  add_decode_options(decode_cmd);
  decode_cmd->add_option("--nbest", nbest, "Write the CTC N-best list of this size instead");
  decode_cmd->add_option("--output", hyp_out, "Hypothesis file (default: stdout)");
  auto* eval_cmd = app.add_subcommand("eval", "Decode and score against references");
  add_decode_options(eval_cmd);
  eval_cmd->add_option("--jsonl", jsonl_out, "Per-utterance report (JSON lines)");

  // align
  std::string ref_file, hyp_file;
  auto* align = app.add_subcommand("align", "Print edit-distance alignments with blank insertion");
  align->add_option("ref", ref_file, "Reference transcripts, one per line")->required();
  align->add_option("hyp", hyp_file, "Hypotheses, one per line")->required();
  align->add_option("--vocab", vocab_path, "Vocabulary file (default: built from both files)");

  // synth
  SynthConfig synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus (manifest, features, vocabulary)");
  synth_cmd->add_option("--output-dir", synth_dir, "Destination directory")->required();
  synth_cmd->add_option("--count", synth.count, "Number of utterances");
  synth_cmd->add_option("--vocab-size", synth.vocab_size, "Number of distinct characters");
  synth_cmd->add_option("--min-len", synth.min_len, "Shortest transcript");
  synth_cmd->add_option("--max-len", synth.max_len, "Longest transcript");
  synth_cmd->add_option("--min-frames", synth.min_frames_per_token, "Fewest frames per token");
  synth_cmd->add_option("--max-frames", synth.max_frames_per_token, "Most frames per token");
  synth_cmd->add_option("--gap-frames", synth.gap_frames, "Pause frames between tokens");
  synth_cmd->add_option("--feature-dim", synth.feature_dim, "Feature dimension");
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise level");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  // stats
  std::vector<std::string> manifests;
  bool kv = false;
  auto* stats = app.add_subcommand("stats", "Transcript length distribution");
  stats->add_option("manifests", manifests, "Manifests to summarize (default: the configured data)");
  stats->add_option("--config", config_path, "Run configuration whose data section is used")->check(CLI::ExistingFile);
  stats->add_flag("--kv", kv, "Also print key=value lines");

  // sweep
  std::vector<std::string> grid;
  int jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "Train one run per grid point and compare them");
  sweep->add_option("--config", config_path, "Base run configuration")->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid, "Axis as key=v1,v2 (method, t_l, t_r, alpha, n, pretrain or a dotted key)")
      ->required();
  sweep->add_option("--output", output_flag, "Sweep directory");
  sweep->add_option("--set", settings, "Override a config value for every run");
  sweep->add_option("--jobs", jobs, "Concurrent runs (default: LETR_THREADS or 1)");
  sweep->add_flag("--no-eval", no_eval, "Skip decoding after each run");

  // report
  std::vector<std::string> metric_files;
  std::string report_dir;
  auto* report = app.add_subcommand("report", "Render metrics files as tables and plot data");
  report->add_option("metrics", metric_files, "metrics.jsonl files")->required();
  report->add_option("--output-dir", report_dir, "Where to write loss.csv and blanks.csv");

  auto fail = [&](ExitCode code, const std::string& kind, const std::string& msg) {
    err << "error: code=" << kind << " reason=" << one_line(msg) << '\n';
    return static_cast<int>(code);
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    auto resolve_output = [&](RunConfig& cfg) {
      cfg.output_dir = output_flag.empty() ? env_or("LETR_OUTPUT_DIR", cfg.output_dir) : output_flag;
    };

    if (train->parsed()) {
      RunConfig cfg = base_config(config_path);
      apply_settings(cfg, settings);
      if (seed_flag) cfg.seed = *seed_flag;
      resolve_output(cfg);
      cfg.resolve();
      const RunSummary s = run_training(cfg, out, !no_eval);
      out << "run directory: " << s.config.output_dir << '\n';
      return kOk;
    }

    if (decode_cmd->parsed() || eval_cmd->parsed()) {
      const DecodeConfig dc = decode_config(method, beam, ctc_weight, max_len_factor);
      LoadedRun run = load_run(checkpoint, manifest, vocab_path);
      if (eval_cmd->parsed()) {
        const EvalReport rep = evaluate(run.corpus, model_decoder(run.model, dc));
        out << rep.table("eval (" + std::string(decode_method_name(dc.method)) + ")");
        if (!jsonl_out.empty()) {
          std::ostringstream jl;
          rep.write_jsonl(jl);
          write_text(jsonl_out, jl.str());
        }
        return kOk;
      }
      std::ofstream file;
      if (!hyp_out.empty()) {
        if (fs::path(hyp_out).has_parent_path()) fs::create_directories(fs::path(hyp_out).parent_path());
        file.open(hyp_out, std::ios::binary);
        if (!file) throw DataError("cannot write " + hyp_out);
      }
      std::ostream& dst = hyp_out.empty() ? out : file;
      for (const auto& u : run.corpus) {
        if (nbest > 0) {
          const DecodeContext ctx = prepare_decode(run.model, u.features);
          const auto n = static_cast<std::size_t>(nbest);
          write_nbest(dst, u.id, prefix_beam_nbest(ctx.posterior, std::max(n, static_cast<std::size_t>(beam)), n),
                      run.vocab);
        } else {
          write_hypothesis(dst, u.id, decode(run.model, u.features, dc), run.vocab);
        }
      }
      return kOk;
    }

    if (align->parsed()) {
      const auto refs = read_lines(ref_file);
      const auto hyps = read_lines(hyp_file);
      if (refs.size() != hyps.size()) {
        throw DataError(ref_file + " has " + std::to_string(refs.size()) + " lines but " + hyp_file + " has " +
                        std::to_string(hyps.size()));
      }
      std::vector<std::string> texts = refs;
      texts.insert(texts.end(), hyps.begin(), hyps.end());
      const Vocabulary vocab = vocab_path.empty() ? Vocabulary::build(texts) : Vocabulary::load(vocab_path);
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const AlignedPair pair = aef_align(vocab.encode(refs[i]), vocab.encode(hyps[i]));
        out << "# line " << (i + 1) << '\n' << format_alignment(pair, vocab);
      }
      return kOk;
    }

    if (synth_cmd->parsed()) {
      const auto corpus = synth_corpus(synth);
      const fs::path dir = synth_dir;
      write_manifest(dir / "manifest.tsv", dir / "feats", corpus);
      Vocabulary::build(transcripts_of(corpus)).save(dir / "vocab.txt");
      out << "wrote " << corpus.size() << " utterances to " << (dir / "manifest.tsv").string() << '\n';
      return kOk;
    }

    if (stats->parsed()) {
      if (manifests.empty()) {
        const RunConfig cfg = base_config(config_path);
        const auto corpus = load_or_synth(cfg.data.train_manifest, cfg.data.synth);
        const auto s = corpus_stats(corpus);
        out << format_stats_table(s, cfg.data.train_manifest.empty() ? "synthetic" : "train");
        if (kv) out << format_stats_kv(s);
      }
      for (const auto& m : manifests) {
        const auto s = corpus_stats(load_manifest(m));
        out << format_stats_table(s, fs::path(m).stem().string());
        if (kv) out << format_stats_kv(s);
      }
      return kOk;
    }

    if (sweep->parsed()) {
      RunConfig base = base_config(config_path);
      apply_settings(base, settings);
      resolve_output(base);
      const fs::path root = base.output_dir;
      std::vector<GridAxis> axes;
      for (const auto& g : grid) axes.push_back(parse_axis(g));
      const auto points = grid_points(axes);

      std::vector<RunConfig> configs;
      std::vector<std::string> names;
      for (const auto& point : points) {
        RunConfig cfg = base;
        std::string name;
        for (const auto& [k, v] : point) {
          apply_setting(cfg, k, v);
          name += (name.empty() ? "" : "_") + k + "=" + v;
        }
        cfg.output_dir = (root / name).string();
        configs.push_back(cfg);
        names.push_back(name);
      }

      const int workers = std::min<int>(thread_count(jobs), static_cast<int>(configs.size()));
      std::vector<RunSummary> results(configs.size());
      std::vector<std::string> failures(configs.size());
      std::atomic<std::size_t> next{0};
      std::mutex log_mutex;
      auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
          std::ostringstream log;
          try {
            results[i] = run_training(configs[i], log, !no_eval);
            results[i].name = names[i];
          } catch (const std::exception& e) {
            failures[i] = e.what();
          }
          std::lock_guard<std::mutex> lock(log_mutex);
          out << "[" << names[i] << "] " << (failures[i].empty() ? "done" : "failed: " + one_line(failures[i])) << '\n';
        }
      };
      std::vector<std::thread> pool;
      for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();

      for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i].empty()) throw std::runtime_error("sweep run " + names[i] + " failed: " + failures[i]);
      }
      const std::string table = comparison_table(results);
      write_text(root / "comparison.tsv", table);
      out << table;
      return kOk;
    }

    if (report->parsed()) {
      std::ostringstream loss_csv, blanks_csv;
      loss_csv << "x,series,value\n";
      blanks_csv << "x,series,value\n";
      const bool prefix = metric_files.size() > 1;
      for (const auto& f : metric_files) {
        const auto rows = read_metrics(f);
        const std::string label = run_label(f);
        const std::string p = prefix ? label + ":" : "";
        out << metrics_table(label, rows);
        for (const auto& m : rows) {
          loss_csv << m.epoch << ',' << p << "loss," << json(m.loss).dump() << '\n';
          loss_csv << m.epoch << ',' << p << "ctc_loss," << json(m.ctc_loss).dump() << '\n';
          loss_csv << m.epoch << ',' << p << "att_loss," << json(m.att_loss).dump() << '\n';
          blanks_csv << m.epoch << ',' << p << "blanks_inserted," << m.blanks_inserted << '\n';
        }
      }
      if (!report_dir.empty()) {
        write_text(fs::path(report_dir) / "loss.csv", loss_csv.str());
        write_text(fs::path(report_dir) / "blanks.csv", blanks_csv.str());
        out << "plot data: " << (fs::path(report_dir) / "loss.csv").string() << ", "
            << (fs::path(report_dir) / "blanks.csv").string() << '\n';
      }
      return kOk;
    }
  } catch (const NumericError& e) {
    return fail(kNumeric, "numeric", e.what());
  } catch (const DataError& e) {
    return fail(kData, "data", e.what());
  } catch (const FormatError& e) {
    return fail(kData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kData, "data", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(kData, "data", e.what());
  }
  return fail(kUsage, "usage", "no subcommand given");
}

}  // namespace letr::cli
