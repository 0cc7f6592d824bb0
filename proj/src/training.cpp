#include "letr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "letr/config.hpp"
#include "letr/decode.hpp"

namespace letr {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a;
  for (std::uint64_t v : {b, c}) {
    z += 0x9E3779B97F4A7C15ULL + v;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
  }
  return z;
}

TokenSequence with_sos(const TokenSequence& y) {
  TokenSequence out{Vocabulary::kSos};
  out.insert(out.end(), y.begin(), y.end());
  return out;
}

TokenSequence with_eos(const TokenSequence& y) {
  TokenSequence out = y;
  out.push_back(Vocabulary::kEos);
  return out;
}

Tensor sum_all(const std::vector<Tensor>& terms) {
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

const char* selection_name(PretrainSelection s) {
  switch (s) {
    case PretrainSelection::None: return "none";
    case PretrainSelection::Encoder: return "encoder";
    case PretrainSelection::EncoderDecoder: return "encoder_decoder";
  }
  return "?";
}

PretrainSelection parse_selection(const std::string& name) {
  if (name == "none") return PretrainSelection::None;
  if (name == "encoder") return PretrainSelection::Encoder;
  if (name == "encoder_decoder" || name == "encoder+decoder") return PretrainSelection::EncoderDecoder;
  throw std::invalid_argument("unknown pretrain selection '" + name + "' (expected none, encoder, encoder_decoder)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
  };
  require(ctc_weight >= 0.0 && ctc_weight <= 1.0, "ctc_weight must be in [0, 1]");
  require(optimizer.warmup_steps >= 1, "warmup_steps must be >= 1");
  require(optimizer.base_lr > 0.0, "base_lr must be positive");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
          "betas must be in [0, 1)");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must be in [0, 1)");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(gating.t_l >= 0 && gating.t_r >= 0.0, "gating thresholds must be non-negative");
  require(pretrain == PretrainSelection::None || !pretrain_checkpoint.empty(),
          "pretrain selection needs pretrain_checkpoint");
  fusion.validate();
}

// ---------------------------------------------------------------------------
// Optimizer

double learning_rate(const OptimizerConfig& config, std::uint64_t step) {
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  const double w = static_cast<double>(config.warmup_steps);
  return config.base_lr * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

Adam::Adam(std::vector<NamedTensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

double Adam::step() {
  ++step_;
  double sq = 0.0;
  for (auto& p : params_)
    for (Scalar g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("adam: non-finite gradient norm");
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  const double lr = learning_rate(config_, step_);
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].tensor.mutable_data();
    auto g = params_[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * clip;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
    }
    params_[i].tensor.zero_grad();
  }
  return norm;
}

std::vector<ContainerEntry> Adam::state_entries() const {
  std::vector<ContainerEntry> out;
  out.push_back({"optim.step", DType::F64, {1}, {static_cast<Scalar>(step_)}});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"optim.m." + params_[i].name, DType::F64, params_[i].tensor.shape(), m_[i]});
    out.push_back({"optim.v." + params_[i].name, DType::F64, params_[i].tensor.shape(), v_[i]});
  }
  return out;
}

void Adam::load_state(const std::vector<ContainerEntry>& entries) {
  std::map<std::string, const ContainerEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto fetch = [&](const std::string& name, std::size_t size) -> const std::vector<Scalar>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint has no optimizer entry " + name);
    if (it->second->values.size() != size) throw FormatError("optimizer entry " + name + " has the wrong size");
    return it->second->values;
  };
  const auto step = fetch("optim.step", 1)[0];
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = fetch("optim.m." + params_[i].name, m_[i].size());
    v_[i] = fetch("optim.v." + params_[i].name, v_[i].size());
  }
  step_ = static_cast<std::uint64_t>(step);
}

// ---------------------------------------------------------------------------
// Losses

double joint_loss(double l_ctc, double l_att, double lambda) {
  if (!std::isfinite(l_ctc)) throw NumericError("joint_loss: CTC loss is not finite");
  if (!std::isfinite(l_att)) throw NumericError("joint_loss: attention loss is not finite");
  return lambda * l_ctc + (1.0 - lambda) * l_att;
}

Tensor joint_loss(const Tensor& l_ctc, const Tensor& l_att, double lambda) {
  joint_loss(l_ctc.item(), l_att.item(), lambda);
  return add(scale(l_ctc, lambda), scale(l_att, 1.0 - lambda));
}

Tensor label_smoothed_ce(const Tensor& logits, const TokenSequence& target, const std::vector<std::uint8_t>& mask,
                         double epsilon) {
  const std::size_t rows = logits.rows(), classes = logits.cols();
  if (target.size() != rows || mask.size() != rows) {
    throw DimensionError("label_smoothed_ce: " + std::to_string(rows) + " positions but " +
                         std::to_string(target.size()) + " targets and " + std::to_string(mask.size()) + " mask entries");
  }
  if (classes < 2) throw DimensionError("label_smoothed_ce: need at least two classes");
  const double off = epsilon / static_cast<double>(classes - 1);
  std::vector<Scalar> weights(rows * classes, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!mask[i]) continue;
    const auto label = static_cast<std::size_t>(target[i]);
    if (label >= classes) throw std::out_of_range("label_smoothed_ce: target id out of range");
    for (std::size_t k = 0; k < classes; ++k) weights[i * classes + k] = -(k == label ? 1.0 - epsilon : off);
  }
  return weighted_sum(log_softmax(logits, 1), weights);
}

// ---------------------------------------------------------------------------
// Decoder inputs

void PathwayCounts::add(Pathway p) {
  switch (p) {
    case Pathway::Fuse: ++fuse; break;
    case Pathway::CtcAsInput: ++ctc_as_input; break;
    case Pathway::GroundTruthOnly: ++ground_truth_only; break;
  }
}

DecoderInput build_decoder_input(const Model& model, const TokenSequence& y, const CtcPosterior& posterior,
                                 const TrainConfig& config, ForwardContext& ctx, bool ctc_reachable) {
  DecoderInput out;
  auto teacher_forcing = [&] {
    out.truth_tokens = with_sos(y);
    out.embeddings = model.embed_tokens(out.truth_tokens);
    out.target = with_eos(y);
    out.loss_mask.assign(out.target.size(), 1);
    out.pathway = Pathway::GroundTruthOnly;
    return out;
  };
  const auto& fusion = config.fusion;

  if (fusion.method == Method::NE) {
    const auto nbest = prefix_beam_nbest(posterior, static_cast<std::size_t>(fusion.beam_width),
                                         static_cast<std::size_t>(fusion.n));
    out.ne_memory = model.ne_memory(nbest, ctx);
    return teacher_forcing();
  }
  if (fusion.method == Method::Baseline || !ctc_reachable || y.empty()) return teacher_forcing();

  const TokenSequence w = greedy_1best(posterior);
  const Pathway decision = gate(w.size(), y.size(), config.gating);
  if (decision == Pathway::GroundTruthOnly) return teacher_forcing();

  if (fusion.method == Method::AEF && (config.aef_align_before_gate || decision == Pathway::Fuse)) {
    const AlignedPair aligned = aef_align(y, w);
    out.truth_tokens = with_sos(aligned.y_align);
    out.ctc_tokens = with_sos(aligned.w_align);
    out.embeddings = fuse_embeddings(model.embed_tokens(out.truth_tokens), model.embed_tokens(out.ctc_tokens),
                                     fusion.alpha);
    out.target = with_eos(aligned.y_align);
    for (int t : out.target) out.loss_mask.push_back(t == Vocabulary::kBlank ? 0 : 1);
    out.blanks_inserted = aligned.blanks_inserted;
    out.pathway = Pathway::Fuse;
    return out;
  }

  out.truth_tokens = with_sos(y);
  out.target = with_eos(y);
  out.loss_mask.assign(out.target.size(), 1);
  if (decision == Pathway::Fuse) {
    out.ctc_tokens = with_sos(w);
    out.embeddings = fuse_embeddings(model.embed_tokens(out.truth_tokens), model.embed_tokens(out.ctc_tokens),
                                     fusion.alpha);
  } else {
    TokenSequence fitted(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(std::min(w.size(), y.size())));
    fitted.resize(y.size(), Vocabulary::kEos);
    out.ctc_tokens = with_sos(fitted);
    out.embeddings = model.embed_tokens(out.ctc_tokens);
  }
  out.pathway = decision;
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(Model& model, const std::vector<Utterance>& corpus, TrainConfig config)
    : model_(model), corpus_(corpus), config_(std::move(config)), optimizer_(model.parameters(), config_.optimizer) {
  config_.validate();
  if (corpus_.empty()) throw DataError("training corpus is empty");
  const bool ne = config_.fusion.method == Method::NE;
  if (ne && !model_.has_ne()) throw std::invalid_argument("NE training needs a model built with ne_nbest > 0");
  if (!ne && model_.has_ne()) throw std::invalid_argument("model has an NE module but the method is not NE");
  if (ne && model_.config().ne_nbest != config_.fusion.n) {
    throw std::invalid_argument("fusion n (" + std::to_string(config_.fusion.n) + ") differs from model ne_nbest (" +
                                std::to_string(model_.config().ne_nbest) + ")");
  }
}

Tensor Trainer::batch_loss(const Batch& batch, std::uint64_t step, StepResult& stats) {
  std::vector<Tensor> ctc_terms, att_terms;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TokenSequence y(batch.targets[k].begin(),
                          batch.targets[k].begin() + static_cast<std::ptrdiff_t>(batch.target_lengths[k]));
    ForwardContext ctx = ForwardContext::training(mix_seed(config_.seed, step, k));
    Pathway pathway = Pathway::GroundTruthOnly;
    try {
      const EncoderOutput enc = model_.encode(batch.features[k], batch.feature_lengths[k], ctx);
      const Tensor log_probs = model_.ctc_head(enc);
      const CtcPosterior posterior = CtcPosterior::from_tensor(log_probs);
      auto ctc = ctc_loss(log_probs, y);
      if (ctc) {
        ctc_terms.push_back(*ctc);
      } else {
        ++stats.ctc_unreachable;
      }
      DecoderInput input = build_decoder_input(model_, y, posterior, config_, ctx, ctc.has_value());
      pathway = input.pathway;
      const Tensor* ne = input.ne_memory ? &*input.ne_memory : nullptr;
      const Tensor logits = model_.decoder_forward(input.embeddings, enc, ne, ctx);
      att_terms.push_back(label_smoothed_ce(logits, input.target, input.loss_mask, config_.label_smoothing));
      stats.pathways.add(input.pathway);
      stats.blanks_inserted += input.blanks_inserted;
    } catch (const NumericError& e) {
      throw TrainingError("step " + std::to_string(step) + " utterance " + batch.ids[k] + " pathway " +
                          pathway_name(pathway) + ": " + e.what());
    }
  }
  stats.utterances += batch.size();
  stats.ctc_utterances += ctc_terms.size();

  const Tensor att = scale(sum_all(att_terms), 1.0 / static_cast<double>(att_terms.size()));
  const Tensor ctc = ctc_terms.empty() ? Tensor::scalar(0.0)
                                       : scale(sum_all(ctc_terms), 1.0 / static_cast<double>(ctc_terms.size()));
  stats.att_loss = att.item();
  stats.ctc_loss = ctc.item();
  try {
    const Tensor loss = joint_loss(ctc, att, config_.ctc_weight);
    stats.loss = loss.item();
    return loss;
  } catch (const NumericError& e) {
    throw TrainingError("step " + std::to_string(step) + " batch starting at " + batch.ids.front() + ": " + e.what());
  }
}

StepResult Trainer::train_step(const Batch& batch) {
  StepResult stats;
  const std::uint64_t step = optimizer_.steps() + 1;
  Tensor loss = batch_loss(batch, step, stats);
  loss.backward();
  stats.learning_rate = learning_rate(config_.optimizer, step);
  stats.grad_norm = optimizer_.step();
  return stats;
}

std::vector<Batch> Trainer::epoch_batches(int epoch) const {
  return make_batches(corpus_, config_.batch_size, BatchPolicy::Shuffle,
                      mix_seed(config_.seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
}

EpochMetrics Trainer::train_epoch(int epoch) {
  const auto started = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch;
  double loss_sum = 0.0, ctc_sum = 0.0, att_sum = 0.0;
  const auto batches = epoch_batches(epoch);
  for (const auto& batch : batches) {
    const StepResult r = train_step(batch);
    loss_sum += r.loss;
    ctc_sum += r.ctc_loss * static_cast<double>(r.ctc_utterances);
    att_sum += r.att_loss * static_cast<double>(r.utterances);
    m.blanks_inserted += r.blanks_inserted;
    m.pathways.fuse += r.pathways.fuse;
    m.pathways.ctc_as_input += r.pathways.ctc_as_input;
    m.pathways.ground_truth_only += r.pathways.ground_truth_only;
    m.utterances += r.utterances;
    m.ctc_unreachable += r.ctc_unreachable;
    m.learning_rate = r.learning_rate;
  }
  const std::size_t reachable = m.utterances - m.ctc_unreachable;
  m.loss = loss_sum / static_cast<double>(batches.size());
  m.ctc_loss = reachable ? ctc_sum / static_cast<double>(reachable) : 0.0;
  m.att_loss = att_sum / static_cast<double>(m.utterances);
  m.steps = optimizer_.steps();
  if (config_.track_train_cer) {
    m.train_cer = corpus_attention_cer(model_, corpus_);
    m.ctc_cer = corpus_ctc_cer(model_, corpus_);
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return m;
}

std::vector<EpochMetrics> Trainer::fit(const EpochCallback& on_epoch) {
  std::vector<EpochMetrics> history;
  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    history.push_back(train_epoch(epoch));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

double corpus_ctc_cer(const Model& model, const std::vector<Utterance>& corpus) {
  NoGradGuard guard;
  ErrorTotals totals;
  for (const auto& u : corpus) {
    ForwardContext ctx = ForwardContext::inference();
    const auto posterior = CtcPosterior::from_tensor(model.ctc_head(model.encode(u.features, ctx)));
    totals.add(edit_distance(u.transcript, greedy_1best(posterior)), u.transcript.size());
  }
  return totals.rate();
}

double corpus_attention_cer(const Model& model, const std::vector<Utterance>& corpus) {
  DecodeConfig greedy;
  greedy.beam = 1;
  return evaluate(corpus, model_decoder(model, greedy)).corpus_cer();
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss"] = m.loss;
  j["ctc_loss"] = m.ctc_loss;
  j["att_loss"] = m.att_loss;
  j["blanks_inserted"] = m.blanks_inserted;
  j["fuse"] = m.pathways.fuse;
  j["ctc_as_input"] = m.pathways.ctc_as_input;
  j["ground_truth_only"] = m.pathways.ground_truth_only;
  j["utterances"] = m.utterances;
  j["ctc_unreachable"] = m.ctc_unreachable;
  j["steps"] = m.steps;
  j["learning_rate"] = m.learning_rate;
  j["train_cer"] = m.train_cer ? nlohmann::ordered_json(*m.train_cer) : nlohmann::ordered_json(nullptr);
  j["ctc_cer"] = m.ctc_cer ? nlohmann::ordered_json(*m.ctc_cer) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

EpochMetrics parse_metrics_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.loss = j.at("loss").get<double>();
  m.ctc_loss = j.at("ctc_loss").get<double>();
  m.att_loss = j.at("att_loss").get<double>();
  m.blanks_inserted = j.at("blanks_inserted").get<std::size_t>();
  m.pathways.fuse = j.at("fuse").get<std::size_t>();
  m.pathways.ctc_as_input = j.at("ctc_as_input").get<std::size_t>();
  m.pathways.ground_truth_only = j.at("ground_truth_only").get<std::size_t>();
  m.utterances = j.at("utterances").get<std::size_t>();
  m.ctc_unreachable = j.at("ctc_unreachable").get<std::size_t>();
  m.steps = j.at("steps").get<std::uint64_t>();
  m.learning_rate = j.at("learning_rate").get<double>();
  if (!j.at("train_cer").is_null()) m.train_cer = j.at("train_cer").get<double>();
  if (!j.at("ctc_cer").is_null()) m.ctc_cer = j.at("ctc_cer").get<double>();
  return m;
}

std::string metrics_log_line(const EpochMetrics& m) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << "epoch " << m.epoch << " loss " << m.loss << " ctc " << m.ctc_loss
      << " att " << m.att_loss << " blanks " << m.blanks_inserted << " fuse/ctc/gt " << m.pathways.fuse << '/'
      << m.pathways.ctc_as_input << '/' << m.pathways.ground_truth_only;
  if (m.train_cer) out << " cer " << *m.train_cer;
  if (m.ctc_cer) out << " ctc_cer " << *m.ctc_cer;
  out << std::setprecision(1) << " (" << m.wall_seconds << "s)";
  return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

const ContainerEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optimizer,
                     const CheckpointMeta& meta) {
  std::vector<ContainerEntry> entries;
  for (const auto& p : model.parameters()) {
    const auto d = p.tensor.data();
    entries.push_back({p.name, DType::F64, p.tensor.shape(), std::vector<Scalar>(d.begin(), d.end())});
  }
  if (optimizer) {
    auto state = optimizer->state_entries();
    entries.insert(entries.end(), state.begin(), state.end());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_container(path, entries);

  nlohmann::ordered_json side;
  side["format"] = "letr-checkpoint";
  side["version"] = 1;
  side["method"] = method_name(meta.method);
  side["vocab_hash"] = meta.vocab_hash;
  side["model"] = nlohmann::json(meta.model);
  std::ofstream out(path.string() + ".json", std::ios::binary);
  out << side.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string() + ".json");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck;
  ck.entries = read_container(path);
  const std::string side_path = path.string() + ".json";
  std::ifstream in(side_path, std::ios::binary);
  if (!in) throw FormatError(side_path + ": missing checkpoint sidecar");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side_path + ": " + e.what());
  }
  if (side.value("format", "") != "letr-checkpoint") throw FormatError(side_path + ": not a checkpoint sidecar");
  if (side.value("version", 0) != 1) {
    throw FormatError(side_path + ": unsupported sidecar version " + side.value("version", nlohmann::json()).dump());
  }
  try {
    ck.meta.method = parse_method(side.at("method").get<std::string>());
    ck.meta.vocab_hash = side.at("vocab_hash").get<std::uint64_t>();
    ck.meta.model = side.at("model").get<ModelConfig>();
  } catch (const std::exception& e) {
    throw FormatError(side_path + ": " + e.what());
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  Model model(checkpoint.meta.model, 0);
  for (const auto& p : model.parameters()) {
    const auto* e = checkpoint.find(p.name);
    if (!e) throw FormatError("checkpoint has no entry " + p.name);
    if (e->shape != p.tensor.shape()) throw DimensionError("checkpoint entry " + p.name + " has the wrong shape");
    auto dst = model.parameter(p.name).mutable_data();
    std::copy(e->values.begin(), e->values.end(), dst.begin());
  }
  return model;
}

void restore_optimizer(Adam& optimizer, const Checkpoint& checkpoint) { optimizer.load_state(checkpoint.entries); }

void init_from_pretrained(Model& model, const Checkpoint& checkpoint, PretrainSelection selection,
                          std::optional<std::uint64_t> vocab_hash) {
  if (selection == PretrainSelection::None) return;
  if (vocab_hash && *vocab_hash != checkpoint.meta.vocab_hash) {
    throw std::invalid_argument("pretrained checkpoint was built for a different vocabulary");
  }
  std::vector<std::string> prefixes = {"encoder.", "ctc_head."};
  if (selection == PretrainSelection::EncoderDecoder) {
    prefixes.push_back("decoder.");
    prefixes.push_back("embed.");
  }
  auto selected = [&](const std::string& name) {
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  };

  std::vector<std::pair<const NamedTensor*, const ContainerEntry*>> plan;
  std::vector<std::string> problems;
  for (const auto& p : model.parameters()) {
    if (!selected(p.name)) continue;
    const auto* e = checkpoint.find(p.name);
    if (!e) {
      problems.push_back(p.name + " (missing)");
    } else if (e->shape != p.tensor.shape()) {
      problems.push_back(p.name + " (checkpoint " + shape_string(e->shape) + ", model " +
                         shape_string(p.tensor.shape()) + ")");
    } else {
      plan.emplace_back(&p, e);
    }
  }
  if (!problems.empty()) {
    std::string msg = "pretrained checkpoint does not match the model:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw DimensionError(msg);
  }
  for (auto [param, entry] : plan) {
    auto dst = model.parameter(param->name).mutable_data();
    std::copy(entry->values.begin(), entry->values.end(), dst.begin());
  }
}

}  // namespace letr
