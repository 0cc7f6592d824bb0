#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "commands.hpp"
#include "letr/config.hpp"
#include "letr/training.hpp"

namespace py = pybind11;
using namespace letr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

CtcPosterior posterior_from(const Array& log_probs, int blank) {
  if (log_probs.ndim() != 2) throw std::invalid_argument("log_probs must be a [frames x classes] array");
  CtcPosterior p;
  p.frames = static_cast<std::size_t>(log_probs.shape(0));
  p.classes = static_cast<std::size_t>(log_probs.shape(1));
  p.blank = blank;
  p.log_probs.assign(log_probs.data(), log_probs.data() + log_probs.size());
  return p;
}

py::dict utterance_dict(const Utterance& u) {
  py::dict d;
  d["id"] = u.id;
  d["text"] = u.text;
  Array features({u.features.frames, u.features.dims});
  std::copy(u.features.values.begin(), u.features.values.end(), features.mutable_data());
  d["features"] = features;
  return d;
}

Pathway gate_py(std::size_t len_ctc, std::size_t len_gt, const std::string& mode, double threshold) {
  GatingConfig c;
  if (mode == "absolute") {
    c.mode = GateMode::Absolute;
    c.t_l = static_cast<int>(threshold);
  } else if (mode == "relative") {
    c.mode = GateMode::Relative;
    c.t_r = threshold;
  } else {
    throw std::invalid_argument("mode must be 'absolute' or 'relative'");
  }
  return gate(len_ctc, len_gt, c);
}

// Trains on the corpus named by the config (synthetic when no manifest is
// given) and returns one JSON metrics line per epoch.
std::vector<std::string> train_py(const std::string& config_json) {
  RunConfig config = parse_run_config(config_json);
  std::vector<Utterance> corpus = config.data.train_manifest.empty() ? synth_corpus(config.data.synth)
                                                                     : load_manifest(config.data.train_manifest);
  if (corpus.empty()) throw DataError("training corpus is empty");
  const Vocabulary vocab =
      config.data.vocab.empty() ? Vocabulary::build(transcripts_of(corpus)) : Vocabulary::load(config.data.vocab);
  tokenize_corpus(corpus, vocab);
  config.model.input_dim = static_cast<int>(corpus.front().features.dims);
  config.model.vocab_size = vocab.size();
  config.resolve();

  Model model(config.model, config.seed);
  Trainer trainer(model, corpus, config.train);
  std::vector<std::string> lines;
  py::gil_scoped_release release;
  for (const auto& m : trainer.fit()) lines.push_back(metrics_json_line(m));
  return lines;
}

py::tuple run_cli_py(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_letr, m) {
  m.doc() = "Joint CTC-attention speech recognition toolkit";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.attr("BLANK") = Vocabulary::kBlank;
  m.attr("UNK") = Vocabulary::kUnk;
  m.attr("SOS") = Vocabulary::kSos;
  m.attr("EOS") = Vocabulary::kEos;

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("build", &Vocabulary::build, py::arg("transcripts"))
      .def_static("from_tokens", &Vocabulary::from_tokens, py::arg("tokens"))
      .def_static("load", [](const std::string& path) { return Vocabulary::load(path); })
      .def("save", [](const Vocabulary& v, const std::string& path) { v.save(path); })
      .def("__len__", &Vocabulary::size)
      .def("id", &Vocabulary::id)
      .def("token", &Vocabulary::token)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("encode", [](const Vocabulary& v, const std::string& text) { return v.encode(text); })
      .def("decode", &Vocabulary::decode)
      .def("join", &Vocabulary::join)
      .def("hash", &Vocabulary::hash);

  m.def(
      "ctc_loss",
      [](const Array& log_probs, const TokenSequence& target, int blank) -> py::object {
        const auto r = ctc_loss(posterior_from(log_probs, blank), target);
        if (!r.reachable) return py::none();
        Array grad({log_probs.shape(0), log_probs.shape(1)});
        std::copy(r.grad.begin(), r.grad.end(), grad.mutable_data());
        return py::make_tuple(r.loss, grad);
      },
      py::arg("log_probs"), py::arg("target"), py::arg("blank") = Vocabulary::kBlank,
      "Negative log-likelihood and its gradient w.r.t. log_probs, or None when unreachable.");
  m.def(
      "greedy_1best", [](const Array& log_probs, int blank) { return greedy_1best(posterior_from(log_probs, blank)); },
      py::arg("log_probs"), py::arg("blank") = Vocabulary::kBlank);
  m.def(
      "prefix_beam_nbest",
      [](const Array& log_probs, std::size_t beam, std::size_t n, int blank) {
        std::vector<std::pair<TokenSequence, double>> out;
        for (auto& h : prefix_beam_nbest(posterior_from(log_probs, blank), beam, n).hypotheses)
          out.emplace_back(std::move(h.tokens), h.log_score);
        return out;
      },
      py::arg("log_probs"), py::arg("beam"), py::arg("n"), py::arg("blank") = Vocabulary::kBlank);
  m.def(
      "collapse", [](const TokenSequence& path, int blank) { return collapse(path, blank); }, py::arg("path"),
      py::arg("blank") = Vocabulary::kBlank);

  m.def(
      "aef_align",
      [](const TokenSequence& y, const TokenSequence& w, int blank) {
        auto r = aef_align(y, w, blank);
        return py::make_tuple(r.y_align, r.w_align, r.blanks_inserted);
      },
      py::arg("y"), py::arg("w"), py::arg("blank") = Vocabulary::kBlank,
      "Returns (y_align, w_align, blanks_inserted).");
  m.def(
      "edit_distance", [](const TokenSequence& ref, const TokenSequence& hyp) { return edit_distance(ref, hyp).cost; },
      py::arg("ref"), py::arg("hyp"));
  m.def(
      "cer", [](const TokenSequence& ref, const TokenSequence& hyp) { return cer(ref, hyp); }, py::arg("ref"),
      py::arg("hyp"));
  m.def(
      "gate",
      [](std::size_t len_ctc, std::size_t len_gt, const std::string& mode, double threshold) {
        return std::string(pathway_name(gate_py(len_ctc, len_gt, mode, threshold)));
      },
      py::arg("len_ctc"), py::arg("len_gt"), py::arg("mode"), py::arg("threshold"));

  m.def(
      "synth_corpus",
      [](const std::string& config_json) {
        RunConfig c = parse_run_config(config_json);
        py::list out;
        for (const auto& u : synth_corpus(c.data.synth)) out.append(utterance_dict(u));
        return out;
      },
      py::arg("config_json"));
  m.def("train", &train_py, py::arg("config_json"));
  m.def("run_cli", &run_cli_py, py::arg("args"), "Runs a command-line invocation; returns (code, stdout, stderr).");
}
