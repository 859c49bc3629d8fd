#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mbfte/adversary.hpp"
#include "mbfte/codec.hpp"
#include "mbfte/error.hpp"
#include "mbfte/record.hpp"

namespace py = pybind11;
using namespace mbfte;

namespace {

py::bytes as_py(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes as_cpp(const py::bytes& b) { return to_bytes(std::string(b)); }

CodecContext toy_context(std::size_t top_k, double top_p, double temperature) {
  SamplingConfig c;
  c.top_k = top_k;
  c.top_p = top_p;
  c.temperature = temperature;
  return CodecContext(ModelFormat::toy(), c);
}

}  // namespace

PYBIND11_MODULE(_mbfte, m) {
  m.doc() = "Covert messaging over model-sampled text (toy model bindings)";

  py::register_exception<Error>(m, "MbfteError");

  py::class_<KeyBundle>(m, "KeyBundle")
      .def_property_readonly("k1", [](const KeyBundle& k) { return as_py(Bytes(k.k1.begin(), k.k1.end())); })
      .def_property_readonly("k2", [](const KeyBundle& k) { return as_py(Bytes(k.k2.begin(), k.k2.end())); })
      .def_property_readonly("k3", [](const KeyBundle& k) { return as_py(Bytes(k.k3.begin(), k.k3.end())); })
      .def_readwrite("counter", &KeyBundle::counter)
      .def_readwrite("tweak_range", &KeyBundle::tweak_range)
      .def("serialize", [](const KeyBundle& k) { return as_py(serialize_keys(k)); })
      .def_static("parse", [](const py::bytes& b) { return parse_keys(as_cpp(b)); });

  m.def("keygen_from_phrase", &keygen_from_phrase, py::arg("phrase"), py::arg("tweak_range") = 10);
  m.def(
      "keygen_random",
      [](std::uint8_t tweak_range) {
        crypto::SystemRandom rng;
        return keygen_random(rng, tweak_range);
      },
      py::arg("tweak_range") = 10);

  m.def(
      "send",
      [](const py::bytes& message, const KeyBundle& keys, std::uint64_t seed, unsigned tweaks,
         std::vector<std::string> signals) {
        CodecContext ctx(ModelFormat::toy());
        crypto::SeededRandom rng(seed);
        SenderOptions o;
        o.tweak_candidates = tweaks;
        o.signals = std::move(signals);
        return send(as_cpp(message), keys, ctx, o, rng).posts;
      },
      py::arg("message"), py::arg("keys"), py::arg("seed") = 0, py::arg("tweaks") = 1,
      py::arg("signals") = std::vector<std::string>{},
      "Covertext posts for one message under keys.counter on the toy model. Does not advance the counter.");

  m.def(
      "receive",
      [](const std::string& post, const KeyBundle& keys, std::vector<std::string> signals) {
        CodecContext ctx(ModelFormat::toy());
        ReceiverOptions o;
        o.signals = std::move(signals);
        return as_py(receive(post, keys, ctx, o));
      },
      py::arg("post"), py::arg("keys"), py::arg("signals") = std::vector<std::string>{});

  m.def(
      "distribution",
      [](const std::string& seed, std::size_t top_k, double top_p, double temperature) {
        auto ctx = toy_context(top_k, top_p, temperature);
        auto d = next_distribution(ctx.format, ctx.config, seed);
        std::vector<std::pair<std::string, std::uint32_t>> out;
        for (const auto& e : d.entries()) out.emplace_back(ctx.format.token(e.token), e.frequency);
        return out;
      },
      py::arg("seed") = "", py::arg("top_k") = 0, py::arg("top_p") = 1.0, py::arg("temperature") = 0.9,
      "Quantized toy distribution at a seed as (token, frequency) pairs.");

  m.def(
      "decodable",
      [](const std::string& text, std::size_t top_k, double top_p, double temperature) {
        return decoding_attack(text, toy_context(top_k, top_p, temperature)).decodable;
      },
      py::arg("text"), py::arg("top_k") = 0, py::arg("top_p") = 1.0, py::arg("temperature") = 0.9);

  m.def("bayes_posterior", &bayes_posterior, py::arg("base_rate"), py::arg("tpr"), py::arg("fpr"));
  m.def(
      "outcome_table",
      [](std::uint64_t population, double base_rate, double tpr, double fpr) {
        auto o = outcome_table(population, base_rate, tpr, fpr);
        py::dict d;
        d["actual_positives"] = o.actual_positives;
        d["flagged"] = o.flagged;
        d["false_alarms"] = o.false_alarms;
        d["missed"] = o.missed;
        d["true_flags"] = o.true_flags;
        d["posterior"] = o.posterior;
        return d;
      },
      py::arg("population"), py::arg("base_rate"), py::arg("tpr"), py::arg("fpr"));
  m.def(
      "bit_entropy", [](const py::bytes& b) { return bit_entropy(as_cpp(b)); }, py::arg("data"));
}
