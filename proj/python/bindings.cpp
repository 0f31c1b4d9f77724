#include <memory>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "csteer/dataset.hpp"
#include "csteer/error.hpp"
#include "csteer/harness.hpp"
#include "csteer/model.hpp"
#include "csteer/train.hpp"
#include "csteer/vectoring.hpp"

namespace py = pybind11;
using namespace csteer;

namespace {

std::vector<BandConfig> bands_from_str(const std::string& plan_json,
                                       const std::map<std::string, std::shared_ptr<ContextualVector>>& vectors) {
  if (plan_json.empty()) return {};
  return bands_from_json(nlohmann::json::parse(plan_json), [&](const std::string& ref) {
    const auto it = vectors.find(ref);
    if (it == vectors.end()) throw ConfigError("plan references unknown vector '" + ref + "'");
    return std::shared_ptr<const ContextualVector>(it->second);
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contextual latent steering on a toy transformer";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<MismatchError>(m, "MismatchError", PyExc_ValueError);

  m.def("tokenize", &vocab::tokenize, py::arg("text"));
  m.def("detokenize", [](const Tokens& t) { return vocab::detokenize(t); }, py::arg("tokens"));
  m.def("vocab_size", &vocab::size);

  py::enum_<QuestionKind>(m, "QuestionKind").value("MC", QuestionKind::kMC).value("OE", QuestionKind::kOE);
  py::enum_<Variant>(m, "Variant")
      .value("REFERRED", Variant::kReferred)
      .value("UNREFERRED", Variant::kUnreferred)
      .value("SHUFFLED", Variant::kShuffled);
  py::enum_<VectorDesign>(m, "VectorDesign")
      .value("REFER_VS_NO_REFER", VectorDesign::kReferVsNoRefer)
      .value("MATCH_VS_SHUFFLE", VectorDesign::kMatchVsShuffle)
      .value("GT_VS_ROLLOUT", VectorDesign::kGtVsRollout)
      .value("REWRITE_VS_ROLLOUT", VectorDesign::kRewriteVsRollout);

  py::class_<SceneParams>(m, "SceneParams")
      .def(py::init<>())
      .def_readwrite("min_objects", &SceneParams::min_objects)
      .def_readwrite("max_objects", &SceneParams::max_objects)
      .def_readwrite("frame_count", &SceneParams::frame_count)
      .def_readwrite("relation_prob", &SceneParams::relation_prob);

  py::class_<JudgedRollout>(m, "JudgedRollout")
      .def_readonly("response", &JudgedRollout::response)
      .def_property_readonly("score", [](const JudgedRollout& r) { return r.score.value(); })
      .def_readonly("kept_as_negative", &JudgedRollout::kept_as_negative);

  py::class_<ReferringExample>(m, "ReferringExample")
      .def_readonly("context", &ReferringExample::context)
      .def_readonly("ground_truth", &ReferringExample::ground_truth)
      .def_readonly("query_begin", &ReferringExample::query_begin)
      .def_readonly("query_end", &ReferringExample::query_end)
      .def_readonly("marker_positions_in_query", &ReferringExample::marker_positions_in_query)
      .def_readonly("kind", &ReferringExample::kind)
      .def_readonly("variant", &ReferringExample::variant)
      .def("text", [](const ReferringExample& e) { return vocab::detokenize(e.context); })
      .def("judge", [](const ReferringExample& e, const Tokens& response) { return judge_score(e, response).value(); },
           py::arg("response"))
      .def("rewrite", &rewrite_response, py::arg("response"));

  m.def(
      "make_example",
      [](std::uint64_t seed, QuestionKind kind, Variant variant, const SceneParams& params) {
        return render_example(sample_scene(seed, params), variant, kind, seed);
      },
      py::arg("seed"), py::arg("kind") = QuestionKind::kMC, py::arg("variant") = Variant::kReferred,
      py::arg("params") = SceneParams{});

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("hidden_size", &ModelConfig::hidden_size)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_seq_len", &ModelConfig::max_seq_len)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<GenerationTrace>(m, "GenerationTrace")
      .def_readonly("tokens", &GenerationTrace::tokens)
      .def_readonly("logprobs", &GenerationTrace::logprobs)
      .def_property_readonly("interventions", [](const GenerationTrace& t) {
        py::list out;
        for (const auto& r : t.per_step_interventions) out.append(py::make_tuple(r.step, r.position, r.layer, r.scale));
        return out;
      });

  py::class_<ContextualVector, std::shared_ptr<ContextualVector>>(m, "ContextualVector")
      .def_readonly("deltas", &ContextualVector::deltas)
      .def_readonly("sample_count", &ContextualVector::sample_count)
      .def_readonly("design", &ContextualVector::design)
      .def("save", [](const ContextualVector& v, const std::filesystem::path& p) { save_vector(v, p); })
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<ContextualVector>(load_vector(p)); });

  py::class_<Model>(m, "Model")
      .def(py::init<ModelConfig>(), py::arg("config"))
      .def_property_readonly("config", &Model::config)
      .def("checksum", &Model::checksum)
      .def("save", [](const Model& model, const std::filesystem::path& p) { save_checkpoint(model, p); })
      .def_static("load", &load_checkpoint)
      .def(
          "forward_teacher_forced",
          [](const Model& model, const Tokens& tokens, const std::vector<std::size_t>& taps) {
            return model.forward_teacher_forced(tokens, taps).per_layer;
          },
          py::arg("tokens"), py::arg("tapped_positions"))
      .def(
          "generate",
          [](const Model& model, const ReferringExample& ex, float temperature, int max_new_tokens,
             std::uint64_t seed, const std::string& plan_json,
             const std::map<std::string, std::shared_ptr<ContextualVector>>& vectors) {
            DecodeParams dp{temperature, max_new_tokens > 0 ? max_new_tokens : answer_budget(ex), seed};
            const auto bands = bands_from_str(plan_json, vectors);
            if (bands.empty()) return model.generate(ex.context, dp);
            const auto plan = compile_plan(bands, ex.context, {ex.query_begin, ex.query_end},
                                           default_marker_vocabulary(), model.config().num_layers);
            return model.generate(ex.context, dp, &plan);
          },
          py::arg("example"), py::arg("temperature") = 0.0f, py::arg("max_new_tokens") = 0, py::arg("seed") = 0,
          py::arg("plan_json") = "", py::arg("vectors") = std::map<std::string, std::shared_ptr<ContextualVector>>{},
          py::call_guard<py::gil_scoped_release>());

  m.def(
      "train",
      [](Model& model, const std::vector<ReferringExample>& examples, int epochs, int batch_size,
         float learning_rate, std::uint64_t seed) {
        TrainParams tp;
        tp.epochs = epochs;
        tp.batch_size = batch_size;
        tp.learning_rate = learning_rate;
        tp.seed = seed;
        const auto r = train_substrate(model, training_sequences(examples), tp);
        return py::make_tuple(r.initial_heldout_loss, r.final_heldout_loss);
      },
      py::arg("model"), py::arg("examples"), py::arg("epochs") = 14, py::arg("batch_size") = 32,
      py::arg("learning_rate") = 1e-3f, py::arg("seed") = 0);

  m.def(
      "sample_rollouts",
      [](const Model& model, const ReferringExample& ex, int n, float temperature, std::uint64_t seed, int max_new) {
        return sample_rollouts(model, ex, n, temperature, seed, max_new);
      },
      py::arg("model"), py::arg("example"), py::arg("n") = 8,
        py::arg("temperature") = 1.0f, py::arg("seed") = 0, py::arg("max_new_tokens") = 0);

  m.def(
      "build_vector",
      [](const Model& model, VectorDesign design, const std::vector<ReferringExample>& examples,
         const std::vector<std::vector<JudgedRollout>>& rollouts, std::uint64_t seed) {
        if (!rollouts.empty() && rollouts.size() != examples.size()) {
          throw ConfigError("rollouts must be given per example");
        }
        std::vector<ContrastPair> pairs;
        for (std::size_t i = 0; i < examples.size(); ++i) {
          PairOptions po;
          po.seed = seed + i;
          const auto p = make_contrast_pairs(design, examples[i],
                                             rollouts.empty() ? std::span<const JudgedRollout>{} : rollouts[i], po);
          pairs.insert(pairs.end(), p.begin(), p.end());
        }
        return std::make_shared<ContextualVector>(build_contextual_vector(model, design, pairs));
      },
      py::arg("model"), py::arg("design"), py::arg("examples"),
      py::arg("rollouts") = std::vector<std::vector<JudgedRollout>>{}, py::arg("seed") = 0);

  m.def(
      "evaluate_synthetic",
      [](const Model& model, int count, QuestionKind kind, std::uint64_t seed, const std::string& plan_json,
         const std::map<std::string, std::shared_ptr<ContextualVector>>& vectors) {
        EvalSpec spec;
        spec.synthetic.count = count;
        spec.synthetic.kind = kind;
        spec.synthetic.seed = seed;
        spec.bands = bands_from_str(plan_json, vectors);
        return report_to_json(run_eval(model, spec), false).dump();
      },
      py::arg("model"), py::arg("count") = 100, py::arg("kind") = QuestionKind::kMC, py::arg("seed") = 0,
      py::arg("plan_json") = "", py::arg("vectors") = std::map<std::string, std::shared_ptr<ContextualVector>>{});

  m.def(
      "relative_attention",
      [](const Model& model, const Tokens& query, const Tokens& generic, int layer) {
        return relative_attention(model, query, generic, layer);
      },
      py::arg("model"), py::arg("tokens_query"), py::arg("tokens_generic"), py::arg("layer"));
}
