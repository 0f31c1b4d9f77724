// Command-line front end for the steering laboratory.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csteer/dataset.hpp"
#include "csteer/error.hpp"
#include "csteer/harness.hpp"
#include "csteer/model.hpp"
#include "csteer/rng.hpp"
#include "csteer/train.hpp"
#include "csteer/vectoring.hpp"

namespace fs = std::filesystem;
using namespace csteer;

namespace {

struct SceneOpts {
  int min_objects = 2;
  int max_objects = 3;
  int frames = 1;
  double relation_prob = 0.0;

  SceneParams params() const {
    SceneParams p;
    p.min_objects = min_objects;
    p.max_objects = max_objects;
    p.frame_count = frames;
    p.relation_prob = relation_prob;
    return p;
  }
};

void add_scene_options(CLI::App* cmd, SceneOpts& s) {
  cmd->add_option("--min-objects", s.min_objects, "Fewest objects per scene")->capture_default_str();
  cmd->add_option("--max-objects", s.max_objects, "Most objects per scene")->capture_default_str();
  cmd->add_option("--frames", s.frames, "Frames per scene; 1 is an image")->capture_default_str();
  cmd->add_option("--relation-prob", s.relation_prob, "Chance of a relation link per object")
      ->capture_default_str();
}

// Kind string "mix" makes every other example OE.
QuestionKind kind_for(const std::string& kind, int i) {
  if (kind == "mix") return i % 2 == 0 ? QuestionKind::kOE : QuestionKind::kMC;
  return parse_question_kind(kind);
}

std::vector<DatasetRecord> synth_records(int count, const std::string& kind, std::uint64_t seed,
                                         const SceneOpts& scene) {
  std::vector<DatasetRecord> out;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i));
    out.push_back({render_example(sample_scene(s, scene.params()), Variant::kReferred, kind_for(kind, i), s),
                   {},
                   {}});
  }
  return out;
}

std::vector<BandConfig> load_plan(const fs::path& path, const BackboneInfo& info) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::map<std::string, std::shared_ptr<const ContextualVector>> cache;
  const auto base = path.parent_path();
  return bands_from_json(j, [&](const std::string& ref) {
    auto& slot = cache[ref];
    if (!slot) {
      const fs::path p = fs::path(ref).is_absolute() ? fs::path(ref) : base / ref;
      slot = std::make_shared<const ContextualVector>(load_vector_for(p, info));
    }
    return slot;
  });
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

struct EvalOpts {
  std::string benchmark = "synthetic";
  std::string dataset;
  int count = 500;
  std::string kind = "MC";
  std::uint64_t seed = 1000;
  SceneOpts scene;
  float temperature = 0.0f;
  int max_new = 0;
  std::uint64_t decode_seed = 0;
  std::string judge = "rubric";
  std::string endpoint;
  std::string judge_model = "judge";
  int max_concurrent = 1;
  int max_attempts = 3;
  std::string transcript;
};

void add_eval_options(CLI::App* cmd, EvalOpts& o) {
  cmd->add_option("--benchmark", o.benchmark, "synthetic, GAR-MC, GAR-OE, INST-IT-image, INST-IT-video, VIP or BLINK")
      ->capture_default_str();
  cmd->add_option("--dataset", o.dataset, "JSON-lines file for external benchmarks");
  cmd->add_option("--count", o.count, "Synthetic evaluation examples")->capture_default_str();
  cmd->add_option("--kind", o.kind, "Synthetic question kind: MC or OE")->capture_default_str();
  cmd->add_option("--eval-seed", o.seed, "Seed of the synthetic evaluation split")->capture_default_str();
  add_scene_options(cmd, o.scene);
  cmd->add_option("--temperature", o.temperature, "Decode temperature; 0 is greedy")->capture_default_str();
  cmd->add_option("--max-new", o.max_new, "Decode budget; 0 picks one per example")->capture_default_str();
  cmd->add_option("--decode-seed", o.decode_seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--judge", o.judge, "rubric or remote")->capture_default_str();
  cmd->add_option("--endpoint", o.endpoint, "Chat-completions URL of the remote judge");
  cmd->add_option("--judge-model", o.judge_model, "Model name sent to the remote judge")->capture_default_str();
  cmd->add_option("--max-concurrent", o.max_concurrent, "Parallel remote judge requests")->capture_default_str();
  cmd->add_option("--max-attempts", o.max_attempts, "Attempts per remote judgement")->capture_default_str();
  cmd->add_option("--transcript", o.transcript, "Append remote judge exchanges to this file");
}

EvalSpec make_spec(const EvalOpts& o) {
  EvalSpec s;
  s.benchmark = parse_benchmark(o.benchmark);
  s.dataset_path = o.dataset;
  s.synthetic.count = o.count;
  s.synthetic.kind = parse_question_kind(o.kind);
  s.synthetic.seed = o.seed;
  s.synthetic.scene = o.scene.params();
  s.decode.temperature = o.temperature;
  s.decode.max_new_tokens = o.max_new;
  s.decode.seed = o.decode_seed;
  if (o.judge == "remote") {
    s.judge = JudgeKind::kRemote;
    RemoteJudgeConfig r;
    r.endpoint = o.endpoint;
    r.model = o.judge_model;
    r.credential = credential_from_env();
    r.max_concurrent = o.max_concurrent;
    r.max_attempts = o.max_attempts;
    r.transcript = o.transcript;
    s.remote = r;
  } else if (o.judge != "rubric") {
    throw ConfigError("judge must be rubric or remote, got '" + o.judge + "'");
  }
  return s;
}

void print_report(const EvalReport& r) {
  std::cout << r.label << (r.label.empty() ? "" : " ") << r.benchmark << " n=" << r.sample_count
            << " fingerprint=" << r.fingerprint << "\n";
  for (const auto& [k, s] : r.subsets) {
    std::cout << "  " << k << " " << s.score << " (" << s.count << " items";
    if (s.unscored) std::cout << ", " << s.unscored << " unscored";
    std::cout << ")\n";
  }
}

void print_curve(const Curve& c) {
  std::cout << c.name;
  if (c.has_baseline) std::cout << " baseline=" << c.baseline;
  std::cout << "\n";
  for (const auto& p : c.points) std::cout << "  " << c.x_label << "=" << p.x << " " << p.metric << "\n";
  std::cout << "  best " << c.x_label << "=" << c.argmax() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual latent steering laboratory"};
  app.set_config("--config", "", "TOML or INI file with option values");
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic referring examples");
  int synth_count = 1000;
  std::string synth_kind = "mix", synth_out;
  std::uint64_t synth_seed = 0;
  SceneOpts synth_scene;
  synth->add_option("--count", synth_count, "Examples to generate")->capture_default_str();
  synth->add_option("--kind", synth_kind, "MC, OE or mix")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generation seed")->capture_default_str();
  add_scene_options(synth, synth_scene);
  synth->add_option("--out", synth_out, "Dataset file to write")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the toy backbone on a dataset");
  std::string train_data, train_out;
  ModelConfig mcfg;
  TrainParams tparams;
  train->add_option("--data", train_data, "Dataset file")->required();
  train->add_option("--out", train_out, "Checkpoint to write")->required();
  train->add_option("--layers", mcfg.num_layers, "Transformer blocks")->capture_default_str();
  train->add_option("--hidden", mcfg.hidden_size, "Residual width")->capture_default_str();
  train->add_option("--heads", mcfg.num_heads, "Attention heads")->capture_default_str();
  train->add_option("--max-seq", mcfg.max_seq_len, "Context length")->capture_default_str();
  train->add_option("--model-seed", mcfg.seed, "Initialization seed")->capture_default_str();
  train->add_option("--epochs", tparams.epochs, "Passes over the training split")->capture_default_str();
  train->add_option("--batch", tparams.batch_size, "Sequences per step")->capture_default_str();
  train->add_option("--lr", tparams.learning_rate, "Peak learning rate")->capture_default_str();
  train->add_option("--warmup", tparams.warmup_steps, "Linear warmup steps")->capture_default_str();
  train->add_option("--weight-decay", tparams.weight_decay, "AdamW decay")->capture_default_str();
  train->add_option("--seed", tparams.seed, "Shuffle and split seed")->capture_default_str();

  // rollout
  auto* rollout = app.add_subcommand("rollout", "Sample, judge and rewrite rollouts for a dataset");
  std::string ro_model, ro_data, ro_out;
  int ro_n = 8;
  float ro_temp = 1.0f;
  std::uint64_t ro_seed = 0;
  rollout->add_option("--model", ro_model, "Checkpoint")->required();
  rollout->add_option("--data", ro_data, "Dataset file")->required();
  rollout->add_option("--out", ro_out, "Dataset file with rollouts")->required();
  rollout->add_option("-n,--samples", ro_n, "Rollouts per example")->capture_default_str();
  rollout->add_option("--temperature", ro_temp, "Sampling temperature")->capture_default_str();
  rollout->add_option("--seed", ro_seed, "Sampling seed")->capture_default_str();

  // vectorize
  auto* vectorize = app.add_subcommand("vectorize", "Build a contextual vector");
  std::string vz_model, vz_data, vz_out, vz_design = "RewriteVsRollout";
  int vz_examples = 256;
  bool vz_pool = false;
  std::uint64_t vz_seed = 0;
  vectorize->add_option("--model", vz_model, "Checkpoint")->required();
  vectorize->add_option("--data", vz_data, "Dataset file (with rollouts for rollout designs)")->required();
  vectorize->add_option("--out", vz_out, "Vector file to write")->required();
  vectorize->add_option("--design", vz_design, "Contrast design")->capture_default_str();
  vectorize->add_option("--examples", vz_examples, "Usable examples to include")->capture_default_str();
  vectorize->add_flag("--mean-pool", vz_pool, "Average over answer tokens");
  vectorize->add_option("--seed", vz_seed, "Corruption seed")->capture_default_str();

  // steer
  auto* steer = app.add_subcommand("steer", "Generate for one prompt with an optional plan");
  std::string st_model, st_plan, st_prompt;
  std::uint64_t st_example = 0;
  std::string st_kind = "OE";
  DecodeParams st_decode;
  steer->add_option("--model", st_model, "Checkpoint")->required();
  steer->add_option("--plan", st_plan, "Plan JSON");
  steer->add_option("--prompt", st_prompt, "Prompt text; defaults to a synthetic example");
  steer->add_option("--example-seed", st_example, "Seed of the synthetic example")->capture_default_str();
  steer->add_option("--kind", st_kind, "MC or OE")->capture_default_str();
  steer->add_option("--temperature", st_decode.temperature, "Decode temperature")->capture_default_str();
  steer->add_option("--max-new", st_decode.max_new_tokens, "Decode budget")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a backbone with an optional plan");
  std::string ev_model, ev_plan, ev_out, ev_label;
  EvalOpts ev_opts;
  eval->add_option("--model", ev_model, "Checkpoint")->required();
  eval->add_option("--plan", ev_plan, "Plan JSON");
  eval->add_option("--out", ev_out, "Report directory");
  eval->add_option("--label", ev_label, "Row label");
  add_eval_options(eval, ev_opts);

  // sweep-layers
  auto* sweep_layers = app.add_subcommand("sweep-layers", "Move one band across layers");
  std::string sl_model, sl_vector, sl_out, sl_layers, sl_selector = "LastTokenOnly", sl_fixed;
  float sl_lambda = 1.0f;
  EvalOpts sl_opts;
  sweep_layers->add_option("--model", sl_model, "Checkpoint")->required();
  sweep_layers->add_option("--vector", sl_vector, "Vector file")->required();
  sweep_layers->add_option("--layers", sl_layers, "Comma-separated layers; default all");
  sweep_layers->add_option("--selector", sl_selector, "Selector of the swept band")->capture_default_str();
  sweep_layers->add_option("--lambda", sl_lambda, "Steering strength")->capture_default_str();
  sweep_layers->add_option("--fixed-plan", sl_fixed, "Plan JSON kept in place during the sweep");
  sweep_layers->add_option("--out", sl_out, "Report directory");
  add_eval_options(sweep_layers, sl_opts);

  // sweep-data
  auto* sweep_data = app.add_subcommand("sweep-data", "Vary the number of vectoring examples");
  std::string sd_model, sd_data, sd_out, sd_scales = "32,64,128,256,512,1024",
                                        sd_design = "RewriteVsRollout", sd_plan;
  sweep_data->add_option("--model", sd_model, "Checkpoint")->required();
  sweep_data->add_option("--data", sd_data, "Pool dataset with rollouts")->required();
  sweep_data->add_option("--plan", sd_plan, "Band template JSON; its vectors are replaced")->required();
  sweep_data->add_option("--scales", sd_scales, "Comma-separated example counts")->capture_default_str();
  sweep_data->add_option("--design", sd_design, "Contrast design")->capture_default_str();
  sweep_data->add_option("--out", sd_out, "Report directory");
  EvalOpts sd_opts;
  add_eval_options(sweep_data, sd_opts);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Baseline, all-step, marker-only, in-query and decomposed rows");
  std::string ab_model, ab_vector, ab_out;
  int ab_decode = 3, ab_query = 0;
  float ab_lambda = 1.0f;
  EvalOpts ab_opts;
  ablate->add_option("--model", ab_model, "Checkpoint")->required();
  ablate->add_option("--vector", ab_vector, "Vector file")->required();
  ablate->add_option("--decode-layer", ab_decode, "Layer of decode-time steering")->capture_default_str();
  ablate->add_option("--query-layer", ab_query, "Layer of in-query steering")->capture_default_str();
  ablate->add_option("--lambda", ab_lambda, "Steering strength")->capture_default_str();
  ablate->add_option("--out", ab_out, "Report directory");
  add_eval_options(ablate, ab_opts);

  // report
  auto* report = app.add_subcommand("report", "Re-emit CSV/JSON/SVG from saved report documents");
  std::vector<std::string> rp_in;
  std::string rp_out, rp_stem = "report";
  report->add_option("inputs", rp_in, "JSON documents written by eval or a sweep")->required();
  report->add_option("--out", rp_out, "Output directory")->required();
  report->add_option("--stem", rp_stem, "File name stem")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      save_dataset(synth_records(synth_count, synth_kind, synth_seed, synth_scene), synth_out);
      std::cout << "wrote " << synth_count << " examples to " << synth_out << "\n";
    } else if (*train) {
      const auto records = load_dataset(train_data);
      std::vector<ReferringExample> examples;
      for (const auto& r : records) examples.push_back(r.example);
      Model model(mcfg);
      tparams.on_step = [](int step, int total, double loss) {
        if (step % 100 == 0 || step == total) std::cerr << "step " << step << "/" << total << " loss " << loss << "\n";
      };
      const auto rep = train_substrate(model, training_sequences(examples), tparams);
      save_checkpoint(model, train_out);
      std::cout << "held-out loss " << rep.initial_heldout_loss << " -> " << rep.final_heldout_loss << " after "
                << rep.steps << " steps; checksum " << model.info().checksum << "\n";
    } else if (*rollout) {
      const Model model = load_checkpoint(ro_model);
      auto records = load_dataset(ro_data);
      int kept = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        r.rollouts = sample_rollouts(model, r.example, ro_n, ro_temp, mix_seed(ro_seed, i));
        r.rewrites.clear();
        for (const auto& ro : r.rollouts) {
          if (!ro.kept_as_negative) continue;
          r.rewrites.push_back(rewrite_response(r.example, ro.response));
          ++kept;
        }
      }
      save_dataset(records, ro_out);
      std::cout << "kept " << kept << " negatives over " << records.size() << " examples\n";
    } else if (*vectorize) {
      const Model model = load_checkpoint(vz_model);
      const auto records = load_dataset(vz_data);
      const auto design = parse_design(vz_design);
      PairOptions po;
      po.seed = vz_seed;
      std::vector<ContrastPair> pairs;
      int used = 0;
      for (std::size_t i = 0; i < records.size() && used < vz_examples; ++i) {
        po.seed = mix_seed(vz_seed, i);
        auto p = make_contrast_pairs(design, records[i].example, records[i].rollouts, po);
        if (p.empty()) continue;
        ++used;
        pairs.insert(pairs.end(), p.begin(), p.end());
      }
      if (used < vz_examples) {
        std::cerr << "warning: only " << used << " usable examples (asked for " << vz_examples << ")\n";
      }
      VectorOptions vo;
      vo.mean_pool_answer = vz_pool;
      vo.dataset_id = fs::path(vz_data).filename().string();
      const auto v = build_contextual_vector(model, design, pairs, vo);
      save_vector(v, vz_out);
      std::cout << "wrote " << to_string(design) << " vector from " << v.sample_count << " pairs (" << used
                << " examples) to " << vz_out << "\n";
    } else if (*steer) {
      const Model model = load_checkpoint(st_model);
      const auto bands = st_plan.empty() ? std::vector<BandConfig>{} : load_plan(st_plan, model.info());
      Tokens prompt;
      QuerySpan query;
      if (st_prompt.empty()) {
        const auto ex = render_example(sample_scene(st_example, {}), Variant::kReferred,
                                       parse_question_kind(st_kind), st_example);
        prompt = ex.context;
        query = {ex.query_begin, ex.query_end};
      } else {
        prompt = vocab::tokenize(st_prompt);
        const auto q = std::find(prompt.begin(), prompt.end(), vocab::id("Q:"));
        const auto a = std::find(prompt.begin(), prompt.end(), vocab::id("Ans:"));
        if (q != prompt.end() && a != prompt.end() && q < a) {
          query = {static_cast<std::size_t>(q - prompt.begin()) + 1, static_cast<std::size_t>(a - prompt.begin())};
        }
      }
      std::optional<SteeringPlan> plan;
      if (!bands.empty()) {
        plan = compile_plan(bands, prompt, query, default_marker_vocabulary(), model.config().num_layers);
      }
      const auto trace = model.generate(prompt, st_decode, plan ? &*plan : nullptr);
      std::cout << vocab::detokenize(prompt) << "\n=> " << vocab::detokenize(trace.tokens) << "\n";
      std::cout << "interventions " << trace.per_step_interventions.size() << "\n";
    } else if (*eval) {
      const Model model = load_checkpoint(ev_model);
      auto spec = make_spec(ev_opts);
      if (!ev_plan.empty()) spec.bands = load_plan(ev_plan, model.info());
      spec.label = ev_label;
      const auto r = run_eval(model, spec);
      print_report(r);
      if (!ev_out.empty()) emit_report({r}, {}, ev_out, "eval");
    } else if (*sweep_layers) {
      const Model model = load_checkpoint(sl_model);
      auto spec = make_spec(sl_opts);
      auto v = std::make_shared<const ContextualVector>(load_vector_for(sl_vector, model.info()));
      std::vector<int> grid;
      if (sl_layers.empty()) {
        for (int l = 0; l < model.config().num_layers; ++l) grid.push_back(l);
      } else {
        grid = parse_int_list(sl_layers);
      }
      const BandConfig band{0, 1, sl_lambda, parse_selector(sl_selector), sl_vector, v};
      const auto fixed = sl_fixed.empty() ? std::vector<BandConfig>{} : load_plan(sl_fixed, model.info());
      const auto curve = layer_sweep(model, spec, band, grid, fixed);
      print_curve(curve);
      if (!sl_out.empty()) emit_report({}, {curve}, sl_out, "layer_sweep");
    } else if (*sweep_data) {
      const Model model = load_checkpoint(sd_model);
      const auto pool = load_dataset(sd_data);
      auto spec = make_spec(sd_opts);
      std::ifstream in(sd_plan);
      if (!in) throw ConfigError("cannot open plan '" + sd_plan + "'");
      const auto tmpl = bands_from_json(nlohmann::json::parse(in));
      const auto res = data_scale_sweep(model, parse_design(sd_design), parse_int_list(sd_scales), pool, spec, tmpl);
      print_curve(res.curve);
      if (!sd_out.empty()) emit_report({}, {res.curve}, sd_out, "data_sweep");
    } else if (*ablate) {
      const Model model = load_checkpoint(ab_model);
      auto spec = make_spec(ab_opts);
      auto v = std::make_shared<const ContextualVector>(load_vector_for(ab_vector, model.info()));
      const auto rows = steering_ablation(model, spec, v, ab_decode, ab_query, ab_lambda);
      for (const auto& r : rows) print_report(r);
      if (!ab_out.empty()) emit_report(rows, {}, ab_out, "ablation");
    } else if (*report) {
      std::vector<EvalReport> reports;
      std::vector<Curve> curves;
      for (const auto& p : rp_in) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open '" + p + "'");
        const auto j = nlohmann::json::parse(in);
        for (const auto& r : j.value("reports", nlohmann::json::array())) reports.push_back(report_from_json(r));
        for (const auto& c : j.value("curves", nlohmann::json::array())) curves.push_back(curve_from_json(c));
      }
      for (const auto& p : emit_report(reports, curves, rp_out, rp_stem)) std::cout << p.string() << "\n";
    }
  } catch (const AuthError& e) {
    std::cerr << "auth error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
