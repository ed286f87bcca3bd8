#include "spinlab/presets.hpp"

#include "spinlab/generation.hpp"
#include "spinlab/perturbation.hpp"
#include "spinlab/text_io.hpp"

#include <filesystem>
#include <stdexcept>

namespace spinlab {

namespace {

Vector vec3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

Vector vec4(double a, double b, double c, double d) {
  Vector v(4);
  v << a, b, c, d;
  return v;
}

std::vector<TokenEmbedding> fig3_tokens() {
  return {{"THEY", vec3(0.25, 0.25, 0.1)},
          {"ARE", vec3(0.1, 0.3, 0.2)},
          {"GOOD", vec3(0.4, 0.3, 0.1)},
          {"EVIL", vec3(0.4, 0.15, 0.4)}};
}

std::string class_name(TokenClass c) { return c == TokenClass::Bad ? "Bad" : "Good"; }

}  // namespace

ModelConfig fig2_config() {
  std::vector<TokenEmbedding> tokens{{"A", vec3(0.1, 0.2, 0.3)},
                                     {"B", vec3(0.4, 0.1, 0.6)},
                                     {"C", vec3(0.7, 0.6, 0.5)},
                                     {"D", vec3(1.0, 1.1, 0.3)}};
  Vocabulary vocab(tokens, {0, 1, 2, 3});
  Prompt prompt = make_prompt(vocab, {"A", "C", "B"});
  return ModelConfig{std::move(vocab), identity_weights(3), std::move(prompt), {}, {}};
}

int fig2_steps() { return 6; }

ModelConfig fig3_config() {
  Vocabulary vocab(fig3_tokens(), {0, 1, 2});
  Prompt prompt = make_prompt(vocab, {"THEY", "ARE"});
  return ModelConfig{std::move(vocab), identity_weights(3), std::move(prompt), {}, {}};
}

SliceSpec fig3_slice() {
  SliceSpec s;
  s.fixed = vec3(0.4, 0.15, 0.4);  // bad candidate's embedding; free axes ignored
  s.axes = {1, 2};
  return s;
}

Matrix fig4a_delta() {
  Matrix d(3, 3);
  d << 0.0, -2.0, 0.5,
       2.0, 0.0, 1.0,
      -0.5, -1.0, 0.0;
  return d;
}

std::vector<double> fig4a_xis() { return {0.0, 0.025, 0.05}; }

ModelConfig fig4a_config(double xi) {
  ModelConfig cfg = fig3_config();
  cfg.bias = BiasSpec{xi, fig4a_delta()};
  return cfg;
}

ModelConfig fig4b_config() {
  std::vector<TokenEmbedding> tokens{{"THEY", vec4(0.25, 0.25, 0.1, 0.0)},
                                     {"ARE", vec4(0.1, 0.3, 0.2, 0.0)},
                                     {"GOOD", vec4(0.4, 0.3, 0.1, 0.0)},
                                     {"EVIL", vec4(0.4, 0.15, 0.4, 0.0)}};
  Vocabulary vocab(std::move(tokens), {0, 1, 2});
  Prompt prompt = make_prompt(vocab, {"THEY", "ARE"});
  PEConfig pe;
  pe.enabled = true;
  pe.y = 0.1;
  pe.base = 1000.0;
  pe.first_position = 0;
  return ModelConfig{std::move(vocab), identity_weights(4), std::move(prompt), {}, pe};
}

SliceSpec fig4b_slice() {
  SliceSpec s;
  s.fixed = vec4(0.4, 0.15, 0.4, 0.0);
  s.axes = {1, 2};
  return s;
}

int fig4b_steps() { return 100; }

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2", "fig3", "fig4a", "fig4b"};
  return names;
}

namespace {

std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

PresetResult run_fig2(const std::string& out_dir) {
  const ModelConfig cfg = fig2_config();
  const GenerationTrace trace =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, fig2_steps());
  const RepetitionReport rep = detect_repetition(trace);

  PresetResult res;
  save_config(cfg, path_join(out_dir, "config.json"));
  res.files.push_back("config.json");
  write_text_file(path_join(out_dir, "trace.csv"), trace_csv(trace));
  res.files.push_back("trace.csv");
  write_text_file(path_join(out_dir, "context.csv"), context_csv(trace));
  res.files.push_back("context.csv");
  write_text_file(path_join(out_dir, "repetition.json"), repetition_json(rep, trace.steps.size()));
  res.files.push_back("repetition.json");
  res.summary = "fig2: " + std::to_string(trace.steps.size()) + " iterations, " +
                (rep.found && rep.period == 1 ? "attractor " + rep.attractor +
                                                    " from iteration " +
                                                    std::to_string(rep.lock_in_iteration)
                                              : std::string("no attractor"));
  return res;
}

PresetResult run_fig3(const std::string& out_dir) {
  const ModelConfig cfg = fig3_config();
  const ContextVector n =
      evaluate_context(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights);
  const PhaseGrid grid = sweep_slice(fig3_slice(), n, cfg.weights, cfg.vocabulary);
  const auto logits = vocabulary_logits(n, cfg.weights, cfg.vocabulary);
  const std::size_t argmax = next_token(n, cfg.weights, cfg.vocabulary);

  Json summary;
  summary["context"] = to_json(n.n);
  Json jl;
  for (std::size_t i = 0; i < cfg.vocabulary.size(); ++i)
    jl[cfg.vocabulary.token(i).label] = logits[i];
  summary["logits"] = std::move(jl);
  summary["argmax"] = cfg.vocabulary.token(argmax).label;
  Json jc;
  for (std::size_t i : cfg.vocabulary.bad_indices()) {
    const auto& tok = cfg.vocabulary.token(i);
    jc[tok.label] = class_name(classify_bad_token(tok.spin, n, cfg.weights, cfg.vocabulary));
  }
  summary["bad_token_class"] = std::move(jc);

  PresetResult res;
  save_config(cfg, path_join(out_dir, "config.json"));
  res.files.push_back("config.json");
  write_text_file(path_join(out_dir, "summary.json"), summary.dump(2) + "\n");
  res.files.push_back("summary.json");
  write_text_file(path_join(out_dir, "boundary.json"), boundary_json(grid.line));
  res.files.push_back("boundary.json");
  write_text_file(path_join(out_dir, "grid.csv"), grid_csv(grid));
  res.files.push_back("grid.csv");
  res.summary = "fig3: argmax " + summary["argmax"].get<std::string>() + ", grid " +
                std::to_string(grid.slice.resolution[0]) + "x" +
                std::to_string(grid.slice.resolution[1]);
  return res;
}

PresetResult run_fig4a(const std::string& out_dir) {
  const ModelConfig cfg = fig3_config();
  const Matrix spins = prompt_spins(cfg.prompt, cfg.vocabulary);
  const Matrix delta = fig4a_delta();
  const SliceSpec slice = fig3_slice();

  PresetResult res;
  save_config(fig4a_config(fig4a_xis().back()), path_join(out_dir, "config.json"));
  res.files.push_back("config.json");

  std::vector<PhaseBoundary> boundaries;
  Json jb = Json::array();
  for (double xi : fig4a_xis()) {
    const ContextVector n = biased_context_exact(spins, cfg.weights, {xi, delta});
    PhaseBoundary b = boundary(n, cfg.weights, cfg.vocabulary, slice);
    jb.push_back(Json{{"xi", xi}, {"boundary", boundary_to_json(b)}});
    const PhaseGrid grid = sweep_slice(slice, n, cfg.weights, cfg.vocabulary);
    const std::string grid_name = "grid_xi_" + format_double(xi) + ".csv";
    write_text_file(path_join(out_dir, grid_name), grid_csv(grid));
    res.files.push_back(grid_name);
    boundaries.push_back(std::move(b));
  }
  write_text_file(path_join(out_dir, "boundaries.json"), jb.dump(2) + "\n");
  res.files.push_back("boundaries.json");

  const std::vector<double> angles = boundary_rotation(boundaries);
  Json jr;
  jr["xi"] = fig4a_xis();
  jr["angle_rad"] = angles;
  write_text_file(path_join(out_dir, "rotation.json"), jr.dump(2) + "\n");
  res.files.push_back("rotation.json");

  res.summary = "fig4a: boundary rotates by " + format_double(angles.back()) + " rad at xi " +
                format_double(fig4a_xis().back());
  return res;
}

PresetResult run_fig4b(const std::string& out_dir) {
  const ModelConfig cfg = fig4b_config();
  const GenerationTrace trace =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, fig4b_steps(), cfg.pe);
  const RepetitionReport rep = detect_repetition(trace);
  const SliceSpec slice = fig4b_slice();

  // in-slice boundary per iteration, from each step's context
  std::string by_iter = "iter,normal_e2,normal_e3,offset\n";
  for (const auto& step : trace.steps) {
    const PhaseBoundary b =
        boundary(ContextVector{step.context}, cfg.weights, cfg.vocabulary, slice);
    const auto nn = b.inslice_normal();
    by_iter += std::to_string(step.iteration) + "," + format_double(nn[0]) + "," +
               format_double(nn[1]) + "," + format_double(b.inslice_offset()) + "\n";
  }

  Json summary;
  summary["steps"] = trace.steps.size();
  summary["first_chosen"] = trace.steps.front().chosen_label;
  summary["found"] = rep.found;
  if (rep.found) {
    summary["attractor"] = rep.period == 1 ? Json(rep.attractor) : Json(nullptr);
    summary["switch_iteration"] = rep.lock_in_iteration;
  }

  PresetResult res;
  save_config(cfg, path_join(out_dir, "config.json"));
  res.files.push_back("config.json");
  write_text_file(path_join(out_dir, "trace.csv"), trace_csv(trace));
  res.files.push_back("trace.csv");
  write_text_file(path_join(out_dir, "repetition.json"), repetition_json(rep, trace.steps.size()));
  res.files.push_back("repetition.json");
  write_text_file(path_join(out_dir, "boundary_by_iter.csv"), by_iter);
  res.files.push_back("boundary_by_iter.csv");
  write_text_file(path_join(out_dir, "summary.json"), summary.dump(2) + "\n");
  res.files.push_back("summary.json");

  res.summary = "fig4b: starts with " + trace.steps.front().chosen_label;
  if (rep.found && rep.period == 1)
    res.summary += ", locks onto " + rep.attractor + " at iteration " +
                   std::to_string(rep.lock_in_iteration);
  return res;
}

}  // namespace

PresetResult run_repro(const std::string& preset, const std::string& out_dir) {
  if (preset == "fig2") return run_fig2(out_dir);
  if (preset == "fig3") return run_fig3(out_dir);
  if (preset == "fig4a") return run_fig4a(out_dir);
  if (preset == "fig4b") return run_fig4b(out_dir);
  throw std::invalid_argument("unknown preset '" + preset +
                              "' (available: fig2, fig3, fig4a, fig4b)");
}

}  // namespace spinlab
