#include <CLI11.hpp>

#include "spinlab/core_model.hpp"
#include "spinlab/generation.hpp"
#include "spinlab/perturbation.hpp"
#include "spinlab/phase_map.hpp"
#include "spinlab/presets.hpp"
#include "spinlab/reference_oracle.hpp"
#include "spinlab/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

using namespace spinlab;

std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

struct Overrides {
  std::optional<double> pe_base;
  std::optional<double> score_scale;
};

ModelConfig load_with_overrides(const std::string& config_path, const Overrides& ov) {
  if (config_path.empty())
    throw std::invalid_argument("this command needs --config <file>");
  ModelConfig cfg = load_config(config_path);
  if (ov.score_scale) {
    cfg.weights = WeightSet(cfg.weights.w_q(), cfg.weights.w_k(), cfg.weights.w_v(),
                            *ov.score_scale);
  }
  if (ov.pe_base) {
    if (!cfg.pe)
      throw std::invalid_argument("--pe-base given but the config has no 'pe' section");
    cfg.pe->base = *ov.pe_base;
    validate_pe(*cfg.pe, cfg.vocabulary.dimension());
  }
  return cfg;
}

void report_files(const std::string& out_dir, const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "  wrote " << path_join(out_dir, f) << "\n";
}

int cmd_repro(const std::string& preset, std::string out_dir) {
  if (out_dir.empty()) out_dir = path_join("out", preset);
  const PresetResult res = run_repro(preset, out_dir);
  std::cout << res.summary << "\n";
  report_files(out_dir, res.files);
  return 0;
}

int cmd_generate(const std::string& config_path, const Overrides& ov, int steps,
                 std::string out_dir, const std::string& format) {
  if (out_dir.empty()) out_dir = path_join("out", "generate");
  const ModelConfig cfg = load_with_overrides(config_path, ov);
  const GenerationTrace trace =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, steps, cfg.pe, cfg.bias);
  const RepetitionReport rep = detect_repetition(trace);

  std::vector<std::string> files;
  if (format == "json") {
    write_text_file(path_join(out_dir, "trace.json"), trace_json(trace));
    files.push_back("trace.json");
  } else {
    write_text_file(path_join(out_dir, "trace.csv"), trace_csv(trace));
    write_text_file(path_join(out_dir, "context.csv"), context_csv(trace));
    files.push_back("trace.csv");
    files.push_back("context.csv");
  }
  write_text_file(path_join(out_dir, "repetition.json"), repetition_json(rep, trace.steps.size()));
  files.push_back("repetition.json");

  std::cout << steps << " iterations";
  if (rep.found) {
    if (rep.period == 1)
      std::cout << ", attractor " << rep.attractor << " from iteration "
                << rep.lock_in_iteration;
    else
      std::cout << ", period-" << rep.period << " cycle from iteration "
                << rep.lock_in_iteration;
  } else {
    std::cout << ", no repetition detected";
  }
  std::cout << "\n";
  report_files(out_dir, files);
  return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& ov, std::string token,
              std::string axes_text, double lo, double hi, int res, const std::string& fixed_text,
              std::string out_dir, const std::string& format) {
  if (out_dir.empty()) out_dir = path_join("out", "sweep");
  const ModelConfig cfg = load_with_overrides(config_path, ov);
  const Eigen::Index d = cfg.vocabulary.dimension();

  if (token.empty()) {
    const auto bad = cfg.vocabulary.bad_indices();
    if (bad.empty())
      throw std::invalid_argument(
          "sweep: every token is in the good set; pick the candidate with --token");
    token = cfg.vocabulary.token(bad.front()).label;
  }
  const auto token_idx = cfg.vocabulary.index_of(token);
  if (!token_idx) throw std::invalid_argument("sweep: unknown token '" + token + "'");

  SliceSpec slice;
  slice.fixed = cfg.vocabulary.token(*token_idx).spin;
  if (!fixed_text.empty()) {
    const auto vals = parse_double_list(fixed_text, "--fixed");
    if (static_cast<Eigen::Index>(vals.size()) != d)
      throw std::invalid_argument("--fixed: expected " + std::to_string(d) + " values");
    slice.fixed = Eigen::Map<const Vector>(vals.data(), d);
  }
  if (axes_text.empty()) axes_text = d >= 3 ? "2,3" : "1,2";
  const auto axes = parse_double_list(axes_text, "--axes");
  if (axes.size() != 2)
    throw std::invalid_argument("--axes: expected two 1-based coordinate indices");
  slice.axes = {static_cast<Eigen::Index>(axes[0]) - 1, static_cast<Eigen::Index>(axes[1]) - 1};
  slice.lo = {lo, lo};
  slice.hi = {hi, hi};
  slice.resolution = {res, res};

  const bool in_prompt = std::find(cfg.prompt.indices.begin(), cfg.prompt.indices.end(),
                                   *token_idx) != cfg.prompt.indices.end();
  PhaseGrid grid = [&] {
    if (in_prompt) {
      if (cfg.bias || (cfg.pe && cfg.pe->enabled))
        throw std::invalid_argument(
            "sweep: prompt-token sweeps support unperturbed configs only "
            "(drop the bias/pe sections or sweep a non-prompt token)");
      return sweep_prompt_token(slice, token, cfg.prompt, cfg.vocabulary, cfg.weights);
    }
    const ContextVector n = evaluate_context(
        effective_prompt_spins(cfg.prompt, cfg.vocabulary, cfg.pe, cfg.bias), cfg.weights);
    return sweep_slice(slice, n, cfg.weights, cfg.vocabulary);
  }();

  std::vector<std::string> files;
  if (format == "json") {
    write_text_file(path_join(out_dir, "grid.json"), grid_json(grid));
    files.push_back("grid.json");
  } else {
    write_text_file(path_join(out_dir, "grid.csv"), grid_csv(grid));
    files.push_back("grid.csv");
  }
  write_text_file(path_join(out_dir, "boundary.json"), boundary_json(grid.line));
  files.push_back("boundary.json");

  std::size_t bad_cells = 0;
  for (TokenClass c : grid.cells)
    if (c == TokenClass::Bad) ++bad_cells;
  std::cout << "swept " << token << " over axes " << axes_text << " (" << res << "x" << res
            << "): " << bad_cells << "/" << grid.cells.size() << " cells Bad";
  if (grid.prompt_token_sweep)
    std::cout << " [prompt-token sweep: context re-evaluated per grid point]";
  std::cout << "\n";
  report_files(out_dir, files);
  return 0;
}

int cmd_perturb_check(const std::string& config_path, const Overrides& ov, std::string mode,
                      const std::string& params_text, std::string out_dir) {
  if (out_dir.empty()) out_dir = path_join("out", "perturb-check");
  const ModelConfig cfg = load_with_overrides(config_path, ov);
  const Matrix spins = prompt_spins(cfg.prompt, cfg.vocabulary);

  const bool has_bias = cfg.bias.has_value();
  const bool has_pe = cfg.pe.has_value() && cfg.pe->enabled;
  if (mode == "auto") {
    if (!has_bias && !has_pe)
      throw std::invalid_argument("perturb-check: config has neither 'bias' nor enabled 'pe'");
    mode = has_bias && has_pe ? "both" : (has_bias ? "bias" : "pe");
  }

  std::vector<double> params{1e-2, 1e-3, 1e-4};
  if (!params_text.empty()) params = parse_double_list(params_text, "--params");

  std::vector<std::string> files;
  auto print_fit = [](const PerturbationReport& rep) {
    std::cout << rep.mode << ": |exact - linear| = " << format_double(rep.abs_deviation)
              << " at " << rep.parameter_name << " = " << format_double(rep.evaluated_at);
    if (rep.fit.exact_match)
      std::cout << ", exact match at every parameter";
    else if (rep.fit.slope)
      std::cout << ", convergence slope " << format_double(*rep.fit.slope);
    std::cout << "\n";
  };

  if (mode == "bias" || mode == "both") {
    if (!has_bias) throw std::invalid_argument("perturb-check: config has no 'bias' section");
    const PerturbationReport rep = bias_report(spins, cfg.weights, cfg.bias->delta, params);
    write_text_file(path_join(out_dir, "bias_check.json"), perturbation_report_json(rep));
    files.push_back("bias_check.json");
    print_fit(rep);
    if (rep.delta_antisymmetry_defect > 1e-12)
      std::cout << "  note: delta is not antisymmetric (defect "
                << format_double(rep.delta_antisymmetry_defect)
                << "); the first-order energy form assumes it\n";
  }
  if (mode == "pe" || mode == "both") {
    if (!has_pe)
      throw std::invalid_argument("perturb-check: config has no enabled 'pe' section");
    std::vector<int> positions(cfg.prompt.length());
    for (std::size_t i = 0; i < positions.size(); ++i)
      positions[i] = cfg.pe->first_position + static_cast<int>(i);
    for (double y : params)
      if (y >= 1.0)
        throw std::invalid_argument("perturb-check: pe mixing parameters must be < 1");
    const PerturbationReport rep = pe_report(spins, positions, cfg.weights, *cfg.pe, params);
    write_text_file(path_join(out_dir, "pe_check.json"), perturbation_report_json(rep));
    files.push_back("pe_check.json");
    print_fit(rep);
  }
  report_files(out_dir, files);
  return 0;
}

int cmd_trace(const std::string& config_path, const Overrides& ov, std::string out_dir) {
  if (out_dir.empty()) out_dir = path_join("out", "trace");
  const ModelConfig cfg = load_with_overrides(config_path, ov);
  const Matrix spins = effective_prompt_spins(cfg.prompt, cfg.vocabulary, cfg.pe, cfg.bias);

  const PipelineTrace oracle = run_pipeline(spins, cfg.weights, cfg.vocabulary);
  const ContextVector n = evaluate_context(spins, cfg.weights);
  const auto engine_logits = vocabulary_logits(n, cfg.weights, cfg.vocabulary);

  double max_abs = 0.0, max_ref = 0.0;
  for (std::size_t i = 0; i < engine_logits.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(engine_logits[i] - oracle.logits[i].second));
    max_ref = std::max(max_ref, std::abs(oracle.logits[i].second));
  }
  const double rel = max_ref > 0.0 ? max_abs / max_ref : max_abs;

  // softmax over the engine logits; argmax is invariant under it
  double lmax = *std::max_element(engine_logits.begin(), engine_logits.end());
  double lsum = 0.0;
  std::vector<double> probs(engine_logits.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(engine_logits[i] - lmax);
    lsum += probs[i];
  }
  for (double& p : probs) p /= lsum;

  Json j;
  j["q"] = oracle.q;
  j["k"] = oracle.k_mat;
  j["v"] = oracle.v;
  j["omega"] = oracle.omega;
  j["sigma"] = oracle.sigma;
  j["context"] = oracle.context;
  Json jl, je, jp;
  for (std::size_t i = 0; i < oracle.logits.size(); ++i) {
    jl[oracle.logits[i].first] = oracle.logits[i].second;
    je[oracle.logits[i].first] = engine_logits[i];
    jp[oracle.logits[i].first] = probs[i];
  }
  j["logits"] = std::move(jl);
  j["engine_context"] = to_json(n.n);
  j["engine_logits"] = std::move(je);
  j["probabilities"] = std::move(jp);
  j["max_logit_rel_deviation"] = rel;

  write_text_file(path_join(out_dir, "pipeline.json"), j.dump(2) + "\n");
  std::cout << "pipeline stages written; engine vs reference logit deviation "
            << format_double(rel) << " (relative)\n";
  report_files(out_dir, {"pipeline.json"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "attention spin-lab: a single attention head as an interacting spin system.\n"
      "Tokens are spins, pair interactions set a Boltzmann ensemble per position,\n"
      "and the summed ensemble-average spin drives greedy next-token choices."};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string out_dir;
  std::string format = "csv";
  Overrides ov;
  double pe_base = 0.0, score_scale = 0.0;
  std::uint64_t seed = 0;
  app.add_option("--out", out_dir, "output directory (default depends on the command)");
  app.add_option("--format", format, "tabular artifact format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  auto* pe_base_opt =
      app.add_option("--pe-base", pe_base, "override the positional-encoding base");
  auto* scale_opt =
      app.add_option("--score-scale", score_scale, "override the interaction score scale");
  app.add_option("--seed", seed,
                 "accepted for interface stability; every computation here is deterministic");

  auto* repro = app.add_subcommand("repro", "run a bundled experiment and write its artifacts");
  std::string preset;
  repro->add_option("preset", preset, "which experiment")
      ->required()
      ->check(CLI::IsMember(spinlab::preset_names()));

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
  };

  auto* gen = app.add_subcommand("generate", "closed-loop token generation from a config");
  add_config(gen);
  int steps = 20;
  gen->add_option("--steps", steps, "iterations to run")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "classify a 2D slice of embedding space");
  add_config(sweep);
  std::string token, axes_text, fixed_text;
  double lo = 0.0, hi = 1.0;
  int res = 201;
  sweep->add_option("--token", token, "candidate to sweep (default: first non-good token)");
  sweep->add_option("--axes", axes_text, "two 1-based coordinates to sweep, e.g. 2,3");
  sweep->add_option("--min", lo, "lower bound on both axes")->capture_default_str();
  sweep->add_option("--max", hi, "upper bound on both axes")->capture_default_str();
  sweep->add_option("--res", res, "grid points per axis")->capture_default_str();
  sweep->add_option("--fixed", fixed_text,
                    "comma list pinning all coordinates (default: the swept token's embedding)");

  auto* perturb = app.add_subcommand(
      "perturb-check", "compare exact and first-order perturbed contexts, fit convergence");
  add_config(perturb);
  std::string mode = "auto";
  std::string params_text;
  perturb->add_option("--mode", mode, "which perturbation to check")
      ->check(CLI::IsMember({"auto", "bias", "pe", "both"}))
      ->capture_default_str();
  perturb->add_option("--params", params_text,
                      "comma list of perturbation strengths (default 0.01,0.001,0.0001)");

  auto* trace = app.add_subcommand("trace", "dump every pipeline stage for one evaluation");
  add_config(trace);

  CLI11_PARSE(app, argc, argv);

  try {
    ov.pe_base = pe_base_opt->count() ? std::optional<double>(pe_base) : std::nullopt;
    ov.score_scale = scale_opt->count() ? std::optional<double>(score_scale) : std::nullopt;
    if (repro->parsed()) {
      if (ov.pe_base || ov.score_scale)
        std::cerr << "note: --pe-base/--score-scale do not apply to bundled presets\n";
      return cmd_repro(preset, out_dir);
    }
    if (gen->parsed()) return cmd_generate(config_path, ov, steps, out_dir, format);
    if (sweep->parsed())
      return cmd_sweep(config_path, ov, token, axes_text, lo, hi, res, fixed_text, out_dir,
                       format);
    if (perturb->parsed()) return cmd_perturb_check(config_path, ov, mode, params_text, out_dir);
    if (trace->parsed()) return cmd_trace(config_path, ov, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
