#include "spinlab/generation.hpp"

#include "spinlab/perturbation.hpp"
#include "spinlab/text_io.hpp"

#include <cmath>
#include <stdexcept>

namespace spinlab {

namespace {

// repetition is only reported once the tail holds this many full periods
constexpr int kMinRepeats = 2;
// and covers at least this fraction of the whole run
constexpr double kMinTailFraction = 0.25;

}  // namespace

double alignment(const ContextVector& context, const Vector& x) {
  if (x.size() != context.n.size())
    throw std::invalid_argument("alignment: dimension mismatch");
  const double nn = context.n.norm();
  const double nx = x.norm();
  if (nn == 0.0 || nx == 0.0)
    throw std::invalid_argument("alignment: undefined for a zero vector");
  return context.n.dot(x) / (nn * nx);
}

namespace {

Matrix assemble_spins(const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                      const std::optional<PEConfig>& pe, const std::optional<BiasSpec>& bias) {
  const std::size_t k = indices.size();
  Matrix spins(static_cast<Eigen::Index>(k), vocab.dimension());
  for (std::size_t r = 0; r < k; ++r)
    spins.row(static_cast<Eigen::Index>(r)) = vocab.token(indices[r]).spin.transpose();
  if (bias) spins = biased_spins(spins, *bias);
  if (pe && pe->enabled) {
    std::vector<int> positions(k);
    for (std::size_t r = 0; r < k; ++r) positions[r] = pe->first_position + static_cast<int>(r);
    spins = pe_combine(spins, positions, *pe);
  }
  return spins;
}

}  // namespace

Matrix effective_prompt_spins(const Prompt& prompt, const Vocabulary& vocab,
                              const std::optional<PEConfig>& pe,
                              const std::optional<BiasSpec>& bias) {
  if (prompt.indices.empty()) throw std::invalid_argument("prompt: must not be empty");
  return assemble_spins(prompt.indices, vocab, pe, bias);
}

GenerationTrace generate(const Prompt& prompt, const Vocabulary& vocab,
                         const WeightSet& weights, int steps,
                         const std::optional<PEConfig>& pe,
                         const std::optional<BiasSpec>& bias) {
  if (steps < 1) throw std::invalid_argument("generate: steps must be >= 1");
  if (vocab.dimension() != weights.dimension())
    throw std::invalid_argument("generate: vocabulary/weight dimension mismatch");
  if (pe && pe->enabled) validate_pe(*pe, vocab.dimension());

  GenerationTrace trace;
  for (const auto& t : vocab.tokens()) trace.vocab_labels.push_back(t.label);

  std::vector<std::size_t> current = prompt.indices;
  for (int t = 1; t <= steps; ++t) {
    const std::size_t k = current.size();
    const Matrix spins = assemble_spins(current, vocab, pe, bias);
    const ContextVector n = evaluate_context(spins, weights);

    GenerationStep step;
    step.iteration = t;
    step.prompt_length = k;
    step.logits = vocabulary_logits(n, weights, vocab);
    step.alignments.reserve(vocab.size());
    for (std::size_t i = 0; i < vocab.size(); ++i)
      step.alignments.push_back(alignment(n, vocab.token(i).spin));
    step.chosen_index = next_token(n, weights, vocab);
    step.chosen_label = vocab.token(step.chosen_index).label;
    step.context = n.n;
    step.context_unit = n.n / n.n.norm();

    current.push_back(step.chosen_index);
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

RepetitionReport detect_repetition(const GenerationTrace& trace) {
  const std::size_t n = trace.steps.size();
  if (n == 0) throw std::invalid_argument("detect_repetition: empty trace");
  std::vector<std::string> labels;
  labels.reserve(n);
  for (const auto& s : trace.steps) labels.push_back(s.chosen_label);

  const std::size_t min_window =
      static_cast<std::size_t>(std::ceil(kMinTailFraction * static_cast<double>(n)));

  RepetitionReport rep;
  for (std::size_t p = 1; p <= n / 2; ++p) {
    // longest p-periodic suffix
    std::size_t start = n - p;
    while (start > 0 && labels[start - 1] == labels[start - 1 + p]) --start;
    const std::size_t tail = n - start;
    if (tail >= static_cast<std::size_t>(kMinRepeats) * p && tail >= min_window) {
      rep.found = true;
      rep.period = static_cast<int>(p);
      rep.lock_in_iteration = static_cast<int>(start) + 1;
      rep.cycle.assign(labels.end() - static_cast<std::ptrdiff_t>(p), labels.end());
      if (p == 1) rep.attractor = rep.cycle.front();
      return rep;
    }
  }
  return rep;
}

std::string trace_csv(const GenerationTrace& trace) {
  std::vector<std::string> header{"iter", "k", "chosen"};
  for (const auto& label : trace.vocab_labels) header.push_back("logit:" + label);
  for (const auto& label : trace.vocab_labels) header.push_back("align:" + label);
  std::string out = join_csv(header) + "\n";
  for (const auto& s : trace.steps) {
    std::vector<std::string> row{std::to_string(s.iteration), std::to_string(s.prompt_length),
                                 s.chosen_label};
    for (double v : s.logits) row.push_back(format_double(v));
    for (double v : s.alignments) row.push_back(format_double(v));
    out += join_csv(row) + "\n";
  }
  return out;
}

std::string trace_json(const GenerationTrace& trace) {
  Json j;
  j["labels"] = trace.vocab_labels;
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json step;
    step["iter"] = s.iteration;
    step["k"] = s.prompt_length;
    step["chosen"] = s.chosen_label;
    Json logits, aligns;
    for (std::size_t i = 0; i < trace.vocab_labels.size(); ++i) {
      logits[trace.vocab_labels[i]] = s.logits[i];
      aligns[trace.vocab_labels[i]] = s.alignments[i];
    }
    step["logits"] = std::move(logits);
    step["alignments"] = std::move(aligns);
    step["context"] = to_json(s.context);
    step["context_unit"] = to_json(s.context_unit);
    steps.push_back(std::move(step));
  }
  j["steps"] = std::move(steps);
  return j.dump(2) + "\n";
}

std::string context_csv(const GenerationTrace& trace) {
  if (trace.steps.empty()) throw std::invalid_argument("context_csv: empty trace");
  const Eigen::Index d = trace.steps.front().context.size();
  std::vector<std::string> header{"iter"};
  for (Eigen::Index c = 0; c < d; ++c) header.push_back("n" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < d; ++c) header.push_back("unit_n" + std::to_string(c + 1));
  std::string out = join_csv(header) + "\n";
  for (const auto& s : trace.steps) {
    std::vector<std::string> row{std::to_string(s.iteration)};
    for (Eigen::Index c = 0; c < d; ++c) row.push_back(format_double(s.context[c]));
    for (Eigen::Index c = 0; c < d; ++c) row.push_back(format_double(s.context_unit[c]));
    out += join_csv(row) + "\n";
  }
  return out;
}

std::string repetition_json(const RepetitionReport& report, std::size_t total_steps) {
  Json j;
  j["steps"] = total_steps;
  j["found"] = report.found;
  if (report.found) {
    j["period"] = report.period;
    j["lock_in_iteration"] = report.lock_in_iteration;
    j["cycle"] = report.cycle;
    if (report.period == 1)
      j["attractor"] = report.attractor;
    else
      j["attractor"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace spinlab
