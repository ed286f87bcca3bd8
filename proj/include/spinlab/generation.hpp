#pragma once

#include "spinlab/attention_engine.hpp"
#include "spinlab/core_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace spinlab {

// Cosine between the context and a candidate spin. Throws on a zero vector.
double alignment(const ContextVector& context, const Vector& x);

struct GenerationStep {
  int iteration = 0;               // 1-based
  std::size_t prompt_length = 0;   // length when this step was evaluated
  std::size_t chosen_index = 0;
  std::string chosen_label;
  std::vector<double> logits;      // vocabulary order
  std::vector<double> alignments;  // vocabulary order
  Vector context;
  Vector context_unit;
};

struct GenerationTrace {
  std::vector<std::string> vocab_labels;
  std::vector<GenerationStep> steps;
};

// Prompt spins as the pipeline sees them: bias mixing first (when given),
// then the positional mix (1-y) s_i + y p(first_position + i).
Matrix effective_prompt_spins(const Prompt& prompt, const Vocabulary& vocab,
                              const std::optional<PEConfig>& pe = {},
                              const std::optional<BiasSpec>& bias = {});

// Greedy closed loop: evaluate the context over the current prompt, pick the
// argmax-logit token, append it, repeat. Candidates are always scored with
// their raw embeddings. When pe is enabled, prompt entry i enters the
// pipeline as (1-y) s_i + y p(first_position + i), so appended tokens pick
// up consecutive positions. When bias is given, prompt spins pass through
// I + xi*delta first.
GenerationTrace generate(const Prompt& prompt, const Vocabulary& vocab,
                         const WeightSet& weights, int steps,
                         const std::optional<PEConfig>& pe = {},
                         const std::optional<BiasSpec>& bias = {});

struct RepetitionReport {
  bool found = false;
  int period = 0;
  int lock_in_iteration = 0;          // 1-based step where the periodic tail starts
  std::vector<std::string> cycle;     // one period of labels, in emission order
  std::string attractor;              // the label, when period == 1
};

// Smallest period whose repeating tail covers at least two full periods and
// at least the trailing quarter of the run.
RepetitionReport detect_repetition(const GenerationTrace& trace);

// Columns: iter,k,chosen,logit:<label>...,align:<label>...
std::string trace_csv(const GenerationTrace& trace);

// Same content as trace_csv plus the context vectors, one object per step.
std::string trace_json(const GenerationTrace& trace);

// Columns: iter,n1..nd,unit_n1..unit_nd
std::string context_csv(const GenerationTrace& trace);

std::string repetition_json(const RepetitionReport& report, std::size_t total_steps);

}  // namespace spinlab
