#pragma once

#include "spinlab/core_model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace spinlab {

// Every stage of one pipeline evaluation, in plain nested vectors.
struct PipelineTrace {
  std::vector<std::vector<double>> q;      // k x d, spins through w_q
  std::vector<std::vector<double>> k_mat;  // k x d, spins through w_k
  std::vector<std::vector<double>> v;      // k x d, spins through w_v
  std::vector<std::vector<double>> omega;  // k x k scores
  std::vector<std::vector<double>> sigma;  // k x k ensemble weights
  std::vector<double> context;             // d
  std::vector<std::pair<std::string, double>> logits;  // vocabulary order
};

// Second, deliberately naive route through the whole pipeline, for
// double-entry checks against the engine. Plain index loops, no shared
// subexpressions, scores via materialized q/k rows, softmax without the
// max-subtraction guard. Keep it this way: its value is independence,
// not speed or range.
PipelineTrace run_pipeline(const Matrix& spins, const WeightSet& weights,
                           const Vocabulary& vocab);

}  // namespace spinlab
