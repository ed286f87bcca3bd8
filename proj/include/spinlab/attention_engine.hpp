#pragma once

#include "spinlab/core_model.hpp"

namespace spinlab {

// Pairwise interaction scores for a prompt: omega(j, i) = scale * s_j . W_eff . s_i.
// At the default scale this is exactly the negated interaction energy.
struct ScoreMatrix {
  Matrix omega;  // k x k
};

// Row-stochastic Boltzmann weights; entry (j, i) weighs spin i in the
// ensemble of position j. Entries are in (0, 1], rows sum to 1.
struct EnsembleWeights {
  Matrix sigma;  // k x k
};

// Summed ensemble-average spin over all prompt positions.
struct ContextVector {
  Vector n;  // d
};

// Interaction energy of an ordered spin pair: -s_j . W_eff . s_i.
double hamiltonian(const Vector& s_j, const Vector& s_i, const WeightSet& weights);

// s_j . W_eff . s_i, the shared kernel behind hamiltonian() and scores.
double pair_score(const Vector& s_j, const Vector& s_i, const Matrix& w_eff);

ScoreMatrix attention_scores(const Matrix& spins, const WeightSet& weights);

// Row softmax of the scores (row max subtracted before exponentiation).
EnsembleWeights boltzmann_weights(const ScoreMatrix& scores);

// Ensemble-average spin at position j: sum_i sigma(j, i) * s_i.
Vector mean_spin(Eigen::Index j, const EnsembleWeights& ensemble, const Matrix& spins);

// Context n = sum over positions j of mean_spin(j). Built literally as that
// sum so the two agree bitwise.
ContextVector context_vector(const EnsembleWeights& ensemble, const Matrix& spins);

// scores -> ensemble -> context in one call.
ContextVector evaluate_context(const Matrix& spins, const WeightSet& weights);

// r = W_v^T n; a token's logit is then r . x. Every consumer of logits
// (classification, boundaries, generation) goes through this kernel so
// their decisions agree exactly.
Vector logit_row(const ContextVector& context, const WeightSet& weights);

double token_logit(const ContextVector& context, const WeightSet& weights, const Vector& x);

std::vector<double> vocabulary_logits(const ContextVector& context, const WeightSet& weights,
                                      const Vocabulary& vocab);

// Argmax over vocabulary logits; ties resolve to the lowest index.
std::size_t next_token(const ContextVector& context, const WeightSet& weights,
                       const Vocabulary& vocab);

}  // namespace spinlab
