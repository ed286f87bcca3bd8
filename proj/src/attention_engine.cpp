#include "spinlab/attention_engine.hpp"

#include <cmath>
#include <stdexcept>

namespace spinlab {

double pair_score(const Vector& s_j, const Vector& s_i, const Matrix& w_eff) {
  return s_j.dot(w_eff * s_i);
}

double hamiltonian(const Vector& s_j, const Vector& s_i, const WeightSet& weights) {
  return -pair_score(s_j, s_i, weights.w_eff());
}

ScoreMatrix attention_scores(const Matrix& spins, const WeightSet& weights) {
  const Eigen::Index k = spins.rows();
  if (k < 1) throw std::invalid_argument("attention_scores: empty prompt");
  if (spins.cols() != weights.dimension())
    throw std::invalid_argument("attention_scores: spin/weight dimension mismatch");
  ScoreMatrix out;
  out.omega.resize(k, k);
  const double scale = weights.score_scale();
  for (Eigen::Index j = 0; j < k; ++j) {
    const Vector s_j = spins.row(j).transpose();
    for (Eigen::Index i = 0; i < k; ++i)
      out.omega(j, i) = scale * pair_score(s_j, spins.row(i).transpose(), weights.w_eff());
  }
  return out;
}

EnsembleWeights boltzmann_weights(const ScoreMatrix& scores) {
  const Eigen::Index k = scores.omega.rows();
  if (k < 1 || scores.omega.cols() != k)
    throw std::invalid_argument("boltzmann_weights: scores must be square and non-empty");
  if (!scores.omega.allFinite())
    throw std::invalid_argument("boltzmann_weights: non-finite score");
  EnsembleWeights out;
  out.sigma.resize(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double m = scores.omega.row(j).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double e = std::exp(scores.omega(j, i) - m);
      out.sigma(j, i) = e;
      sum += e;
    }
    for (Eigen::Index i = 0; i < k; ++i) out.sigma(j, i) /= sum;
  }
  return out;
}

Vector mean_spin(Eigen::Index j, const EnsembleWeights& ensemble, const Matrix& spins) {
  const Eigen::Index k = spins.rows();
  if (j < 0 || j >= k) throw std::invalid_argument("mean_spin: position out of range");
  if (ensemble.sigma.rows() != k || ensemble.sigma.cols() != k)
    throw std::invalid_argument("mean_spin: ensemble/prompt size mismatch");
  Vector m = Vector::Zero(spins.cols());
  for (Eigen::Index i = 0; i < k; ++i) m += ensemble.sigma(j, i) * spins.row(i).transpose();
  return m;
}

ContextVector context_vector(const EnsembleWeights& ensemble, const Matrix& spins) {
  Vector n = Vector::Zero(spins.cols());
  for (Eigen::Index j = 0; j < spins.rows(); ++j) n += mean_spin(j, ensemble, spins);
  return ContextVector{std::move(n)};
}

ContextVector evaluate_context(const Matrix& spins, const WeightSet& weights) {
  return context_vector(boltzmann_weights(attention_scores(spins, weights)), spins);
}

Vector logit_row(const ContextVector& context, const WeightSet& weights) {
  if (context.n.size() != weights.dimension())
    throw std::invalid_argument("logit_row: context/weight dimension mismatch");
  return weights.w_v().transpose() * context.n;
}

double token_logit(const ContextVector& context, const WeightSet& weights, const Vector& x) {
  if (x.size() != context.n.size())
    throw std::invalid_argument("token_logit: candidate dimension mismatch");
  return logit_row(context, weights).dot(x);
}

std::vector<double> vocabulary_logits(const ContextVector& context, const WeightSet& weights,
                                      const Vocabulary& vocab) {
  const Vector r = logit_row(context, weights);
  std::vector<double> logits(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) logits[i] = r.dot(vocab.token(i).spin);
  return logits;
}

std::size_t next_token(const ContextVector& context, const WeightSet& weights,
                       const Vocabulary& vocab) {
  const auto logits = vocabulary_logits(context, weights, vocab);
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

}  // namespace spinlab
