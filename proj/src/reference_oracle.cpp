#include "spinlab/reference_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace spinlab {

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows out(static_cast<std::size_t>(m.rows()),
           std::vector<double>(static_cast<std::size_t>(m.cols()), 0.0));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

// rows(a) times matrix b, all in index loops
Rows times(const Rows& a, const Rows& b) {
  const std::size_t n = a.size(), d = b.size(), cols = b[0].size();
  Rows out(n, std::vector<double>(cols, 0.0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) acc += a[r][t] * b[t][c];
      out[r][c] = acc;
    }
  return out;
}

}  // namespace

PipelineTrace run_pipeline(const Matrix& spins, const WeightSet& weights,
                           const Vocabulary& vocab) {
  if (spins.rows() < 1) throw std::invalid_argument("run_pipeline: empty prompt");
  if (spins.cols() != weights.dimension() || vocab.dimension() != weights.dimension())
    throw std::invalid_argument("run_pipeline: dimension mismatch");

  const std::size_t k = static_cast<std::size_t>(spins.rows());
  const std::size_t d = static_cast<std::size_t>(spins.cols());
  const Rows s = to_rows(spins);
  const Rows wq = to_rows(weights.w_q());
  const Rows wk = to_rows(weights.w_k());
  const Rows wv = to_rows(weights.w_v());
  const double scale = weights.score_scale();

  PipelineTrace tr;
  tr.q = times(s, wq);
  tr.k_mat = times(s, wk);
  tr.v = times(s, wv);

  // scores from the materialized q/k rows
  tr.omega.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < d; ++a) acc += tr.q[j][a] * tr.k_mat[i][a];
      tr.omega[j][i] = scale * acc;
    }

  // plain softmax per row
  tr.sigma.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t j = 0; j < k; ++j) {
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += std::exp(tr.omega[j][i]);
    for (std::size_t i = 0; i < k; ++i) tr.sigma[j][i] = std::exp(tr.omega[j][i]) / denom;
  }

  // context: double sum over positions and ensemble members
  tr.context.assign(d, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t a = 0; a < d; ++a) tr.context[a] += tr.sigma[j][i] * s[i][a];

  // one fresh triple loop per vocabulary token
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    const Vector& x = vocab.token(t).spin;
    double logit = 0.0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        logit += tr.context[a] * wv[a][b] * x[static_cast<Eigen::Index>(b)];
    tr.logits.emplace_back(vocab.token(t).label, logit);
  }
  return tr;
}

}  // namespace spinlab
