#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinlab/attention_engine.hpp"
#include "spinlab/presets.hpp"
#include "spinlab/reference_oracle.hpp"

#include <cmath>
#include <random>

using namespace spinlab;

namespace {

// vector-norm relative error between engine and oracle logits
double logit_rel_error(const Matrix& spins, const WeightSet& w, const Vocabulary& vocab) {
  const PipelineTrace tr = run_pipeline(spins, w, vocab);
  const auto engine = vocabulary_logits(evaluate_context(spins, w), w, vocab);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < engine.size(); ++i) {
    num = std::max(num, std::abs(engine[i] - tr.logits[i].second));
    den = std::max(den, std::abs(tr.logits[i].second));
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace

TEST_CASE("oracle stages on the four-token demo") {
  const ModelConfig cfg = fig2_config();
  const Matrix s = prompt_spins(cfg.prompt, cfg.vocabulary);
  const PipelineTrace tr = run_pipeline(s, cfg.weights, cfg.vocabulary);

  REQUIRE(tr.q.size() == 3);
  REQUIRE(tr.omega.size() == 3);
  REQUIRE(tr.context.size() == 3);
  REQUIRE(tr.logits.size() == 4);

  // identity maps pass spins through untouched
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(tr.q[r][c] == s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      CHECK(tr.k_mat[r][c] == s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      CHECK(tr.v[r][c] == s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }

  CHECK(tr.omega[0][0] == doctest::Approx(0.14).epsilon(1e-15));
  CHECK(tr.omega[0][1] == doctest::Approx(0.34).epsilon(1e-15));
  CHECK(tr.omega[0][2] == doctest::Approx(0.24).epsilon(1e-15));

  for (std::size_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (double v : tr.sigma[j]) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
  }

  CHECK(tr.context[0] == doctest::Approx(1.3345941484329442).epsilon(1e-13));
  CHECK(tr.context[1] == doctest::Approx(0.99510464806837828).epsilon(1e-13));
  CHECK(tr.context[2] == doctest::Approx(1.4412812389578156).epsilon(1e-13));

  CHECK(tr.logits[0].first == "A");
  CHECK(tr.logits[3].first == "D");
  CHECK(tr.logits[3].second == doctest::Approx(2.8615936329955054).epsilon(1e-13));
}

TEST_CASE("oracle labels follow vocabulary order") {
  const ModelConfig cfg = fig3_config();
  const PipelineTrace tr =
      run_pipeline(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights, cfg.vocabulary);
  REQUIRE(tr.logits.size() == 4);
  CHECK(tr.logits[0].first == "THEY");
  CHECK(tr.logits[1].first == "ARE");
  CHECK(tr.logits[2].first == "GOOD");
  CHECK(tr.logits[3].first == "EVIL");
}

TEST_CASE("engine and oracle agree on the bundled demos") {
  {
    const ModelConfig cfg = fig2_config();
    CHECK(logit_rel_error(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights,
                          cfg.vocabulary) <= 1e-12);
  }
  {
    const ModelConfig cfg = fig3_config();
    CHECK(logit_rel_error(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights,
                          cfg.vocabulary) <= 1e-12);
  }
}

TEST_CASE("engine and oracle agree on random instances") {
  std::mt19937 rng(991);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> kd(1, 8), dd(2, 6), md(2, 6);

  for (int rep = 0; rep < 60; ++rep) {
    const Eigen::Index k = kd(rng), d = dd(rng);
    const int m = md(rng);
    // weight entries shrink with d so the plain-softmax route stays in range
    std::normal_distribution<double> wdist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    auto rand_mat = [&](Eigen::Index r, Eigen::Index c, auto& dist) {
      Matrix mat(r, c);
      for (Eigen::Index a = 0; a < r; ++a)
        for (Eigen::Index b = 0; b < c; ++b) mat(a, b) = dist(rng);
      return mat;
    };
    const Matrix spins = rand_mat(k, d, unit);
    const WeightSet w = rep % 2 == 0
                            ? identity_weights(d, 0.5 + 0.25 * (rep % 3))
                            : WeightSet(rand_mat(d, d, wdist), rand_mat(d, d, wdist),
                                        rand_mat(d, d, wdist), 0.5 + 0.25 * (rep % 3));
    std::vector<TokenEmbedding> tokens;
    for (int t = 0; t < m; ++t) {
      Vector spin(d);
      for (Eigen::Index a = 0; a < d; ++a) spin[a] = unit(rng);
      tokens.push_back({"t" + std::to_string(t), spin});
    }
    Vocabulary vocab(tokens, {0});
    CHECK(logit_rel_error(spins, w, vocab) <= 1e-12);
  }
}

TEST_CASE("oracle validation") {
  const ModelConfig cfg = fig2_config();
  CHECK_THROWS_AS(run_pipeline(Matrix(0, 3), cfg.weights, cfg.vocabulary),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_pipeline(Matrix::Zero(2, 2), cfg.weights, cfg.vocabulary),
                  std::invalid_argument);
}
