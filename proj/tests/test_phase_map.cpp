#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinlab/perturbation.hpp"
#include "spinlab/phase_map.hpp"
#include "spinlab/presets.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

using namespace spinlab;

namespace {

ContextVector fig3_context() {
  const ModelConfig cfg = fig3_config();
  return evaluate_context(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights);
}

SliceSpec small_slice(int res) {
  SliceSpec s = fig3_slice();
  s.resolution = {res, res};
  return s;
}

}  // namespace

TEST_CASE("slice validation and grid coordinates") {
  SliceSpec s = fig3_slice();
  validate_slice(s, 3);
  CHECK(s.coord0(0) == 0.0);
  CHECK(s.coord0(s.resolution[0] - 1) == 1.0);  // endpoints inclusive
  CHECK(s.coord1(100) == doctest::Approx(0.5).epsilon(1e-15));
  const Vector p = s.point(0.25, 0.75);
  CHECK(p[0] == 0.4);
  CHECK(p[1] == 0.25);
  CHECK(p[2] == 0.75);

  SliceSpec bad = s;
  bad.axes = {1, 1};
  CHECK_THROWS_AS(validate_slice(bad, 3), std::invalid_argument);
  bad = s;
  bad.axes = {1, 3};
  CHECK_THROWS_AS(validate_slice(bad, 3), std::invalid_argument);
  bad = s;
  bad.resolution = {1, 201};
  CHECK_THROWS_AS(validate_slice(bad, 3), std::invalid_argument);
  bad = s;
  bad.lo = {0.5, 0.0};
  bad.hi = {0.5, 1.0};
  CHECK_THROWS_AS(validate_slice(bad, 3), std::invalid_argument);
  CHECK_THROWS_AS(validate_slice(s, 4), std::invalid_argument);
}

TEST_CASE("classification against the best good token") {
  const ModelConfig cfg = fig3_config();
  const ContextVector n = fig3_context();

  // the bad candidate lands on the Bad side
  CHECK(classify_bad_token(cfg.vocabulary.token(3).spin, n, cfg.weights, cfg.vocabulary) ==
        TokenClass::Bad);
  // the best good token's own embedding ties the offset exactly: Good
  CHECK(classify_bad_token(cfg.vocabulary.token(2).spin, n, cfg.weights, cfg.vocabulary) ==
        TokenClass::Good);
  CHECK(classify_bad_token(Vector::Zero(3), n, cfg.weights, cfg.vocabulary) ==
        TokenClass::Good);
}

TEST_CASE("boundary: frozen normal, offset, and in-slice line") {
  const ModelConfig cfg = fig3_config();
  const PhaseBoundary b = boundary(fig3_context(), cfg.weights, cfg.vocabulary, fig3_slice());

  CHECK(b.normal[0] == doctest::Approx(0.34981251445236233).epsilon(1e-13));
  CHECK(b.normal[1] == doctest::Approx(0.55006249518254591).epsilon(1e-13));
  CHECK(b.normal[2] == doctest::Approx(0.30012499036509177).epsilon(1e-13));
  CHECK(b.offset == doctest::Approx(0.33495625337221785).epsilon(1e-13));

  const auto nn = b.inslice_normal();
  CHECK(nn[0] == doctest::Approx(0.55006249518254591).epsilon(1e-13));
  CHECK(nn[1] == doctest::Approx(0.30012499036509177).epsilon(1e-13));
  CHECK(b.inslice_offset() == doctest::Approx(0.19503124759127291).epsilon(1e-13));

  const PhaseBoundary no_slice = boundary(fig3_context(), cfg.weights, cfg.vocabulary);
  CHECK_THROWS_AS(no_slice.inslice_normal(), std::invalid_argument);
  CHECK_THROWS_AS(no_slice.inslice_offset(), std::invalid_argument);
}

TEST_CASE("boundary requires a non-empty good set at call time") {
  // every token good: offset is the max over all tokens, classification still works
  const ModelConfig cfg = fig2_config();
  const ContextVector n = evaluate_context(prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights);
  const PhaseBoundary b = boundary(n, cfg.weights, cfg.vocabulary);
  CHECK(b.offset == doctest::Approx(2.8615936329955054).epsilon(1e-13));
}

TEST_CASE("grid classes agree with the analytic half-plane") {
  const ModelConfig cfg = fig3_config();
  const ContextVector n = fig3_context();
  const SliceSpec slice = small_slice(41);
  const PhaseGrid grid = sweep_slice(slice, n, cfg.weights, cfg.vocabulary);

  REQUIRE(grid.cells.size() == 41u * 41u);
  std::size_t bad = 0;
  for (int i0 = 0; i0 < 41; ++i0)
    for (int i1 = 0; i1 < 41; ++i1) {
      const Vector x = slice.point(slice.coord0(i0), slice.coord1(i1));
      const TokenClass expect =
          grid.line.normal.dot(x) > grid.line.offset ? TokenClass::Bad : TokenClass::Good;
      CHECK(grid.at(i0, i1) == expect);
      if (grid.at(i0, i1) == TokenClass::Bad) ++bad;
    }
  CHECK(bad > 0);
  CHECK(bad < grid.cells.size());
  CHECK_FALSE(grid.prompt_token_sweep);
}

TEST_CASE("sweep output is independent of the thread cap") {
  const ModelConfig cfg = fig3_config();
  const ContextVector n = fig3_context();
  const SliceSpec slice = small_slice(33);

  setenv("ATTN_SPINLAB_THREADS", "1", 1);
  const PhaseGrid serial = sweep_slice(slice, n, cfg.weights, cfg.vocabulary);
  setenv("ATTN_SPINLAB_THREADS", "7", 1);
  const PhaseGrid parallel = sweep_slice(slice, n, cfg.weights, cfg.vocabulary);
  unsetenv("ATTN_SPINLAB_THREADS");

  CHECK(serial.cells == parallel.cells);
  CHECK(grid_csv(serial) == grid_csv(parallel));
}

TEST_CASE("thread cap parsing") {
  setenv("ATTN_SPINLAB_THREADS", "3", 1);
  CHECK(sweep_thread_cap() == 3);
  setenv("ATTN_SPINLAB_THREADS", "0", 1);
  CHECK(sweep_thread_cap() == 1);
  setenv("ATTN_SPINLAB_THREADS", "soup", 1);
  CHECK(sweep_thread_cap() == 1);
  unsetenv("ATTN_SPINLAB_THREADS");
  CHECK(sweep_thread_cap() >= 1);
}

TEST_CASE("prompt-token sweep re-evaluates the context per cell") {
  const ModelConfig cfg = fig3_config();
  const SliceSpec slice = small_slice(5);
  const PhaseGrid grid =
      sweep_prompt_token(slice, "ARE", cfg.prompt, cfg.vocabulary, cfg.weights);
  CHECK(grid.prompt_token_sweep);

  // recompute one cell by hand
  const int i0 = 3, i1 = 1;
  const Vector x = slice.point(slice.coord0(i0), slice.coord1(i1));
  Matrix spins = prompt_spins(cfg.prompt, cfg.vocabulary);
  spins.row(1) = x.transpose();  // prompt is THEY, ARE
  const ContextVector n = evaluate_context(spins, cfg.weights);
  CHECK(grid.at(i0, i1) == classify_bad_token(x, n, cfg.weights, cfg.vocabulary));

  CHECK_THROWS_AS(sweep_prompt_token(slice, "EVIL", cfg.prompt, cfg.vocabulary, cfg.weights),
                  std::invalid_argument);
  CHECK_THROWS_AS(sweep_prompt_token(slice, "nope", cfg.prompt, cfg.vocabulary, cfg.weights),
                  std::invalid_argument);
}

TEST_CASE("boundary rotation: frozen angles under the interaction bias") {
  const ModelConfig cfg = fig3_config();
  const Matrix spins = prompt_spins(cfg.prompt, cfg.vocabulary);
  const Matrix delta = fig4a_delta();

  std::vector<PhaseBoundary> boundaries;
  for (double xi : fig4a_xis()) {
    const ContextVector n = biased_context_exact(spins, cfg.weights, {xi, delta});
    boundaries.push_back(boundary(n, cfg.weights, cfg.vocabulary, fig3_slice()));
  }
  const auto angles = boundary_rotation(boundaries);
  REQUIRE(angles.size() == 3);
  CHECK(angles[0] == 0.0);
  CHECK(angles[1] == doctest::Approx(0.045423221182577425).epsilon(1e-12));
  CHECK(angles[2] == doctest::Approx(0.092648053706164704).epsilon(1e-12));
  CHECK(angles[1] > angles[0]);
  CHECK(angles[2] > angles[1]);

  // frozen offsets of the rotated boundaries
  CHECK(boundaries[1].offset == doctest::Approx(0.33877205644789793).epsilon(1e-13));
  CHECK(boundaries[2].offset == doctest::Approx(0.34258941569626072).epsilon(1e-13));
}

TEST_CASE("boundary rotation validation") {
  const ModelConfig cfg = fig3_config();
  const PhaseBoundary with_slice =
      boundary(fig3_context(), cfg.weights, cfg.vocabulary, fig3_slice());
  const PhaseBoundary without = boundary(fig3_context(), cfg.weights, cfg.vocabulary);

  CHECK_THROWS_AS(boundary_rotation({with_slice}), std::invalid_argument);
  CHECK_THROWS_AS(boundary_rotation({with_slice, without}), std::invalid_argument);

  PhaseBoundary degenerate = with_slice;
  degenerate.normal = Vector::Zero(3);
  degenerate.normal[0] = 1.0;  // in-slice part (coords 1, 2) vanishes
  CHECK_THROWS_AS(boundary_rotation({degenerate, with_slice}), std::invalid_argument);

  PhaseBoundary other_axes = with_slice;
  other_axes.slice->axes = {0, 2};
  CHECK_THROWS_AS(boundary_rotation({with_slice, other_axes}), std::invalid_argument);

  const auto self = boundary_rotation({with_slice, with_slice});
  CHECK(self[1] == 0.0);
}

TEST_CASE("fitted transition line matches the analytic boundary") {
  const ModelConfig cfg = fig3_config();
  const ContextVector n = fig3_context();
  const FittedLine fit = fit_boundary_line(small_slice(101), n, cfg.weights, cfg.vocabulary);
  CHECK(fit.points >= 30);

  const PhaseBoundary analytic =
      boundary(n, cfg.weights, cfg.vocabulary, fig3_slice());
  const auto an = analytic.inslice_normal();
  const double len = std::hypot(an[0], an[1]);
  const double cosine = (fit.normal[0] * an[0] + fit.normal[1] * an[1]) / len;
  CHECK(cosine >= 1.0 - 1e-10);
  CHECK(fit.offset == doctest::Approx(analytic.inslice_offset() / len).epsilon(1e-9));
}

TEST_CASE("grid csv layout") {
  const ModelConfig cfg = fig3_config();
  const PhaseGrid grid = sweep_slice(small_slice(3), fig3_context(), cfg.weights,
                                     cfg.vocabulary);
  const std::string csv = grid_csv(grid);
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "e2,e3,class");
  std::size_t rows = 0;
  std::string first_row, last_row;
  while (std::getline(ss, line)) {
    if (rows == 0) first_row = line;
    last_row = line;
    ++rows;
  }
  CHECK(rows == 9);
  CHECK(first_row == "0,0,Good");
  CHECK(last_row == "1,1,Bad");
}

TEST_CASE("boundary and grid json parse") {
  const ModelConfig cfg = fig3_config();
  const PhaseGrid grid = sweep_slice(small_slice(3), fig3_context(), cfg.weights,
                                     cfg.vocabulary);
  const auto bj = nlohmann::json::parse(boundary_json(grid.line));
  CHECK(bj["normal"].size() == 3);
  CHECK(bj["slice"]["axes"] == nlohmann::json::array({2, 3}));
  CHECK(bj["inslice_offset"].get<double>() ==
        doctest::Approx(0.19503124759127291).epsilon(1e-13));

  const auto gj = nlohmann::json::parse(grid_json(grid));
  CHECK(gj["class"].size() == 9);
  CHECK(gj["coord0"].size() == 3);
  CHECK(gj["prompt_token_sweep"] == false);
}
