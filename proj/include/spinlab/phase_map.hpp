#pragma once

#include "spinlab/attention_engine.hpp"
#include "spinlab/core_model.hpp"
#include "spinlab/text_io.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace spinlab {

enum class TokenClass { Good, Bad };

// A 2D slice through embedding space: two free coordinate axes swept over
// [lo, hi] inclusive grids, all other coordinates pinned to `fixed`.
struct SliceSpec {
  Vector fixed;                       // size d; entries on the free axes are ignored
  std::array<Eigen::Index, 2> axes;   // distinct 0-based coordinate indices
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<int, 2> resolution{201, 201};

  Vector point(double u, double v) const;  // fixed with axes set to (u, v)
  double coord0(int i) const;              // grid coordinate along axes[0]
  double coord1(int i) const;
};

void validate_slice(const SliceSpec& slice, Eigen::Index dimension);

// Half-plane separating Bad from Good candidates: a token at x is Bad when
// normal . x > offset, where normal = W_v^T n and offset is the largest
// good-token logit.
struct PhaseBoundary {
  Vector normal;
  double offset = 0.0;
  std::optional<SliceSpec> slice;

  std::array<double, 2> inslice_normal() const;  // requires slice
  double inslice_offset() const;
};

// Compares the candidate's logit against the best good-token logit.
// Equality counts as Good.
TokenClass classify_bad_token(const Vector& x, const ContextVector& context,
                              const WeightSet& weights, const Vocabulary& vocab);

PhaseBoundary boundary(const ContextVector& context, const WeightSet& weights,
                       const Vocabulary& vocab, std::optional<SliceSpec> slice = {});

struct PhaseGrid {
  SliceSpec slice;
  std::vector<TokenClass> cells;  // row-major: index = i0 * resolution[1] + i1
  PhaseBoundary line;             // analytic boundary on the same slice
  bool prompt_token_sweep = false;

  TokenClass at(int i0, int i1) const;
};

// Classifies every grid point of the slice against a fixed context.
// Rows are distributed over up to sweep_thread_cap() threads; the output is
// identical regardless of thread count.
PhaseGrid sweep_slice(const SliceSpec& slice, const ContextVector& context,
                      const WeightSet& weights, const Vocabulary& vocab);

// Slow path for sweeping a token that occurs in the prompt: every grid point
// re-evaluates the context with that token's spin moved to the grid point.
// The attached line still describes the nominal (unmoved) context.
PhaseGrid sweep_prompt_token(const SliceSpec& slice, const std::string& label,
                             const Prompt& prompt, const Vocabulary& vocab,
                             const WeightSet& weights);

// Signed in-plane angle of each boundary's in-slice normal relative to the
// first one (counterclockwise positive). All boundaries must carry the same
// slice axes and a nonzero in-slice normal.
std::vector<double> boundary_rotation(const std::vector<PhaseBoundary>& boundaries);

// Line fitted to the empirical Good/Bad transition of a slice: per column of
// the grid, the zero crossing of the candidate-vs-good logit margin is
// interpolated, then a total-least-squares line goes through the crossings.
struct FittedLine {
  std::array<double, 2> normal;  // unit length, oriented like the analytic normal
  double offset = 0.0;
  std::size_t points = 0;
};

FittedLine fit_boundary_line(const SliceSpec& slice, const ContextVector& context,
                             const WeightSet& weights, const Vocabulary& vocab);

// ATTN_SPINLAB_THREADS, else std::thread::hardware_concurrency().
int sweep_thread_cap();

// Columns: e<axes0+1>,e<axes1+1>,class with rows in i0-major order.
std::string grid_csv(const PhaseGrid& grid);

// Columnar JSON form of the same grid (classes in i0-major order).
std::string grid_json(const PhaseGrid& grid);

Json boundary_to_json(const PhaseBoundary& boundary);
std::string boundary_json(const PhaseBoundary& boundary);

}  // namespace spinlab
