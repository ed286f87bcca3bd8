#include "spinlab/phase_map.hpp"

#include "spinlab/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <thread>

namespace spinlab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double grid_coord(double lo, double hi, int i, int res) {
  return lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(res - 1));
}

// splits [0, n) into roughly equal chunks and runs fn(begin, end) on each
void parallel_chunks(int n, int threads, const std::function<void(int, int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& th : pool) th.join();
}

double good_offset(const Vector& r, const Vocabulary& vocab) {
  require(!vocab.good_indices().empty(), "phase map: good set must not be empty");
  bool first = true;
  double best = 0.0;
  for (std::size_t i : vocab.good_indices()) {
    const double logit = r.dot(vocab.token(i).spin);
    if (first || logit > best) {
      best = logit;
      first = false;
    }
  }
  return best;
}

}  // namespace

Vector SliceSpec::point(double u, double v) const {
  Vector x = fixed;
  x[axes[0]] = u;
  x[axes[1]] = v;
  return x;
}

double SliceSpec::coord0(int i) const { return grid_coord(lo[0], hi[0], i, resolution[0]); }
double SliceSpec::coord1(int i) const { return grid_coord(lo[1], hi[1], i, resolution[1]); }

void validate_slice(const SliceSpec& slice, Eigen::Index dimension) {
  require(slice.fixed.size() == dimension, "slice: fixed point must match dimension");
  require(slice.fixed.allFinite(), "slice: fixed point must be finite");
  require(slice.axes[0] != slice.axes[1], "slice: axes must be distinct");
  for (auto a : slice.axes) require(a >= 0 && a < dimension, "slice: axis out of range");
  for (int r : slice.resolution) require(r >= 2, "slice: resolution must be >= 2 per axis");
  for (int s = 0; s < 2; ++s) {
    require(std::isfinite(slice.lo[s]) && std::isfinite(slice.hi[s]) && slice.lo[s] < slice.hi[s],
            "slice: need lo < hi on both axes");
  }
}

std::array<double, 2> PhaseBoundary::inslice_normal() const {
  require(slice.has_value(), "boundary: no slice attached");
  return {normal[slice->axes[0]], normal[slice->axes[1]]};
}

double PhaseBoundary::inslice_offset() const {
  require(slice.has_value(), "boundary: no slice attached");
  double off = offset;
  for (Eigen::Index c = 0; c < normal.size(); ++c) {
    if (c == slice->axes[0] || c == slice->axes[1]) continue;
    off -= normal[c] * slice->fixed[c];
  }
  return off;
}

TokenClass classify_bad_token(const Vector& x, const ContextVector& context,
                              const WeightSet& weights, const Vocabulary& vocab) {
  const Vector r = logit_row(context, weights);
  require(x.size() == r.size(), "classify: candidate dimension mismatch");
  return r.dot(x) > good_offset(r, vocab) ? TokenClass::Bad : TokenClass::Good;
}

PhaseBoundary boundary(const ContextVector& context, const WeightSet& weights,
                       const Vocabulary& vocab, std::optional<SliceSpec> slice) {
  PhaseBoundary b;
  b.normal = logit_row(context, weights);
  b.offset = good_offset(b.normal, vocab);
  if (slice) {
    validate_slice(*slice, b.normal.size());
    b.slice = std::move(slice);
  }
  return b;
}

TokenClass PhaseGrid::at(int i0, int i1) const {
  return cells.at(static_cast<std::size_t>(i0) * static_cast<std::size_t>(slice.resolution[1]) +
                  static_cast<std::size_t>(i1));
}

int sweep_thread_cap() {
  if (const char* env = std::getenv("ATTN_SPINLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<int>(std::min(v, 256L));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

PhaseGrid sweep_slice(const SliceSpec& slice, const ContextVector& context,
                      const WeightSet& weights, const Vocabulary& vocab) {
  validate_slice(slice, vocab.dimension());
  PhaseGrid grid;
  grid.slice = slice;
  grid.line = boundary(context, weights, vocab, slice);
  grid.cells.assign(
      static_cast<std::size_t>(slice.resolution[0]) * static_cast<std::size_t>(slice.resolution[1]),
      TokenClass::Good);
  parallel_chunks(slice.resolution[0], sweep_thread_cap(), [&](int begin, int end) {
    for (int i0 = begin; i0 < end; ++i0) {
      const double u = slice.coord0(i0);
      for (int i1 = 0; i1 < slice.resolution[1]; ++i1) {
        grid.cells[static_cast<std::size_t>(i0) * static_cast<std::size_t>(slice.resolution[1]) +
                   static_cast<std::size_t>(i1)] =
            classify_bad_token(slice.point(u, slice.coord1(i1)), context, weights, vocab);
      }
    }
  });
  return grid;
}

PhaseGrid sweep_prompt_token(const SliceSpec& slice, const std::string& label,
                             const Prompt& prompt, const Vocabulary& vocab,
                             const WeightSet& weights) {
  validate_slice(slice, vocab.dimension());
  const auto target = vocab.index_of(label);
  require(target.has_value(), "sweep: unknown token label '" + label + "'");
  require(std::find(prompt.indices.begin(), prompt.indices.end(), *target) !=
              prompt.indices.end(),
          "sweep: token '" + label + "' does not occur in the prompt");

  const Matrix nominal = prompt_spins(prompt, vocab);
  PhaseGrid grid;
  grid.slice = slice;
  grid.prompt_token_sweep = true;
  grid.line = boundary(evaluate_context(nominal, weights), weights, vocab, slice);
  grid.cells.assign(
      static_cast<std::size_t>(slice.resolution[0]) * static_cast<std::size_t>(slice.resolution[1]),
      TokenClass::Good);
  parallel_chunks(slice.resolution[0], sweep_thread_cap(), [&](int begin, int end) {
    for (int i0 = begin; i0 < end; ++i0) {
      const double u = slice.coord0(i0);
      for (int i1 = 0; i1 < slice.resolution[1]; ++i1) {
        const Vector x = slice.point(u, slice.coord1(i1));
        Matrix spins = nominal;
        for (std::size_t r = 0; r < prompt.indices.size(); ++r)
          if (prompt.indices[r] == *target)
            spins.row(static_cast<Eigen::Index>(r)) = x.transpose();
        const ContextVector n = evaluate_context(spins, weights);
        grid.cells[static_cast<std::size_t>(i0) * static_cast<std::size_t>(slice.resolution[1]) +
                   static_cast<std::size_t>(i1)] = classify_bad_token(x, n, weights, vocab);
      }
    }
  });
  return grid;
}

std::vector<double> boundary_rotation(const std::vector<PhaseBoundary>& boundaries) {
  require(boundaries.size() >= 2, "rotation: need at least two boundaries");
  for (const auto& b : boundaries) {
    require(b.slice.has_value(), "rotation: every boundary needs a slice");
    require(b.slice->axes == boundaries.front().slice->axes,
            "rotation: boundaries must share slice axes");
  }
  const auto ref = boundaries.front().inslice_normal();
  require(std::hypot(ref[0], ref[1]) > 0.0, "rotation: degenerate in-slice normal");
  std::vector<double> angles;
  angles.reserve(boundaries.size());
  for (const auto& b : boundaries) {
    const auto n = b.inslice_normal();
    require(std::hypot(n[0], n[1]) > 0.0, "rotation: degenerate in-slice normal");
    angles.push_back(std::atan2(ref[0] * n[1] - ref[1] * n[0], ref[0] * n[0] + ref[1] * n[1]));
  }
  return angles;
}

FittedLine fit_boundary_line(const SliceSpec& slice, const ContextVector& context,
                             const WeightSet& weights, const Vocabulary& vocab) {
  validate_slice(slice, vocab.dimension());
  const PhaseBoundary analytic = boundary(context, weights, vocab, slice);
  const Vector r = analytic.normal;

  // interpolated zero crossings of the margin along axis 1, column by column
  std::vector<std::array<double, 2>> pts;
  for (int i0 = 0; i0 < slice.resolution[0]; ++i0) {
    const double u = slice.coord0(i0);
    double prev_margin = 0.0;
    for (int i1 = 0; i1 < slice.resolution[1]; ++i1) {
      const double v = slice.coord1(i1);
      const double margin = r.dot(slice.point(u, v)) - analytic.offset;
      if (i1 > 0 && ((prev_margin <= 0.0) != (margin <= 0.0))) {
        const double v_prev = slice.coord1(i1 - 1);
        const double v_star = v_prev + (0.0 - prev_margin) * (v - v_prev) / (margin - prev_margin);
        pts.push_back({u, v_star});
        break;
      }
      prev_margin = margin;
    }
  }
  require(pts.size() >= 2, "fit: fewer than two boundary crossings in the slice");

  // total least squares: normal is the small-eigenvalue direction of the scatter
  double cu = 0.0, cv = 0.0;
  for (const auto& p : pts) {
    cu += p[0];
    cv += p[1];
  }
  cu /= static_cast<double>(pts.size());
  cv /= static_cast<double>(pts.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const double du = p[0] - cu, dv = p[1] - cv;
    scatter(0, 0) += du * du;
    scatter(0, 1) += du * dv;
    scatter(1, 0) += du * dv;
    scatter(1, 1) += dv * dv;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  Eigen::Vector2d n = eig.eigenvectors().col(0);  // smallest eigenvalue first

  const auto aligned = analytic.inslice_normal();
  if (n[0] * aligned[0] + n[1] * aligned[1] < 0.0) n = -n;
  FittedLine fit;
  fit.normal = {n[0], n[1]};
  fit.offset = n[0] * cu + n[1] * cv;
  fit.points = pts.size();
  return fit;
}

std::string grid_csv(const PhaseGrid& grid) {
  const auto& s = grid.slice;
  std::string out = "e" + std::to_string(s.axes[0] + 1) + ",e" + std::to_string(s.axes[1] + 1) +
                    ",class\n";
  for (int i0 = 0; i0 < s.resolution[0]; ++i0) {
    const std::string u = format_double(s.coord0(i0));
    for (int i1 = 0; i1 < s.resolution[1]; ++i1) {
      out += u;
      out += ',';
      out += format_double(s.coord1(i1));
      out += ',';
      out += grid.at(i0, i1) == TokenClass::Bad ? "Bad" : "Good";
      out += '\n';
    }
  }
  return out;
}

std::string grid_json(const PhaseGrid& grid) {
  const auto& s = grid.slice;
  Json j;
  j["axes"] = Json::array({s.axes[0] + 1, s.axes[1] + 1});
  Json c0 = Json::array(), c1 = Json::array();
  for (int i = 0; i < s.resolution[0]; ++i) c0.push_back(s.coord0(i));
  for (int i = 0; i < s.resolution[1]; ++i) c1.push_back(s.coord1(i));
  j["coord0"] = std::move(c0);
  j["coord1"] = std::move(c1);
  Json classes = Json::array();
  for (TokenClass c : grid.cells) classes.push_back(c == TokenClass::Bad ? "Bad" : "Good");
  j["class"] = std::move(classes);
  j["prompt_token_sweep"] = grid.prompt_token_sweep;
  return j.dump(2) + "\n";
}

Json boundary_to_json(const PhaseBoundary& b) {
  Json j;
  j["normal"] = to_json(b.normal);
  j["offset"] = b.offset;
  if (b.slice) {
    Json s;
    s["axes"] = Json::array({b.slice->axes[0] + 1, b.slice->axes[1] + 1});  // 1-based, as in CSVs
    s["fixed"] = to_json(b.slice->fixed);
    s["lo"] = Json::array({b.slice->lo[0], b.slice->lo[1]});
    s["hi"] = Json::array({b.slice->hi[0], b.slice->hi[1]});
    s["resolution"] = Json::array({b.slice->resolution[0], b.slice->resolution[1]});
    j["slice"] = std::move(s);
    const auto n = b.inslice_normal();
    j["inslice_normal"] = Json::array({n[0], n[1]});
    j["inslice_offset"] = b.inslice_offset();
  } else {
    j["slice"] = nullptr;
  }
  return j;
}

std::string boundary_json(const PhaseBoundary& b) { return boundary_to_json(b).dump(2) + "\n"; }

}  // namespace spinlab
