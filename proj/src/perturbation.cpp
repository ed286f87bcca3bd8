#include "spinlab/perturbation.hpp"

#include "spinlab/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spinlab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_bias(const BiasSpec& bias, Eigen::Index d) {
  require(bias.delta.rows() == d && bias.delta.cols() == d,
          "bias: delta must match the spin dimension");
  require(bias.delta.allFinite() && std::isfinite(bias.xi), "bias: entries must be finite");
}

PEConfig checked_pe(const PEConfig& pe, Eigen::Index d) {
  PEConfig p = pe;
  p.enabled = true;
  validate_pe(p, d);
  return p;
}

void check_positions(const std::vector<int>& positions, Eigen::Index k) {
  require(static_cast<Eigen::Index>(positions.size()) == k,
          "pe: one position per prompt entry required");
  for (int p : positions) require(p >= 0, "pe: positions must be >= 0");
}

}  // namespace

Matrix biased_spins(const Matrix& spins, const BiasSpec& bias) {
  check_bias(bias, spins.cols());
  return spins * bias.mixing_matrix();
}

double biased_hamiltonian_linear(const Vector& s_j, const Vector& s_i,
                                 const WeightSet& weights, const BiasSpec& bias) {
  check_bias(bias, weights.dimension());
  const Matrix& w = weights.w_eff();
  const Matrix c = bias.delta * w - w * bias.delta;
  return hamiltonian(s_j, s_i, weights) - bias.xi * s_j.dot(c * s_i);
}

ContextVector biased_context_exact(const Matrix& spins, const WeightSet& weights,
                                   const BiasSpec& bias) {
  return evaluate_context(biased_spins(spins, bias), weights);
}

ContextVector biased_context_linear(const Matrix& spins, const WeightSet& weights,
                                    const BiasSpec& bias) {
  check_bias(bias, spins.cols());
  const Eigen::Index k = spins.rows();
  const Matrix& w = weights.w_eff();
  const Matrix c = bias.delta * w - w * bias.delta;

  const EnsembleWeights ensemble = boltzmann_weights(attention_scores(spins, weights));
  const Vector n0 = context_vector(ensemble, spins).n;

  Vector response = Vector::Zero(spins.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    const Vector s_j = spins.row(j).transpose();
    const Vector m_j = mean_spin(j, ensemble, spins);
    for (Eigen::Index i = 0; i < k; ++i) {
      const Vector s_i = spins.row(i).transpose();
      const double g = s_j.dot(c * (s_i - m_j));
      response += ensemble.sigma(j, i) * g * s_i;
    }
  }
  Vector n = n0 + bias.xi * (bias.delta.transpose() * n0) +
             bias.xi * weights.score_scale() * response;
  return ContextVector{std::move(n)};
}

Vector sinusoidal_pe(int position, Eigen::Index dimension, double base) {
  require(dimension >= 2 && dimension % 2 == 0, "pe: dimension must be even (>= 2)");
  require(position >= 0, "pe: position must be >= 0");
  require(std::isfinite(base) && base > 0.0, "pe: base must be > 0");
  Vector v(dimension);
  for (Eigen::Index m = 0; m < dimension / 2; ++m) {
    const double arg = position / std::pow(base, (2.0 * static_cast<double>(m)) /
                                                     static_cast<double>(dimension));
    v[2 * m] = std::sin(arg);
    v[2 * m + 1] = std::cos(arg);
  }
  return v;
}

Matrix pe_rows(const std::vector<int>& positions, Eigen::Index dimension, double base) {
  require(!positions.empty(), "pe: positions must not be empty");
  Matrix p(static_cast<Eigen::Index>(positions.size()), dimension);
  for (std::size_t r = 0; r < positions.size(); ++r)
    p.row(static_cast<Eigen::Index>(r)) = sinusoidal_pe(positions[r], dimension, base).transpose();
  return p;
}

Matrix pe_combine(const Matrix& spins, const std::vector<int>& positions, const PEConfig& pe) {
  const PEConfig p = checked_pe(pe, spins.cols());
  check_positions(positions, spins.rows());
  const Matrix enc = pe_rows(positions, spins.cols(), p.base);
  return (1.0 - p.y) * spins + p.y * enc;
}

ContextVector pe_context_exact(const Matrix& spins, const std::vector<int>& positions,
                               const WeightSet& weights, const PEConfig& pe) {
  return evaluate_context(pe_combine(spins, positions, pe), weights);
}

ContextVector pe_context_linear(const Matrix& spins, const std::vector<int>& positions,
                                const WeightSet& weights, const PEConfig& pe) {
  const PEConfig cfg = checked_pe(pe, spins.cols());
  check_positions(positions, spins.rows());
  const Eigen::Index k = spins.rows();
  const Matrix& w = weights.w_eff();
  const Matrix enc = pe_rows(positions, spins.cols(), cfg.base);

  const EnsembleWeights ensemble = boltzmann_weights(attention_scores(spins, weights));
  const Vector n0 = context_vector(ensemble, spins).n;

  Vector pbar_total = Vector::Zero(spins.cols());
  Vector response = Vector::Zero(spins.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    const Vector s_j = spins.row(j).transpose();
    const Vector p_j = enc.row(j).transpose();
    const Vector m_j = mean_spin(j, ensemble, spins);
    Vector pbar_j = Vector::Zero(spins.cols());
    for (Eigen::Index i = 0; i < k; ++i)
      pbar_j += ensemble.sigma(j, i) * enc.row(i).transpose();
    pbar_total += pbar_j;
    for (Eigen::Index i = 0; i < k; ++i) {
      const Vector s_i = spins.row(i).transpose();
      const Vector p_i = enc.row(i).transpose();
      const double g = (p_j - 2.0 * s_j).dot(w * (s_i - m_j)) + s_j.dot(w * (p_i - pbar_j));
      response += ensemble.sigma(j, i) * g * s_i;
    }
  }
  Vector n = (1.0 - cfg.y) * n0 + cfg.y * pbar_total + cfg.y * weights.score_scale() * response;
  return ContextVector{std::move(n)};
}

double pe_hamiltonian_exact(const Vector& s_j, const Vector& s_i, const Vector& p_j,
                            const Vector& p_i, const WeightSet& weights, const PEConfig& pe) {
  require(s_j.size() == weights.dimension() && s_i.size() == weights.dimension() &&
              p_j.size() == weights.dimension() && p_i.size() == weights.dimension(),
          "pe: pair dimensions must match the weights");
  const Vector x_j = (1.0 - pe.y) * s_j + pe.y * p_j;
  const Vector x_i = (1.0 - pe.y) * s_i + pe.y * p_i;
  return -pair_score(x_j, x_i, weights.w_eff());
}

double pe_cos_sum(int pos_j, int pos_i, Eigen::Index dimension, double base) {
  require(dimension >= 2 && dimension % 2 == 0, "pe: dimension must be even (>= 2)");
  const double gap = static_cast<double>(pos_j) - static_cast<double>(pos_i);
  double acc = 0.0;
  for (Eigen::Index m = 0; m < dimension / 2; ++m)
    acc += std::cos(gap / std::pow(base, (2.0 * static_cast<double>(m)) /
                                             static_cast<double>(dimension)));
  return acc;
}

double pe_hamiltonian_closed_form(const Vector& s_j, const Vector& s_i, int pos_j, int pos_i,
                                  const WeightSet& weights, const PEConfig& pe) {
  const PEConfig cfg = checked_pe(pe, weights.dimension());
  const Vector p_j = sinusoidal_pe(pos_j, weights.dimension(), cfg.base);
  const Vector p_i = sinusoidal_pe(pos_i, weights.dimension(), cfg.base);
  const Matrix& w = weights.w_eff();
  const double h0 = hamiltonian(s_j, s_i, weights);
  const double cross = p_j.dot(w * s_i) + s_j.dot(w * p_i);
  const double y = cfg.y;
  return (1.0 - y) * (1.0 - y) * h0 - y * (1.0 - y) * cross -
         y * y * pe_cos_sum(pos_j, pos_i, weights.dimension(), cfg.base);
}

ConvergenceFit convergence_order(const std::function<Vector(double)>& exact,
                                 const std::function<Vector(double)>& approx,
                                 const std::vector<double>& parameters) {
  require(!parameters.empty(), "convergence: at least one parameter value required");
  for (double p : parameters)
    require(std::isfinite(p) && p > 0.0, "convergence: parameters must be positive");

  ConvergenceFit fit;
  double max_dev = 0.0;
  for (double p : parameters) {
    const double dev = (exact(p) - approx(p)).norm();
    fit.deviations.emplace_back(p, dev);
    max_dev = std::max(max_dev, dev);
  }
  if (max_dev == 0.0) {
    fit.exact_match = true;
    return fit;
  }
  for (const auto& [p, dev] : fit.deviations)
    require(dev > 0.0, "convergence: deviation vanished at parameter " + format_double(p) +
                           " while others did not");
  if (fit.deviations.size() >= 3) {
    // least squares on the log-log points
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(fit.deviations.size());
    for (const auto& [p, dev] : fit.deviations) {
      const double lx = std::log(p), ly = std::log(dev);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return fit;
}

PerturbationReport bias_report(const Matrix& spins, const WeightSet& weights,
                               const Matrix& delta, const std::vector<double>& xis) {
  require(!xis.empty(), "bias report: at least one xi required");
  PerturbationReport rep;
  rep.mode = "bias";
  rep.parameter_name = "xi";
  rep.evaluated_at = *std::max_element(xis.begin(), xis.end());
  rep.delta_antisymmetry_defect = BiasSpec{1.0, delta}.antisymmetry_defect();

  auto exact = [&](double xi) { return biased_context_exact(spins, weights, {xi, delta}).n; };
  auto linear = [&](double xi) { return biased_context_linear(spins, weights, {xi, delta}).n; };
  rep.exact_context = exact(rep.evaluated_at);
  rep.linear_context = linear(rep.evaluated_at);
  rep.abs_deviation = (rep.exact_context - rep.linear_context).norm();
  const double scale = rep.exact_context.norm();
  rep.rel_deviation = scale > 0.0 ? rep.abs_deviation / scale : rep.abs_deviation;
  rep.fit = convergence_order(exact, linear, xis);
  return rep;
}

PerturbationReport pe_report(const Matrix& spins, const std::vector<int>& positions,
                             const WeightSet& weights, const PEConfig& pe,
                             const std::vector<double>& ys) {
  require(!ys.empty(), "pe report: at least one y required");
  const PEConfig cfg = checked_pe(pe, spins.cols());
  check_positions(positions, spins.rows());

  PerturbationReport rep;
  rep.mode = "pe";
  rep.parameter_name = "y";
  rep.evaluated_at = *std::max_element(ys.begin(), ys.end());

  auto with_y = [&](double y) {
    PEConfig c = cfg;
    c.y = y;
    return c;
  };
  auto exact = [&](double y) { return pe_context_exact(spins, positions, weights, with_y(y)).n; };
  auto linear = [&](double y) {
    return pe_context_linear(spins, positions, weights, with_y(y)).n;
  };
  rep.exact_context = exact(rep.evaluated_at);
  rep.linear_context = linear(rep.evaluated_at);
  rep.abs_deviation = (rep.exact_context - rep.linear_context).norm();
  const double scale = rep.exact_context.norm();
  rep.rel_deviation = scale > 0.0 ? rep.abs_deviation / scale : rep.abs_deviation;
  rep.fit = convergence_order(exact, linear, ys);

  // energy closed form vs direct evaluation over the prompt's position pairs
  const PEConfig at_eval = with_y(rep.evaluated_at);
  const Matrix enc = pe_rows(positions, spins.cols(), cfg.base);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < spins.rows(); ++j)
    for (Eigen::Index i = 0; i < spins.rows(); ++i) {
      const double direct =
          pe_hamiltonian_exact(spins.row(j).transpose(), spins.row(i).transpose(),
                               enc.row(j).transpose(), enc.row(i).transpose(), weights, at_eval);
      const double closed = pe_hamiltonian_closed_form(
          spins.row(j).transpose(), spins.row(i).transpose(),
          positions[static_cast<std::size_t>(j)], positions[static_cast<std::size_t>(i)],
          weights, at_eval);
      worst = std::max(worst, std::abs(direct - closed));
    }
  rep.closed_form_max_residual = worst;
  return rep;
}

std::string perturbation_report_json(const PerturbationReport& report) {
  Json j;
  j["mode"] = report.mode;
  j["parameter"] = report.parameter_name;
  j["evaluated_at"] = report.evaluated_at;
  j["exact_context"] = to_json(report.exact_context);
  j["linear_context"] = to_json(report.linear_context);
  j["abs_deviation"] = report.abs_deviation;
  j["rel_deviation"] = report.rel_deviation;
  Json devs = Json::array();
  for (const auto& [p, dev] : report.fit.deviations)
    devs.push_back(Json{{report.parameter_name, p}, {"deviation", dev}});
  j["deviations"] = std::move(devs);
  j["exact_match"] = report.fit.exact_match;
  if (report.fit.slope)
    j["convergence_slope"] = *report.fit.slope;
  else
    j["convergence_slope"] = nullptr;
  if (report.mode == "bias") j["delta_antisymmetry_defect"] = report.delta_antisymmetry_defect;
  if (report.mode == "pe") j["closed_form_max_residual"] = report.closed_form_max_residual;
  return j.dump(2) + "\n";
}

}  // namespace spinlab
