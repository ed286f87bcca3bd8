#pragma once

#include "spinlab/attention_engine.hpp"
#include "spinlab/core_model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace spinlab {

// ---- interaction bias ----

// Exact route: each spin row becomes s (I + xi*delta).
Matrix biased_spins(const Matrix& spins, const BiasSpec& bias);

// First order in xi: H - xi * s_j . (delta W_eff - W_eff delta) . s_i.
double biased_hamiltonian_linear(const Vector& s_j, const Vector& s_i,
                                 const WeightSet& weights, const BiasSpec& bias);

// Full pipeline on the biased spins.
ContextVector biased_context_exact(const Matrix& spins, const WeightSet& weights,
                                   const BiasSpec& bias);

// First-order context: n + xi*delta^T n + xi*scale * sum_{j,i} sigma(j,i)
// [s_j . C . (s_i - <s>_j)] s_i with C = delta W_eff - W_eff delta. The
// score scale multiplies the ensemble-response term so this stays the true
// linearization at any scale.
ContextVector biased_context_linear(const Matrix& spins, const WeightSet& weights,
                                    const BiasSpec& bias);

// ---- positional encodings ----

// Interleaved sinusoid: component 2m = sin(pos / base^{2m/d}),
// component 2m+1 = cos(pos / base^{2m/d}). Requires even d, pos >= 0.
Vector sinusoidal_pe(int position, Eigen::Index dimension, double base);

// Stacked encodings for a run of positions, one row each.
Matrix pe_rows(const std::vector<int>& positions, Eigen::Index dimension, double base);

// Mixed inputs (1-y) s_i + y p_i, one row per prompt entry.
Matrix pe_combine(const Matrix& spins, const std::vector<int>& positions, const PEConfig& pe);

// Full pipeline on the mixed inputs.
ContextVector pe_context_exact(const Matrix& spins, const std::vector<int>& positions,
                               const WeightSet& weights, const PEConfig& pe);

// First order in y: (1-y) n + y sum_j <p>_j + y*scale * sum_{j,i} sigma(j,i)
// [(p_j - 2 s_j) . W_eff . (s_i - <s>_j) + s_j . W_eff . (p_i - <p>_j)] s_i,
// where <p>_j is the ensemble average of the encodings under the
// unperturbed weights.
ContextVector pe_context_linear(const Matrix& spins, const std::vector<int>& positions,
                                const WeightSet& weights, const PEConfig& pe);

// Energy of the mixed pair: -[(1-y)s_j + y p_j] . W_eff . [(1-y)s_i + y p_i].
double pe_hamiltonian_exact(const Vector& s_j, const Vector& s_i, const Vector& p_j,
                            const Vector& p_i, const WeightSet& weights, const PEConfig& pe);

// sum_m cos((pos_j - pos_i) / base^{2m/d}) over the d/2 sinusoid frequencies.
double pe_cos_sum(int pos_j, int pos_i, Eigen::Index dimension, double base);

// Expanded form (1-y)^2 H - y(1-y)(p_j.W.s_i + s_j.W.p_i) - y^2 * cos-sum.
// Coincides with pe_hamiltonian_exact when W_eff is the identity; for other
// W_eff report the residual instead of assuming it.
double pe_hamiltonian_closed_form(const Vector& s_j, const Vector& s_i, int pos_j, int pos_i,
                                  const WeightSet& weights, const PEConfig& pe);

// ---- convergence measurement ----

struct ConvergenceFit {
  bool exact_match = false;                          // all deviations are exactly zero
  std::vector<std::pair<double, double>> deviations;  // (parameter, ||exact - approx||_2)
  std::optional<double> slope;                        // log-log fit, needs >= 3 points
};

// Deviation of approx from exact across parameter values; the fitted
// log-log slope is the empirical convergence order.
ConvergenceFit convergence_order(const std::function<Vector(double)>& exact,
                                 const std::function<Vector(double)>& approx,
                                 const std::vector<double>& parameters);

// ---- user-facing reports ----

struct PerturbationReport {
  std::string mode;                // "bias" or "pe"
  std::string parameter_name;      // "xi" or "y"
  double evaluated_at = 0.0;       // largest requested parameter
  Vector exact_context;
  Vector linear_context;
  double abs_deviation = 0.0;      // at evaluated_at
  double rel_deviation = 0.0;
  ConvergenceFit fit;
  double delta_antisymmetry_defect = 0.0;   // bias mode
  double closed_form_max_residual = 0.0;    // pe mode, over prompt position pairs
};

PerturbationReport bias_report(const Matrix& spins, const WeightSet& weights,
                               const Matrix& delta, const std::vector<double>& xis);

PerturbationReport pe_report(const Matrix& spins, const std::vector<int>& positions,
                             const WeightSet& weights, const PEConfig& pe,
                             const std::vector<double>& ys);

std::string perturbation_report_json(const PerturbationReport& report);

}  // namespace spinlab
