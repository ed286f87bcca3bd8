#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spinlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A vocabulary token: a text label plus its spin (embedding) vector.
struct TokenEmbedding {
  std::string label;
  Vector spin;
};

// Immutable token table. Validates on construction:
// non-empty, unique labels, equal spin dimensions, finite entries,
// good-set indices in range.
class Vocabulary {
 public:
  Vocabulary(std::vector<TokenEmbedding> tokens, std::vector<std::size_t> good_set);

  std::size_t size() const { return tokens_.size(); }
  Eigen::Index dimension() const { return dim_; }

  const TokenEmbedding& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<TokenEmbedding>& tokens() const { return tokens_; }

  std::optional<std::size_t> index_of(std::string_view label) const;

  bool is_good(std::size_t i) const;
  const std::vector<std::size_t>& good_indices() const { return good_; }
  std::vector<std::size_t> bad_indices() const;

 private:
  std::vector<TokenEmbedding> tokens_;
  std::vector<std::size_t> good_;  // sorted, unique
  Eigen::Index dim_ = 0;
};

// Query/key/value maps. w_eff() = w_q * w_k^T couples spin pairs in the
// interaction energy; score_scale multiplies interaction scores only.
class WeightSet {
 public:
  WeightSet(Matrix w_q, Matrix w_k, Matrix w_v, double score_scale = 1.0);

  const Matrix& w_q() const { return w_q_; }
  const Matrix& w_k() const { return w_k_; }
  const Matrix& w_v() const { return w_v_; }
  const Matrix& w_eff() const { return w_eff_; }
  double score_scale() const { return scale_; }
  Eigen::Index dimension() const { return w_q_.rows(); }
  bool is_identity() const;

 private:
  Matrix w_q_, w_k_, w_v_, w_eff_;
  double scale_;
};

WeightSet identity_weights(Eigen::Index dimension, double score_scale = 1.0);

// Ordered token positions into a vocabulary.
struct Prompt {
  std::vector<std::size_t> indices;

  std::size_t length() const { return indices.size(); }
};

// Resolves labels to indices; throws on unknown label or empty prompt.
Prompt make_prompt(const Vocabulary& vocab, const std::vector<std::string>& labels);

// Stacks prompt spins as rows of a (length x dimension) matrix.
Matrix prompt_spins(const Prompt& prompt, const Vocabulary& vocab);

// Interaction perturbation W_eff -> W_eff (I + xi*delta), equivalently spins
// s -> s (I + xi*delta) applied on the right. delta is expected antisymmetric
// for the first-order energy form to hold; callers can check the defect.
struct BiasSpec {
  double xi = 0.0;
  Matrix delta;

  double antisymmetry_defect() const;  // max |delta + delta^T| entry
  bool is_antisymmetric(double tol = 1e-12) const { return antisymmetry_defect() <= tol; }
  Matrix mixing_matrix() const;  // I + xi*delta
};

// Positional-encoding mix: inputs become (1-y)*spin + y*pe(position).
// first_position is the position assigned to the first prompt token;
// later tokens (including generated ones) count up from it.
struct PEConfig {
  bool enabled = false;
  double y = 0.0;
  double base = 10000.0;
  int first_position = 1;
};

// Throws when an enabled config is unusable: odd or zero dimension,
// y outside [0, 1), base <= 0, negative first_position.
void validate_pe(const PEConfig& pe, Eigen::Index dimension);

// One experiment definition: everything a run needs.
struct ModelConfig {
  Vocabulary vocabulary;
  WeightSet weights;
  Prompt prompt;
  std::optional<BiasSpec> bias;
  std::optional<PEConfig> pe;
};

// JSON schema (keys in parentheses optional):
//   dimension: int >= 1
//   tokens: [{label, spin:[...]}, ...]
//   (good_set): [labels]      default: every token
//   prompt: [labels]
//   (weights): "identity" | {w_q:[[..]], w_k:[[..]], w_v:[[..]]}
//   (score_scale): number > 0
//   (bias): {xi, delta:[[..]]}
//   (pe): {enabled, y, (base), (first_position)}
ModelConfig parse_config(const std::string& json_text);
ModelConfig load_config(const std::string& path);
std::string serialize_config(const ModelConfig& config);
void save_config(const ModelConfig& config, const std::string& path);

}  // namespace spinlab
