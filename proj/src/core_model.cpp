#include "spinlab/core_model.hpp"

#include "spinlab/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace spinlab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix json_to_matrix(const Json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), what + ": expected non-empty array of rows");
  const std::size_t cols = j.at(0).is_array() ? j.at(0).size() : 0;
  require(cols > 0, what + ": rows must be non-empty arrays");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Json& row = j.at(r);
    require(row.is_array() && row.size() == cols, what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      require(row.at(c).is_number(), what + ": non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.at(c).get<double>();
    }
  }
  require(all_finite(m), what + ": entries must be finite");
  return m;
}

Vector json_to_vector(const Json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), what + ": expected non-empty numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j.at(i).is_number(), what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  }
  require(v.allFinite(), what + ": entries must be finite");
  return v;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<TokenEmbedding> tokens, std::vector<std::size_t> good_set)
    : tokens_(std::move(tokens)), good_(std::move(good_set)) {
  require(!tokens_.empty(), "vocabulary: needs at least one token");
  dim_ = tokens_.front().spin.size();
  require(dim_ >= 1, "vocabulary: spin dimension must be >= 1");
  std::set<std::string> seen;
  for (const auto& t : tokens_) {
    require(!t.label.empty(), "vocabulary: empty token label");
    require(seen.insert(t.label).second, "vocabulary: duplicate label '" + t.label + "'");
    require(t.spin.size() == dim_, "vocabulary: token '" + t.label + "' has mismatched dimension");
    require(t.spin.allFinite(), "vocabulary: token '" + t.label + "' has non-finite spin");
  }
  std::sort(good_.begin(), good_.end());
  good_.erase(std::unique(good_.begin(), good_.end()), good_.end());
  for (std::size_t i : good_)
    require(i < tokens_.size(), "vocabulary: good-set index out of range");
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i].label == label) return i;
  return std::nullopt;
}

bool Vocabulary::is_good(std::size_t i) const {
  return std::binary_search(good_.begin(), good_.end(), i);
}

std::vector<std::size_t> Vocabulary::bad_indices() const {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!is_good(i)) bad.push_back(i);
  return bad;
}

WeightSet::WeightSet(Matrix w_q, Matrix w_k, Matrix w_v, double score_scale)
    : w_q_(std::move(w_q)), w_k_(std::move(w_k)), w_v_(std::move(w_v)), scale_(score_scale) {
  const Eigen::Index d = w_q_.rows();
  require(d >= 1, "weights: dimension must be >= 1");
  for (const Matrix* m : {&w_q_, &w_k_, &w_v_})
    require(m->rows() == d && m->cols() == d, "weights: all matrices must be d x d");
  require(all_finite(w_q_) && all_finite(w_k_) && all_finite(w_v_),
          "weights: entries must be finite");
  require(std::isfinite(scale_) && scale_ > 0.0, "weights: score_scale must be finite and > 0");
  w_eff_ = w_q_ * w_k_.transpose();
}

bool WeightSet::is_identity() const {
  const Matrix id = Matrix::Identity(dimension(), dimension());
  return w_q_ == id && w_k_ == id && w_v_ == id;
}

WeightSet identity_weights(Eigen::Index dimension, double score_scale) {
  const Matrix id = Matrix::Identity(dimension, dimension);
  return WeightSet(id, id, id, score_scale);
}

Prompt make_prompt(const Vocabulary& vocab, const std::vector<std::string>& labels) {
  require(!labels.empty(), "prompt: must not be empty");
  Prompt p;
  p.indices.reserve(labels.size());
  for (const auto& label : labels) {
    auto idx = vocab.index_of(label);
    require(idx.has_value(), "prompt: unknown token label '" + label + "'");
    p.indices.push_back(*idx);
  }
  return p;
}

Matrix prompt_spins(const Prompt& prompt, const Vocabulary& vocab) {
  require(!prompt.indices.empty(), "prompt: must not be empty");
  Matrix s(static_cast<Eigen::Index>(prompt.length()), vocab.dimension());
  for (std::size_t r = 0; r < prompt.length(); ++r) {
    require(prompt.indices[r] < vocab.size(), "prompt: index out of range");
    s.row(static_cast<Eigen::Index>(r)) = vocab.token(prompt.indices[r]).spin.transpose();
  }
  return s;
}

double BiasSpec::antisymmetry_defect() const {
  if (delta.size() == 0) return 0.0;
  return (delta + delta.transpose()).cwiseAbs().maxCoeff();
}

Matrix BiasSpec::mixing_matrix() const {
  require(delta.rows() == delta.cols() && delta.rows() >= 1, "bias: delta must be square");
  return Matrix::Identity(delta.rows(), delta.cols()) + xi * delta;
}

void validate_pe(const PEConfig& pe, Eigen::Index dimension) {
  if (!pe.enabled) return;
  require(dimension >= 2 && dimension % 2 == 0,
          "pe: dimension must be even (>= 2) when positional encoding is enabled");
  require(std::isfinite(pe.y) && pe.y >= 0.0 && pe.y < 1.0, "pe: y must be in [0, 1)");
  require(std::isfinite(pe.base) && pe.base > 0.0, "pe: base must be > 0");
  require(pe.first_position >= 0, "pe: first_position must be >= 0");
}

ModelConfig parse_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  require(j.is_object(), "config: top level must be an object");
  require(j.contains("dimension") && j["dimension"].is_number_integer(),
          "config: 'dimension' (integer) is required");
  const auto d = j["dimension"].get<Eigen::Index>();
  require(d >= 1, "config: dimension must be >= 1");

  require(j.contains("tokens") && j["tokens"].is_array() && !j["tokens"].empty(),
          "config: 'tokens' (non-empty array) is required");
  std::vector<TokenEmbedding> tokens;
  for (const auto& tj : j["tokens"]) {
    require(tj.is_object() && tj.contains("label") && tj.contains("spin"),
            "config: each token needs 'label' and 'spin'");
    TokenEmbedding t;
    t.label = tj["label"].get<std::string>();
    t.spin = json_to_vector(tj["spin"], "config: token '" + t.label + "' spin");
    require(t.spin.size() == d, "config: token '" + t.label + "' spin does not match dimension");
    tokens.push_back(std::move(t));
  }

  std::vector<std::size_t> good;
  if (j.contains("good_set")) {
    require(j["good_set"].is_array(), "config: 'good_set' must be an array of labels");
    for (const auto& gj : j["good_set"]) {
      const auto label = gj.get<std::string>();
      bool found = false;
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i].label == label) {
          good.push_back(i);
          found = true;
          break;
        }
      require(found, "config: good_set label '" + label + "' not in tokens");
    }
  } else {
    for (std::size_t i = 0; i < tokens.size(); ++i) good.push_back(i);
  }
  Vocabulary vocab(std::move(tokens), std::move(good));

  double scale = 1.0;
  if (j.contains("score_scale")) {
    require(j["score_scale"].is_number(), "config: 'score_scale' must be numeric");
    scale = j["score_scale"].get<double>();
  }

  std::optional<WeightSet> weights;
  if (!j.contains("weights") || (j["weights"].is_string() && j["weights"] == "identity")) {
    weights = identity_weights(d, scale);
  } else {
    const Json& wj = j["weights"];
    require(wj.is_object() && wj.contains("w_q") && wj.contains("w_k") && wj.contains("w_v"),
            "config: 'weights' must be \"identity\" or {w_q, w_k, w_v}");
    Matrix wq = json_to_matrix(wj["w_q"], "config: w_q");
    Matrix wk = json_to_matrix(wj["w_k"], "config: w_k");
    Matrix wv = json_to_matrix(wj["w_v"], "config: w_v");
    require(wq.rows() == d && wq.cols() == d && wk.rows() == d && wk.cols() == d &&
                wv.rows() == d && wv.cols() == d,
            "config: weight matrices must be dimension x dimension");
    weights = WeightSet(std::move(wq), std::move(wk), std::move(wv), scale);
  }

  require(j.contains("prompt") && j["prompt"].is_array() && !j["prompt"].empty(),
          "config: 'prompt' (non-empty array of labels) is required");
  std::vector<std::string> prompt_labels;
  for (const auto& pj : j["prompt"]) prompt_labels.push_back(pj.get<std::string>());
  Prompt prompt = make_prompt(vocab, prompt_labels);

  std::optional<BiasSpec> bias;
  if (j.contains("bias")) {
    const Json& bj = j["bias"];
    require(bj.is_object() && bj.contains("xi") && bj.contains("delta"),
            "config: 'bias' needs 'xi' and 'delta'");
    BiasSpec b;
    b.xi = bj["xi"].get<double>();
    require(std::isfinite(b.xi), "config: bias xi must be finite");
    b.delta = json_to_matrix(bj["delta"], "config: bias delta");
    require(b.delta.rows() == d && b.delta.cols() == d,
            "config: bias delta must be dimension x dimension");
    bias = std::move(b);
  }

  std::optional<PEConfig> pe;
  if (j.contains("pe")) {
    const Json& pj = j["pe"];
    require(pj.is_object(), "config: 'pe' must be an object");
    PEConfig p;
    if (pj.contains("enabled")) p.enabled = pj["enabled"].get<bool>();
    if (pj.contains("y")) p.y = pj["y"].get<double>();
    if (pj.contains("base")) p.base = pj["base"].get<double>();
    if (pj.contains("first_position")) p.first_position = pj["first_position"].get<int>();
    validate_pe(p, d);
    pe = p;
  }

  return ModelConfig{std::move(vocab), std::move(*weights), std::move(prompt),
                     std::move(bias), std::move(pe)};
}

ModelConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path));
}

std::string serialize_config(const ModelConfig& config) {
  Json j;
  j["dimension"] = config.vocabulary.dimension();
  Json tokens = Json::array();
  for (const auto& t : config.vocabulary.tokens())
    tokens.push_back(Json{{"label", t.label}, {"spin", to_json(t.spin)}});
  j["tokens"] = std::move(tokens);
  Json good = Json::array();
  for (std::size_t i : config.vocabulary.good_indices())
    good.push_back(config.vocabulary.token(i).label);
  j["good_set"] = std::move(good);
  Json prompt = Json::array();
  for (std::size_t i : config.prompt.indices)
    prompt.push_back(config.vocabulary.token(i).label);
  j["prompt"] = std::move(prompt);
  if (config.weights.is_identity()) {
    j["weights"] = "identity";
  } else {
    j["weights"] = Json{{"w_q", to_json(config.weights.w_q())},
                        {"w_k", to_json(config.weights.w_k())},
                        {"w_v", to_json(config.weights.w_v())}};
  }
  j["score_scale"] = config.weights.score_scale();
  if (config.bias) {
    j["bias"] = Json{{"xi", config.bias->xi}, {"delta", to_json(config.bias->delta)}};
  }
  if (config.pe) {
    j["pe"] = Json{{"enabled", config.pe->enabled},
                   {"y", config.pe->y},
                   {"base", config.pe->base},
                   {"first_position", config.pe->first_position}};
  }
  return j.dump(2) + "\n";
}

void save_config(const ModelConfig& config, const std::string& path) {
  write_text_file(path, serialize_config(config));
}

}  // namespace spinlab
