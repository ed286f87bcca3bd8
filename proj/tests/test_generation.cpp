#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinlab/generation.hpp"
#include "spinlab/perturbation.hpp"
#include "spinlab/presets.hpp"

#include <json.hpp>

#include <sstream>

using namespace spinlab;

namespace {

GenerationTrace synthetic(const std::vector<std::string>& labels) {
  GenerationTrace tr;
  tr.vocab_labels = {"*"};
  int t = 1;
  for (const auto& l : labels) {
    GenerationStep s;
    s.iteration = t++;
    s.chosen_label = l;
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

}  // namespace

TEST_CASE("alignment is a cosine") {
  Vector a(3), b(3);
  a << 1, 0, 0;
  b << 0, 2, 0;
  const ContextVector n{a};
  CHECK(alignment(n, 5.0 * a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(alignment(n, b) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(alignment(n, -a) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(alignment(n, Vector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(alignment(ContextVector{Vector::Zero(3)}, a), std::invalid_argument);
  CHECK_THROWS_AS(alignment(n, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("four-token demo: D dominates from the start") {
  const ModelConfig cfg = fig2_config();
  const GenerationTrace tr = generate(cfg.prompt, cfg.vocabulary, cfg.weights, fig2_steps());
  REQUIRE(tr.steps.size() == 6);
  CHECK(tr.vocab_labels == std::vector<std::string>{"A", "B", "C", "D"});

  for (const auto& s : tr.steps) CHECK(s.chosen_label == "D");
  CHECK(tr.steps[0].prompt_length == 3);
  CHECK(tr.steps[5].prompt_length == 8);

  const auto& first = tr.steps.front();
  CHECK(first.logits[3] == doctest::Approx(2.8615936329955054).epsilon(1e-13));
  CHECK(first.alignments[3] == doctest::Approx(0.85690542043174256).epsilon(1e-13));
  CHECK(first.context[0] == doctest::Approx(1.3345941484329442).epsilon(1e-13));
  CHECK(first.context_unit.norm() == doctest::Approx(1.0).epsilon(1e-14));

  // alignment with the attractor keeps growing once the loop feeds on itself
  for (std::size_t t = 2; t < tr.steps.size(); ++t)
    CHECK(tr.steps[t].alignments[3] > tr.steps[t - 1].alignments[3]);
  CHECK(tr.steps[5].alignments[3] == doctest::Approx(0.99851494264042517).epsilon(1e-13));
}

TEST_CASE("generation under the positional mix switches attractor") {
  const ModelConfig cfg = fig4b_config();
  const GenerationTrace tr =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, fig4b_steps(), cfg.pe);
  REQUIRE(tr.steps.size() == 100);

  const auto& first = tr.steps.front();
  CHECK(first.chosen_label == "GOOD");
  CHECK(first.context[0] == doctest::Approx(0.39908974918750606).epsilon(1e-13));
  CHECK(first.context[1] == doctest::Approx(0.64902913693062469).epsilon(1e-13));
  CHECK(first.context[2] == doctest::Approx(0.27326681368287553).epsilon(1e-13));
  CHECK(first.context[3] == doctest::Approx(0.19994994778379188).epsilon(1e-13));
  CHECK(first.logits[2] == doctest::Approx(0.3816713221224774).epsilon(1e-13));

  for (int t = 0; t < 28; ++t) CHECK(tr.steps[t].chosen_label == "GOOD");
  for (int t = 28; t < 100; ++t) CHECK(tr.steps[t].chosen_label == "EVIL");
}

TEST_CASE("biased generation matches the exact biased context") {
  ModelConfig cfg = fig4a_config(0.05);
  const GenerationTrace tr =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, 1, {}, cfg.bias);
  const ContextVector direct = biased_context_exact(
      prompt_spins(cfg.prompt, cfg.vocabulary), cfg.weights, *cfg.bias);
  CHECK(tr.steps.front().context == direct.n);
}

TEST_CASE("generate validates input") {
  const ModelConfig cfg = fig2_config();
  CHECK_THROWS_AS(generate(cfg.prompt, cfg.vocabulary, cfg.weights, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate(cfg.prompt, cfg.vocabulary, identity_weights(5), 3),
                  std::invalid_argument);
  PEConfig pe;
  pe.enabled = true;
  pe.y = 0.1;
  CHECK_THROWS_AS(generate(cfg.prompt, cfg.vocabulary, cfg.weights, 3, pe),
                  std::invalid_argument);  // odd dimension
}

TEST_CASE("repetition detector") {
  SUBCASE("fixed point from the first step") {
    const auto rep = detect_repetition(synthetic({"D", "D", "D", "D", "D", "D"}));
    CHECK(rep.found);
    CHECK(rep.period == 1);
    CHECK(rep.lock_in_iteration == 1);
    CHECK(rep.attractor == "D");
    CHECK(rep.cycle == std::vector<std::string>{"D"});
  }
  SUBCASE("fixed point after a prefix") {
    const auto rep = detect_repetition(
        synthetic({"G", "G", "G", "E", "E", "E", "E", "E", "E", "E", "E", "E"}));
    CHECK(rep.found);
    CHECK(rep.period == 1);
    CHECK(rep.lock_in_iteration == 4);
    CHECK(rep.attractor == "E");
  }
  SUBCASE("two-cycle") {
    const auto rep = detect_repetition(synthetic({"A", "B", "A", "B", "A", "B"}));
    CHECK(rep.found);
    CHECK(rep.period == 2);
    CHECK(rep.lock_in_iteration == 1);
    CHECK(rep.attractor.empty());
    CHECK(rep.cycle == std::vector<std::string>{"A", "B"});
  }
  SUBCASE("tail too short relative to the run") {
    // two trailing repeats, but only 2/12 < a quarter of the run
    const auto rep = detect_repetition(
        synthetic({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "X", "X"}));
    CHECK_FALSE(rep.found);
  }
  SUBCASE("no repetition") {
    CHECK_FALSE(detect_repetition(synthetic({"a", "b", "c", "d"})).found);
    CHECK_FALSE(detect_repetition(synthetic({"a"})).found);
  }
  SUBCASE("empty trace throws") {
    CHECK_THROWS_AS(detect_repetition(GenerationTrace{}), std::invalid_argument);
  }
}

TEST_CASE("trace csv layout") {
  const ModelConfig cfg = fig2_config();
  const GenerationTrace tr = generate(cfg.prompt, cfg.vocabulary, cfg.weights, 2);
  const std::string csv = trace_csv(tr);
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  CHECK(line ==
        "iter,k,chosen,logit:A,logit:B,logit:C,logit:D,align:A,align:B,align:C,align:D");
  std::getline(ss, line);
  CHECK(line.rfind("1,3,D,", 0) == 0);
  std::getline(ss, line);
  CHECK(line.rfind("2,4,D,", 0) == 0);
  CHECK_FALSE(std::getline(ss, line));
}

TEST_CASE("context csv layout") {
  const ModelConfig cfg = fig2_config();
  const GenerationTrace tr = generate(cfg.prompt, cfg.vocabulary, cfg.weights, 1);
  const std::string csv = context_csv(tr);
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "iter,n1,n2,n3,unit_n1,unit_n2,unit_n3");
  std::getline(ss, line);
  CHECK(line.rfind("1,1.3345941484329442,", 0) == 0);
}

TEST_CASE("trace and repetition json parse") {
  const ModelConfig cfg = fig2_config();
  const GenerationTrace tr = generate(cfg.prompt, cfg.vocabulary, cfg.weights, 3);
  const auto j = nlohmann::json::parse(trace_json(tr));
  CHECK(j["labels"].size() == 4);
  CHECK(j["steps"].size() == 3);
  CHECK(j["steps"][0]["chosen"] == "D");
  CHECK(j["steps"][0]["logits"]["D"].get<double>() ==
        doctest::Approx(2.8615936329955054).epsilon(1e-13));

  const auto r = nlohmann::json::parse(repetition_json(detect_repetition(tr), tr.steps.size()));
  CHECK(r["found"] == true);
  CHECK(r["period"] == 1);
  CHECK(r["attractor"] == "D");
  CHECK(r["steps"] == 3);
}

TEST_CASE("effective prompt spins mirror the first generation step") {
  const ModelConfig cfg = fig4b_config();
  const Matrix spins =
      effective_prompt_spins(cfg.prompt, cfg.vocabulary, cfg.pe, cfg.bias);
  const ContextVector n = evaluate_context(spins, cfg.weights);
  const GenerationTrace tr =
      generate(cfg.prompt, cfg.vocabulary, cfg.weights, 1, cfg.pe, cfg.bias);
  CHECK(tr.steps.front().context == n.n);
}
