#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/gateway.hpp"
#include "synthqa/knowledge_graph.hpp"
#include "synthqa/qa_pair.hpp"

namespace synthqa {

/// Retention thresholds. Every comparison is strict except the aspect
/// verdict, which must equal aspect_required.
struct FilterThresholds {
  double groundedness_min_exclusive = 0.75;
  int aspect_required = 1;
  double specificity_min_exclusive = 0.75;
  double relevancy_min_exclusive = 0.5;

  void validate() const;
  friend bool operator==(const FilterThresholds&, const FilterThresholds&) = default;
};

json to_json(const FilterThresholds& t);
FilterThresholds thresholds_from_json(const json& j);

struct FilterDecision {
  bool retained = false;
  std::vector<std::string> reasons;  // every failed criterion, in a fixed order
};

/// Pure. Reasons are drawn from "groundedness", "aspect_critic",
/// "tele_specificity" and "relevancy".
FilterDecision apply_filter(const MetricScores& scores, const FilterThresholds& thresholds);

/// Returns the first numeric token in `reply` whose value is one of
/// `allowed`. A numeric token is a maximal run of digits with an optional
/// fractional part, not glued to letters on either side.
std::optional<double> parse_score(std::string_view reply, std::span<const double> allowed);

/// One question per non-empty line; leading list markers ("1.", "2)", "-",
/// "*") are stripped.
std::vector<std::string> parse_alternative_questions(std::string_view reply);

/// Mean of the cosines with negatives clamped to 0; 0 for an empty list.
double relevancy_from_cosines(std::span<const double> cosines);

struct RelevancyResult {
  double score = 0.0;
  std::vector<std::string> questions;  // the alternatives actually scored
  std::vector<double> cosines;
  std::size_t shortfall = 0;  // n minus the number of parsed questions
  std::string note;
  std::string prompt_hash;
};

RelevancyResult response_relevancy(const QAPair& pair, std::size_t n, Gateway& gateway);

struct JudgeScore {
  double value = 0.0;
  std::string prompt_hash;
  int calls = 0;  // 1, or 2 when a reprompt was needed
};

/// Asks the judge, reprompting once when the reply carries no allowed score.
/// nullopt means the reply stayed unscorable.
std::optional<JudgeScore> judge_score(Gateway& gateway, const std::string& prompt, std::span<const double> allowed);

std::optional<JudgeScore> response_groundedness(const QAPair& pair, const std::vector<std::string>& contexts,
                                                Gateway& gateway);

struct SpecificityResult {
  JudgeScore question;
  JudgeScore response;
  double combined() const { return (question.value + response.value) / 2.0; }
};

std::optional<SpecificityResult> tele_specificity(const QAPair& pair, const std::vector<std::string>& contexts,
                                                  Gateway& gateway);

std::optional<JudgeScore> aspect_critic(const QAPair& pair, const std::vector<std::string>& contexts,
                                        Gateway& gateway);

struct EvalConfig {
  std::size_t relevancy_n = 3;
  FilterThresholds thresholds;
  std::size_t workers = 8;
};

/// Scores one Refined pair against the texts of its refinement grounding and
/// decides it. Unscorable judges and failed judge calls reject the pair
/// ("unscorable" / "judge failed"); otherwise the filter decides.
/// Pairs in any other stage are returned unchanged.
QAPair evaluate_pair(QAPair pair, const std::vector<std::string>& contexts, Gateway& gateway,
                     const EvalConfig& cfg = {});

/// Evaluates concurrently; grounding texts are looked up in the retriever's
/// graph. Output keeps the input order.
std::vector<QAPair> evaluate_pairs(std::vector<QAPair> pairs, const Retriever& retriever, Gateway& gateway,
                                   const EvalConfig& cfg = {});

/// Re-decides Scored pairs under `thresholds` and returns the Retained ones.
std::vector<QAPair> retained_pairs(const std::vector<QAPair>& scored, const FilterThresholds& thresholds);

}  // namespace synthqa
