#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/error.hpp"
#include "synthqa/jsonl.hpp"

namespace synthqa {

enum class Stage { Drafted = 0, Refined = 1, Scored = 2, Retained = 3, Rejected = 4 };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// An attempted stage transition that would move a pair backwards or skip
/// a required step.
class StageError : public Error {
 public:
  using Error::Error;
};

/// The four quality scores plus how they were obtained.
struct MetricScores {
  double relevancy = 0.0;             // [0, 1]
  double groundedness = 0.0;          // {0, 0.5, 1}
  double question_specificity = 0.0;  // {0, 1}
  double response_specificity = 0.0;  // {0, 1}
  double tele_specificity = 0.0;      // mean of the two specificity halves
  int aspect_critic = 0;              // {0, 1}
  std::map<std::string, std::string> prompt_hashes;  // metric -> sha256 of the rendered prompt
  std::vector<std::string> notes;

  friend bool operator==(const MetricScores&, const MetricScores&) = default;
};

struct Grounding {
  std::vector<std::string> draft;   // chunk ids retrieved for the topic
  std::vector<std::string> refine;  // chunk ids retrieved for the question

  friend bool operator==(const Grounding&, const Grounding&) = default;
};

struct Provenance {
  std::string base_model;
  std::string refiner_model;
  std::string judge_model;
  std::string prompt_catalog_version;
  std::string draft_template_hash;
  std::string draft_prompt_hash;
  std::string refine_template_hash;
  std::string refine_prompt_hash;
  std::vector<std::size_t> few_shot_indices;
  std::uint64_t rng_seed = 0;
  int draft_attempt = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// A synthetic question-answer pair and its trip through the pipeline.
///
/// The stage only moves forward: Drafted -> Refined -> Scored -> Retained,
/// with Rejected reachable from any non-terminal stage. A rejected pair
/// always carries at least one reason.
class QAPair {
 public:
  std::string pair_id;
  std::string topic;
  std::size_t topic_index = 0;
  std::size_t ordinal = 0;
  std::string question;
  std::string raw_answer;
  std::string refined_answer;
  Grounding grounding;
  Provenance provenance;
  std::optional<MetricScores> scores;

  Stage stage() const { return stage_; }
  const std::vector<std::string>& reject_reasons() const { return reject_reasons_; }
  bool terminal() const { return stage_ == Stage::Retained || stage_ == Stage::Rejected; }

  /// Moves to the next stage in sequence. Throws StageError for any other move.
  void advance(Stage next);

  /// Terminal rejection. Throws StageError from a terminal stage or when
  /// `reasons` is empty.
  void reject(std::vector<std::string> reasons);

  friend bool operator==(const QAPair&, const QAPair&) = default;

  friend QAPair pair_from_json(const json& j);

 private:
  Stage stage_ = Stage::Drafted;
  std::vector<std::string> reject_reasons_;
};

json to_json(const MetricScores& s);
MetricScores metric_scores_from_json(const json& j);

/// Full serialization, including scores, decision and reasons when present.
json to_json(const QAPair& pair);
QAPair pair_from_json(const json& j);

std::vector<QAPair> load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs);

/// Orders by (topic_index, ordinal).
void sort_pairs(std::vector<QAPair>& pairs);

}  // namespace synthqa
