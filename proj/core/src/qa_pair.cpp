#include "synthqa/qa_pair.hpp"

#include <algorithm>

namespace synthqa {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Drafted: return "drafted";
    case Stage::Refined: return "refined";
    case Stage::Scored: return "scored";
    case Stage::Retained: return "retained";
    case Stage::Rejected: return "rejected";
  }
  return "drafted";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::Drafted, Stage::Refined, Stage::Scored, Stage::Retained, Stage::Rejected}) {
    if (to_string(st) == s) return st;
  }
  throw StageError("unknown stage '" + std::string(s) + "'");
}

void QAPair::advance(Stage next) {
  const bool ok = (stage_ == Stage::Drafted && next == Stage::Refined) ||
                  (stage_ == Stage::Refined && next == Stage::Scored) ||
                  (stage_ == Stage::Scored && next == Stage::Retained);
  if (!ok) {
    throw StageError("pair " + pair_id + ": cannot move from " + std::string(to_string(stage_)) + " to " +
                     std::string(to_string(next)));
  }
  stage_ = next;
}

void QAPair::reject(std::vector<std::string> reasons) {
  if (terminal()) {
    throw StageError("pair " + pair_id + ": already " + std::string(to_string(stage_)));
  }
  reasons.erase(std::remove_if(reasons.begin(), reasons.end(), [](const std::string& r) { return r.empty(); }),
                reasons.end());
  if (reasons.empty()) throw StageError("pair " + pair_id + ": rejection needs a reason");
  reject_reasons_ = std::move(reasons);
  stage_ = Stage::Rejected;
}

json to_json(const MetricScores& s) {
  return json{{"relevancy", s.relevancy},
              {"groundedness", s.groundedness},
              {"question_specificity", s.question_specificity},
              {"response_specificity", s.response_specificity},
              {"tele_specificity", s.tele_specificity},
              {"aspect_critic", s.aspect_critic},
              {"prompt_hashes", s.prompt_hashes},
              {"notes", s.notes}};
}

MetricScores metric_scores_from_json(const json& j) {
  MetricScores s;
  s.relevancy = j.at("relevancy").get<double>();
  s.groundedness = j.at("groundedness").get<double>();
  s.question_specificity = j.at("question_specificity").get<double>();
  s.response_specificity = j.at("response_specificity").get<double>();
  s.tele_specificity = j.at("tele_specificity").get<double>();
  s.aspect_critic = j.at("aspect_critic").get<int>();
  s.prompt_hashes = j.value("prompt_hashes", std::map<std::string, std::string>{});
  s.notes = j.value("notes", std::vector<std::string>{});
  return s;
}

json to_json(const QAPair& p) {
  const auto& pv = p.provenance;
  json j = {{"pair_id", p.pair_id},
            {"topic", p.topic},
            {"topic_index", p.topic_index},
            {"ordinal", p.ordinal},
            {"question", p.question},
            {"raw_answer", p.raw_answer},
            {"refined_answer", p.refined_answer},
            {"grounding", {{"draft", p.grounding.draft}, {"refine", p.grounding.refine}}},
            {"stage", to_string(p.stage())},
            {"provenance",
             {{"base_model", pv.base_model},
              {"refiner_model", pv.refiner_model},
              {"judge_model", pv.judge_model},
              {"prompt_catalog_version", pv.prompt_catalog_version},
              {"draft_template_hash", pv.draft_template_hash},
              {"draft_prompt_hash", pv.draft_prompt_hash},
              {"refine_template_hash", pv.refine_template_hash},
              {"refine_prompt_hash", pv.refine_prompt_hash},
              {"few_shot_indices", pv.few_shot_indices},
              {"rng_seed", pv.rng_seed},
              {"draft_attempt", pv.draft_attempt}}},
            {"reject_reasons", p.reject_reasons()}};
  if (p.scores) j["scores"] = to_json(*p.scores);
  if (p.terminal()) j["decision"] = p.stage() == Stage::Retained ? "retained" : "rejected";
  return j;
}

QAPair pair_from_json(const json& j) {
  QAPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.topic = j.at("topic").get<std::string>();
  p.topic_index = j.value("topic_index", std::size_t{0});
  p.ordinal = j.value("ordinal", std::size_t{0});
  p.question = j.at("question").get<std::string>();
  p.raw_answer = j.value("raw_answer", std::string());
  p.refined_answer = j.value("refined_answer", std::string());
  if (j.contains("grounding")) {
    p.grounding.draft = j["grounding"].value("draft", std::vector<std::string>{});
    p.grounding.refine = j["grounding"].value("refine", std::vector<std::string>{});
  }
  if (j.contains("provenance")) {
    const auto& pv = j["provenance"];
    auto& out = p.provenance;
    out.base_model = pv.value("base_model", std::string());
    out.refiner_model = pv.value("refiner_model", std::string());
    out.judge_model = pv.value("judge_model", std::string());
    out.prompt_catalog_version = pv.value("prompt_catalog_version", std::string());
    out.draft_template_hash = pv.value("draft_template_hash", std::string());
    out.draft_prompt_hash = pv.value("draft_prompt_hash", std::string());
    out.refine_template_hash = pv.value("refine_template_hash", std::string());
    out.refine_prompt_hash = pv.value("refine_prompt_hash", std::string());
    out.few_shot_indices = pv.value("few_shot_indices", std::vector<std::size_t>{});
    out.rng_seed = pv.value("rng_seed", std::uint64_t{0});
    out.draft_attempt = pv.value("draft_attempt", 0);
  }
  if (j.contains("scores") && !j["scores"].is_null()) p.scores = metric_scores_from_json(j["scores"]);
  p.stage_ = stage_from_string(j.at("stage").get<std::string>());
  p.reject_reasons_ = j.value("reject_reasons", std::vector<std::string>{});
  if ((p.stage_ == Stage::Rejected) == p.reject_reasons_.empty()) {
    throw StageError("pair " + p.pair_id + ": reject reasons must be present exactly when rejected");
  }
  return p;
}

std::vector<QAPair> load_pairs(const std::filesystem::path& path) {
  std::vector<QAPair> out;
  for (const auto& j : read_jsonl_strict(path)) out.push_back(pair_from_json(j));
  return out;
}

void save_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs) {
  std::vector<json> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(to_json(p));
  write_jsonl(path, records);
}

void sort_pairs(std::vector<QAPair>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const QAPair& a, const QAPair& b) {
    return a.topic_index != b.topic_index ? a.topic_index < b.topic_index : a.ordinal < b.ordinal;
  });
}

}  // namespace synthqa
