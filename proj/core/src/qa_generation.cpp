#include "synthqa/qa_generation.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"
#include "synthqa/parallel.hpp"
#include "synthqa/prompts.hpp"
#include "synthqa/rng.hpp"

namespace synthqa {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string question_key(std::string_view q) {
  std::string out;
  bool space = false;
  for (char c : trim(q)) {
    if (is_space(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = eol + 1;
  }
  return lines;
}

std::string join_trimmed(const std::vector<std::string_view>& parts) {
  std::string out;
  for (auto p : parts) {
    if (!out.empty()) out += '\n';
    out += p;
  }
  return std::string(trim(out));
}

// Parses one block; nullopt when the block breaks the grammar.
std::optional<std::pair<std::string, std::string>> parse_block(const std::vector<std::string_view>& lines) {
  enum { Before, InQuestion, InAnswer } state = Before;
  std::vector<std::string_view> question, answer;
  for (auto raw : lines) {
    const std::string_view line = trim(raw);
    const bool q = line.starts_with("Q:");
    const bool a = line.starts_with("A:");
    switch (state) {
      case Before:
        if (line.empty()) continue;
        if (!q) return std::nullopt;
        question.push_back(trim(line.substr(2)));
        state = InQuestion;
        break;
      case InQuestion:
        if (q) return std::nullopt;
        if (a) {
          answer.push_back(trim(line.substr(2)));
          state = InAnswer;
        } else {
          question.push_back(line);
        }
        break;
      case InAnswer:
        if (q || a) return std::nullopt;
        answer.push_back(raw);
        break;
    }
  }
  if (state != InAnswer) return std::nullopt;
  std::string qtext = join_trimmed(question);
  std::string atext = join_trimmed(answer);
  if (qtext.empty() || atext.empty()) return std::nullopt;
  return std::pair{std::move(qtext), std::move(atext)};
}

std::string make_pair_id(std::size_t topic_index, std::size_t ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04zu-q%02zu", topic_index, ordinal);
  return buf;
}

}  // namespace

void SeedExample::validate() const {
  if (trim(question).empty()) throw ConfigError("seed example has an empty question");
  if (trim(answer).empty()) throw ConfigError("seed example has an empty answer");
  if (trim(topic).empty()) throw ConfigError("seed example has an empty topic");
  if (contexts.size() != 3) {
    throw ConfigError("seed example must carry exactly 3 contexts, found " + std::to_string(contexts.size()));
  }
  for (const auto& c : contexts) {
    if (trim(c).empty()) throw ConfigError("seed example has an empty context");
  }
}

json to_json(const SeedExample& s) {
  return json{{"question", s.question}, {"answer", s.answer}, {"contexts", s.contexts}, {"topic", s.topic}};
}

SeedExample seed_from_json(const json& j) {
  SeedExample s;
  s.question = j.at("question").get<std::string>();
  s.answer = j.at("answer").get<std::string>();
  s.contexts = j.at("contexts").get<std::vector<std::string>>();
  s.topic = j.at("topic").get<std::string>();
  s.validate();
  return s;
}

std::vector<SeedExample> load_seeds(const std::filesystem::path& path) {
  std::vector<SeedExample> seeds;
  auto issues = read_jsonl(path, [&](const json& j, std::size_t) { seeds.push_back(seed_from_json(j)); });
  if (!issues.empty()) {
    throw ConfigError(path.string() + ":" + std::to_string(issues.front().line) + ": invalid seed: " +
                      issues.front().message);
  }
  return seeds;
}

std::vector<TopicSpec> load_topics(const std::filesystem::path& path, std::size_t per_topic_count) {
  if (per_topic_count == 0) throw ConfigError("per_topic_count must be positive");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<TopicSpec> topics;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const std::string topic(trim(line));
    if (topic.empty() || topic.front() == '#') continue;
    if (seen.insert(topic).second) topics.push_back({topic, per_topic_count});
  }
  return topics;
}

std::vector<std::size_t> sample_few_shot_indices(std::size_t seed_count, std::size_t k, std::uint64_t rng_seed) {
  if (seed_count == 0) throw std::invalid_argument("few-shot sampling needs at least one seed");
  if (k == 0) throw std::invalid_argument("few-shot k must be positive");
  if (k > seed_count) {
    throw std::invalid_argument("few-shot k=" + std::to_string(k) + " exceeds the " + std::to_string(seed_count) +
                                " available seeds");
  }
  Rng rng(rng_seed);
  return rng.sample_indices(seed_count, k);
}

std::vector<SeedExample> sample_few_shot(const std::vector<SeedExample>& seeds, std::size_t k, std::uint64_t rng_seed) {
  std::vector<SeedExample> out;
  for (std::size_t i : sample_few_shot_indices(seeds.size(), k, rng_seed)) out.push_back(seeds[i]);
  return out;
}

QaBlockParse parse_qa_blocks(std::string_view text) {
  QaBlockParse result;
  std::vector<std::string_view> block;
  auto flush = [&] {
    const bool blank =
        std::all_of(block.begin(), block.end(), [](std::string_view l) { return trim(l).empty(); });
    if (!blank) {
      if (auto p = parse_block(block)) {
        result.pairs.push_back(std::move(*p));
      } else {
        ++result.malformed;
      }
    }
    block.clear();
  };
  for (auto line : split_lines(text)) {
    if (trim(line).starts_with("###")) {
      flush();
    } else {
      block.push_back(line);
    }
  }
  flush();
  return result;
}

DraftOutcome draft_qa(const DraftInput& input, Gateway& gateway, const DraftConfig& cfg) {
  DraftOutcome out;
  const std::size_t wanted = input.topic.per_topic_count;
  if (input.context_texts.empty()) {
    out.flagged = true;
    out.flag_reason = "no context";
    return out;
  }

  std::string examples;
  for (std::size_t i = 0; i < input.few_shot.size(); ++i) {
    const auto& s = input.few_shot[i];
    examples += prompts::render("draft_example", {{"index", std::to_string(i + 1)},
                                                  {"topic", s.topic},
                                                  {"context", prompts::format_passages(s.contexts)},
                                                  {"question", s.question},
                                                  {"answer", s.answer}});
    examples += "\n";
  }

  struct Candidate {
    std::string question, answer, prompt_hash;
    int attempt;
  };
  std::vector<Candidate> kept;
  std::set<std::string> seen;

  for (int attempt = 1; attempt <= 1 + std::max(0, cfg.extra_attempts) && kept.size() < wanted; ++attempt) {
    out.attempts = attempt;
    const std::string prompt = prompts::render(
        "draft_qa", {{"domain", cfg.domain},
                     {"examples", examples},
                     {"topic", input.topic.topic},
                     {"context", prompts::format_passages(input.context_texts)},
                     {"count", std::to_string(wanted)},
                     {"attempt_note", attempt == 1 ? std::string()
                                                   : "Attempt " + std::to_string(attempt) +
                                                         ": write pairs that differ from earlier ones."}});
    std::string text;
    try {
      ChatRequest req;
      req.role = ModelRole::BaseGenerator;
      req.messages.push_back({"user", prompt});
      text = gateway.chat(req).text;
    } catch (const GatewayError& e) {
      spdlog::warn("draft: topic '{}' attempt {} failed: {}", input.topic.topic, attempt, e.what());
      continue;
    }
    auto parsed = parse_qa_blocks(text);
    out.malformed += parsed.malformed;
    const std::string prompt_hash = sha256_hex(prompt);
    for (auto& [q, a] : parsed.pairs) {
      if (kept.size() >= wanted) break;
      if (!seen.insert(question_key(q)).second) {
        ++out.duplicates;
        continue;
      }
      kept.push_back({std::move(q), std::move(a), prompt_hash, attempt});
    }
  }

  const std::string base_model = gateway.endpoint(ModelRole::BaseGenerator).model_name;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    QAPair p;
    p.topic = input.topic.topic;
    p.topic_index = input.topic_index;
    p.ordinal = i + 1;
    p.pair_id = make_pair_id(input.topic_index, p.ordinal);
    p.question = std::move(kept[i].question);
    p.raw_answer = std::move(kept[i].answer);
    p.grounding.draft = input.context_ids;
    auto& pv = p.provenance;
    pv.base_model = base_model;
    pv.prompt_catalog_version = std::string(prompts::kCatalogVersion);
    pv.draft_template_hash = prompts::get("draft_qa").hash;
    pv.draft_prompt_hash = kept[i].prompt_hash;
    pv.few_shot_indices = input.few_shot_indices;
    pv.rng_seed = input.rng_seed;
    pv.draft_attempt = kept[i].attempt;
    out.pairs.push_back(std::move(p));
  }
  if (out.pairs.empty()) {
    out.flagged = true;
    out.flag_reason = "no parseable pairs";
    spdlog::warn("draft: topic '{}' produced no parseable pairs after {} attempt(s)", input.topic.topic,
                 out.attempts);
  }
  return out;
}

QAPair refine_answer(QAPair pair, const Retriever& retriever, Gateway& gateway, const RefineConfig& cfg) {
  if (pair.stage() != Stage::Drafted) {
    throw StageError("pair " + pair.pair_id + ": refinement needs a drafted pair, found " +
                     std::string(to_string(pair.stage())));
  }
  RetrievalResult found;
  try {
    found = retriever.retrieve(pair.question, cfg.top_k);
  } catch (const Error& e) {
    pair.reject({"no grounding", std::string("retrieval failed: ") + e.what()});
    return pair;
  }
  pair.grounding.refine.clear();
  for (const auto& r : found.ranked) pair.grounding.refine.push_back(r.chunk_id);
  if (found.ranked.empty()) {
    pair.reject({"no grounding"});
    return pair;
  }
  if (found.ranked.size() < cfg.top_k) {
    pair.reject({"insufficient grounding"});
    return pair;
  }

  const std::string prompt = prompts::render("refine_answer", {{"domain", cfg.domain},
                                                               {"question", pair.question},
                                                               {"answer", pair.raw_answer},
                                                               {"context", prompts::format_passages(retriever.texts(found))}});
  std::string refined;
  try {
    ChatRequest req;
    req.role = ModelRole::Refiner;
    req.messages.push_back({"user", prompt});
    refined = std::string(trim(gateway.chat(req).text));
  } catch (const GatewayError& e) {
    spdlog::warn("refine: pair {} failed: {}", pair.pair_id, e.what());
    pair.reject({"refine failed"});
    return pair;
  }
  if (refined.empty()) {
    pair.reject({"refine failed"});
    return pair;
  }
  pair.refined_answer = std::move(refined);
  pair.provenance.refiner_model = gateway.endpoint(ModelRole::Refiner).model_name;
  pair.provenance.refine_template_hash = prompts::get("refine_answer").hash;
  pair.provenance.refine_prompt_hash = sha256_hex(prompt);
  pair.advance(Stage::Refined);
  return pair;
}

json to_json(const TopicReport& r) {
  return json{{"topic", r.topic},     {"drafted", r.drafted}, {"malformed", r.malformed}, {"duplicates", r.duplicates},
              {"attempts", r.attempts}, {"flagged", r.flagged}, {"reason", r.reason}};
}

DraftStageResult draft_topics(const std::vector<TopicSpec>& topics, const std::vector<SeedExample>& seeds,
                              const Retriever& retriever, Gateway& gateway, const GenerationConfig& cfg) {
  if (cfg.few_shot_k > seeds.size()) {
    throw ConfigError("few_shot_k=" + std::to_string(cfg.few_shot_k) + " exceeds the " +
                      std::to_string(seeds.size()) + " available seeds");
  }
  std::vector<DraftOutcome> outcomes(topics.size());
  parallel_for(topics.size(), cfg.workers, [&](std::size_t i) {
    DraftInput input;
    input.topic = topics[i];
    input.topic.per_topic_count = cfg.per_topic_count;
    input.topic_index = i;
    input.rng_seed = derive_seed(cfg.rng_seed, i);
    if (cfg.few_shot_k > 0) {
      input.few_shot_indices = sample_few_shot_indices(seeds.size(), cfg.few_shot_k, input.rng_seed);
      for (std::size_t idx : input.few_shot_indices) input.few_shot.push_back(seeds[idx]);
    }
    try {
      const auto found = retriever.retrieve(topics[i].topic, cfg.draft_top_k);
      for (const auto& r : found.ranked) input.context_ids.push_back(r.chunk_id);
      input.context_texts = retriever.texts(found);
    } catch (const Error& e) {
      spdlog::warn("draft: retrieval for topic '{}' failed: {}", topics[i].topic, e.what());
    }
    outcomes[i] = draft_qa(input, gateway, DraftConfig{cfg.domain, cfg.extra_attempts});
  });

  DraftStageResult result;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    auto& o = outcomes[i];
    result.topics.push_back({topics[i].topic, o.pairs.size(), o.malformed, o.duplicates, o.attempts, o.flagged,
                             o.flag_reason});
    std::move(o.pairs.begin(), o.pairs.end(), std::back_inserter(result.drafts));
  }
  return result;
}

std::vector<QAPair> refine_pairs(std::vector<QAPair> drafts, const Retriever& retriever, Gateway& gateway,
                                 const GenerationConfig& cfg) {
  parallel_for(drafts.size(), cfg.workers, [&](std::size_t i) {
    if (drafts[i].stage() != Stage::Drafted) return;
    drafts[i] = refine_answer(std::move(drafts[i]), retriever, gateway, RefineConfig{cfg.domain, cfg.refine_top_k});
  });
  sort_pairs(drafts);
  return drafts;
}

}  // namespace synthqa
