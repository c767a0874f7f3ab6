#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synthqa/gateway.hpp"
#include "synthqa/knowledge_graph.hpp"
#include "synthqa/qa_pair.hpp"

namespace synthqa {

/// Expert-verified example used as a few-shot prompt.
struct SeedExample {
  std::string question;
  std::string answer;
  std::vector<std::string> contexts;  // exactly three
  std::string topic;

  void validate() const;
  friend bool operator==(const SeedExample&, const SeedExample&) = default;
};

json to_json(const SeedExample& s);
SeedExample seed_from_json(const json& j);

/// Throws ConfigError naming the line of the first invalid record.
std::vector<SeedExample> load_seeds(const std::filesystem::path& path);

struct TopicSpec {
  std::string topic;
  std::size_t per_topic_count = 10;
};

/// One topic per line; blank lines and lines starting with '#' are skipped,
/// repeated topics are kept once.
std::vector<TopicSpec> load_topics(const std::filesystem::path& path, std::size_t per_topic_count);

/// k distinct seeds drawn without replacement, reproducible from rng_seed.
/// Throws std::invalid_argument when seeds is empty or k exceeds its size.
std::vector<std::size_t> sample_few_shot_indices(std::size_t seed_count, std::size_t k, std::uint64_t rng_seed);
std::vector<SeedExample> sample_few_shot(const std::vector<SeedExample>& seeds, std::size_t k, std::uint64_t rng_seed);

/// Result of parsing generator output with the Q:/A:/### grammar.
///
/// Blocks are separated by lines starting with "###". A well-formed block has
/// exactly one line starting with "Q:" followed later by exactly one line
/// starting with "A:", nothing but blank lines before the Q: line, and
/// non-empty question and answer text. Lines after Q: and before A: continue
/// the question; lines after A: continue the answer. Blank blocks are ignored;
/// every other block that breaks the grammar counts as malformed.
struct QaBlockParse {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t malformed = 0;
};

QaBlockParse parse_qa_blocks(std::string_view text);

struct DraftConfig {
  std::string domain = "telecom network troubleshooting";
  int extra_attempts = 2;  // reprompts when a topic yields fewer pairs than requested
};

struct DraftInput {
  TopicSpec topic;
  std::size_t topic_index = 0;
  std::vector<SeedExample> few_shot;
  std::vector<std::size_t> few_shot_indices;
  std::vector<std::string> context_ids;
  std::vector<std::string> context_texts;
  std::uint64_t rng_seed = 0;
};

struct DraftOutcome {
  std::vector<QAPair> pairs;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  int attempts = 0;
  bool flagged = false;
  std::string flag_reason;
};

/// Drafts up to per_topic_count pairs for one topic with the base generator.
/// Never throws for generator trouble: the topic is flagged instead.
DraftOutcome draft_qa(const DraftInput& input, Gateway& gateway, const DraftConfig& cfg = {});

struct RefineConfig {
  std::string domain = "telecom network troubleshooting";
  std::size_t top_k = 3;
};

/// Regrounds the pair on the passages retrieved for its own question and has
/// the refiner rewrite the answer. Pairs with no (or fewer than top_k)
/// passages, or whose refinement fails, are rejected rather than thrown.
QAPair refine_answer(QAPair pair, const Retriever& retriever, Gateway& gateway, const RefineConfig& cfg = {});

struct GenerationConfig {
  std::size_t per_topic_count = 10;
  std::size_t few_shot_k = 3;
  std::uint64_t rng_seed = 0;
  std::size_t draft_top_k = 3;
  std::size_t refine_top_k = 3;
  int extra_attempts = 2;
  std::string domain = "telecom network troubleshooting";
  std::size_t workers = 8;
};

struct TopicReport {
  std::string topic;
  std::size_t drafted = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  int attempts = 0;
  bool flagged = false;
  std::string reason;
};

json to_json(const TopicReport& r);

struct DraftStageResult {
  std::vector<QAPair> drafts;  // ordered by (topic, ordinal)
  std::vector<TopicReport> topics;
};

/// Drafts every topic concurrently. Few-shot draws are seeded per topic from
/// rng_seed, so results do not depend on scheduling.
DraftStageResult draft_topics(const std::vector<TopicSpec>& topics, const std::vector<SeedExample>& seeds,
                              const Retriever& retriever, Gateway& gateway, const GenerationConfig& cfg);

/// Refines every Drafted pair; other pairs pass through untouched.
std::vector<QAPair> refine_pairs(std::vector<QAPair> drafts, const Retriever& retriever, Gateway& gateway,
                                 const GenerationConfig& cfg);

}  // namespace synthqa
