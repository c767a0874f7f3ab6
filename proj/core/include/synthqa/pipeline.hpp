#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/analysis.hpp"
#include "synthqa/chunking.hpp"
#include "synthqa/corpus.hpp"
#include "synthqa/gateway.hpp"
#include "synthqa/knowledge_graph.hpp"
#include "synthqa/qa_generation.hpp"
#include "synthqa/quality.hpp"

namespace synthqa {

enum class PipelineStage { Ingest, BuildGraph, Generate, Refine, Evaluate, Filter, Analyze, Export };

inline constexpr PipelineStage kAllStages[] = {PipelineStage::Ingest,   PipelineStage::BuildGraph,
                                               PipelineStage::Generate, PipelineStage::Refine,
                                               PipelineStage::Evaluate, PipelineStage::Filter,
                                               PipelineStage::Analyze,  PipelineStage::Export};

std::string_view to_string(PipelineStage s);
PipelineStage pipeline_stage_from_string(std::string_view s);

/// Raised by the orchestrator when a stage fails; wraps the original message.
class StageFailure : public Error {
 public:
  StageFailure(PipelineStage stage, const std::string& message)
      : Error(std::string(to_string(stage)) + ": " + message), stage_(stage) {}
  PipelineStage stage() const { return stage_; }

 private:
  PipelineStage stage_;
};

struct ModelsConfig {
  std::string backend = "mock";  // "mock" | "http"
  std::string mock_script;       // path, mock backend only; empty means no rules
  std::chrono::milliseconds timeout{60000};
  GatewayConfig gateway;
};

struct GraphSettings {
  double synonym_threshold = 0.8;
  RetrievalConfig retrieval;
  std::size_t top_k = 3;
};

struct AnalysisConfig {
  std::size_t bins = 20;
  IRConfig ir;
};

/// Everything one run needs. Relative paths resolve against base_dir, the
/// directory holding the config file.
struct PipelineConfig {
  std::string corpus_path;
  std::string corpus_format = "auto";  // "auto" | "jsonl" | "plaintext-dir"
  ChunkingConfig chunking;
  GraphSettings graph;
  ModelsConfig models;
  std::string topics_path;
  std::string seeds_path;
  GenerationConfig generation;
  EvalConfig evaluation;
  AnalysisConfig analysis;
  std::size_t workers = 8;
  std::filesystem::path output_dir;
  std::filesystem::path base_dir;

  /// Throws ConfigError for invalid values. Paths are checked separately.
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
};

/// Parses and validates. generation.rng_seed is mandatory.
PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Canonical form with every default filled in. output_dir is left out so
/// the same settings hash identically wherever they write.
json canonical_config(const PipelineConfig& cfg);

/// The canonical config without workers, timeouts and in-flight limits. This
/// is what gets hashed and what reports echo, so neither depends on how many
/// threads a run used.
json output_relevant_config(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

/// Checks that every input file the given stages read from outside the
/// output directory exists. Throws ConfigError naming the first missing one.
void check_input_paths(const PipelineConfig& cfg, const std::vector<PipelineStage>& stages);

/// Builds the configured gateway (mock script or HTTP transport).
std::shared_ptr<Gateway> make_gateway(const PipelineConfig& cfg);

struct StageRecord {
  std::string name;
  std::string status;  // "completed" | "failed"
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to output_dir -> sha256
  json counts = json::object();
  std::string error;
  double wall_ms = 0.0;
};

struct RunManifest {
  int version = 1;
  std::string run_id;
  std::string config_hash;
  std::vector<StageRecord> stages;

  const StageRecord* find(std::string_view stage) const;
};

/// Timing lives under a separate top-level "timing" key so it can be
/// stripped before comparing runs.
json to_json(const RunManifest& m, bool include_timing = true);
RunManifest manifest_from_json(const json& j);

inline constexpr std::string_view kManifestFile = "manifest.json";

struct RunOptions {
  std::optional<std::vector<PipelineStage>> stages;  // all stages when unset
  bool resume = false;
  std::shared_ptr<Gateway> gateway;  // overrides make_gateway when set
};

/// Runs the selected stages in order, writing the manifest after each one.
/// With resume, stages already completed under the same config hash whose
/// outputs are unchanged on disk are skipped. Throws StageFailure after
/// recording the failed stage, ConfigError before any stage runs.
RunManifest run_pipeline(const PipelineConfig& cfg, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Stage bodies with explicit paths. Each returns the counts it records.
// ---------------------------------------------------------------------------

json ingest_stage(const std::filesystem::path& corpus, CorpusFormat format, const ChunkingConfig& chunking,
                  Gateway* gateway, std::size_t workers, const std::filesystem::path& documents_out,
                  const std::filesystem::path& chunks_out);

json build_graph_stage(const std::filesystem::path& chunks, Gateway& gateway, double synonym_threshold,
                       std::size_t workers, const std::filesystem::path& triples_out,
                       const std::filesystem::path& index_out);

json generate_stage(const std::filesystem::path& topics, const std::filesystem::path& seeds,
                    const std::filesystem::path& index, Gateway& gateway, const GenerationConfig& gen,
                    const RetrievalConfig& retrieval, const std::filesystem::path& drafts_out,
                    const std::filesystem::path& topic_report_out);

json refine_stage(const std::filesystem::path& drafts, const std::filesystem::path& index, Gateway& gateway,
                  const GenerationConfig& gen, const RetrievalConfig& retrieval,
                  const std::filesystem::path& candidates_out);

json evaluate_stage(const std::filesystem::path& candidates, const std::filesystem::path& index, Gateway& gateway,
                    const EvalConfig& eval, const RetrievalConfig& retrieval, const std::filesystem::path& scored_out);

json filter_stage(const std::filesystem::path& scored, const FilterThresholds& thresholds,
                  const std::filesystem::path& retained_out);

/// Writes diversity.json, indistinguishability.json, ratio.json (when a
/// candidate store is given) and metrics.json into report_dir.
json analyze_stage(const std::filesystem::path& retained, const std::filesystem::path& seeds,
                   const std::optional<std::filesystem::path>& candidates, Gateway& gateway,
                   const AnalysisConfig& cfg, const std::filesystem::path& report_dir, const json& config_echo);

// ---------------------------------------------------------------------------
// Fine-tuning export
// ---------------------------------------------------------------------------

inline constexpr int kRftSchemaVersion = 1;

/// One record per pair, ordered by (topic_index, ordinal). Contexts are the
/// texts of the refinement grounding, looked up in `graph`.
std::vector<json> rft_records(std::vector<QAPair> retained, const KnowledgeGraph& graph);

/// Throws EmptyOutputError, writing nothing, when `retained` is empty.
void export_rft(const std::vector<QAPair>& retained, const KnowledgeGraph& graph, const std::filesystem::path& out);

}  // namespace synthqa
