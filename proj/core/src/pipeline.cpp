#include "synthqa/pipeline.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"
#include "synthqa/mock_backend.hpp"

namespace synthqa {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kStageNames[] = {"ingest", "build-graph", "generate", "refine",
                                            "evaluate", "filter", "analyze", "export"};

constexpr std::string_view kDocumentsFile = "documents.jsonl";
constexpr std::string_view kChunksFile = "chunks.jsonl";
constexpr std::string_view kTriplesFile = "triples.jsonl";
constexpr std::string_view kIndexFile = "graph.idx";
constexpr std::string_view kDraftsFile = "drafts.jsonl";
constexpr std::string_view kTopicReportFile = "topics.json";
constexpr std::string_view kCandidatesFile = "candidates.jsonl";
constexpr std::string_view kScoredFile = "scored.jsonl";
constexpr std::string_view kRetainedFile = "retained.jsonl";
constexpr std::string_view kReportDir = "reports";
constexpr std::string_view kRftFile = "rft.jsonl";
constexpr std::string_view kCallLogFile = "logs/gateway_calls.jsonl";

const std::set<std::string> kTopLevelKeys = {"corpus",     "chunking", "graph",    "models",  "generation",
                                             "thresholds", "evaluation", "analysis", "workers", "output_dir"};

CorpusFormat resolve_format(const PipelineConfig& cfg) {
  if (cfg.corpus_format == "jsonl") return CorpusFormat::Jsonl;
  if (cfg.corpus_format == "plaintext-dir") return CorpusFormat::PlaintextDir;
  return detect_corpus_format(cfg.resolve(cfg.corpus_path));
}

// Digest of a file, or of a directory's sorted (name, digest) listing.
std::string path_digest(const fs::path& p) {
  if (!fs::is_directory(p)) return file_sha256(p);
  std::vector<std::string> lines;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file()) lines.push_back(e.path().filename().string() + '\0' + file_sha256(e.path()));
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + '\n';
  return sha256_hex(joined);
}

RetrievalConfig retrieval_config(const PipelineConfig& cfg) { return cfg.graph.retrieval; }

GenerationConfig generation_config(const PipelineConfig& cfg) {
  GenerationConfig g = cfg.generation;
  g.draft_top_k = cfg.graph.top_k;
  g.refine_top_k = cfg.graph.top_k;
  g.workers = cfg.workers;
  return g;
}

json counts_of(const std::vector<QAPair>& pairs) {
  std::map<std::string, std::size_t> by_stage;
  for (const auto& p : pairs) ++by_stage[std::string(to_string(p.stage()))];
  json j = {{"pairs", pairs.size()}};
  for (const auto& [k, v] : by_stage) j[k] = v;
  return j;
}

Retriever make_retriever(const KnowledgeGraph& graph, Gateway& gateway, const RetrievalConfig& retrieval) {
  return Retriever(graph, gateway.embedder(), retrieval);
}

}  // namespace

std::string_view to_string(PipelineStage s) { return kStageNames[static_cast<std::size_t>(s)]; }

PipelineStage pipeline_stage_from_string(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    if (kStageNames[i] == s) return static_cast<PipelineStage>(i);
  }
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

// --- configuration ----------------------------------------------------------

void PipelineConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus.path is required");
  if (corpus_format != "auto" && corpus_format != "jsonl" && corpus_format != "plaintext-dir") {
    throw ConfigError("corpus.format must be auto, jsonl or plaintext-dir");
  }
  if (topics_path.empty()) throw ConfigError("generation.topics is required");
  if (seeds_path.empty()) throw ConfigError("generation.seeds is required");
  chunking.validate();
  if (!(graph.synonym_threshold >= 0.0 && graph.synonym_threshold <= 1.0)) {
    throw ConfigError("graph.synonym_threshold must lie in [0, 1]");
  }
  graph.retrieval.validate();
  if (graph.top_k == 0) throw ConfigError("graph.top_k must be positive");
  if (models.backend != "mock" && models.backend != "http") throw ConfigError("models.backend must be mock or http");
  if (models.timeout.count() <= 0) throw ConfigError("models.timeout_ms must be positive");
  models.gateway.validate();
  for (ModelRole r : kAllModelRoles) {
    if (!models.gateway.roles.count(r)) {
      throw ConfigError("models: role '" + std::string(to_string(r)) + "' has no endpoint");
    }
  }
  if (generation.per_topic_count == 0) throw ConfigError("generation.per_topic_count must be positive");
  if (generation.few_shot_k == 0) throw ConfigError("generation.few_shot_k must be positive");
  if (generation.extra_attempts < 0) throw ConfigError("generation.extra_attempts must be non-negative");
  evaluation.thresholds.validate();
  if (evaluation.relevancy_n == 0) throw ConfigError("evaluation.relevancy_n must be positive");
  if (analysis.bins == 0) throw ConfigError("analysis.bins must be positive");
  analysis.ir.validate();
  if (workers == 0) throw ConfigError("workers must be positive");
}

fs::path PipelineConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopLevelKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  try {
    const json corpus = j.value("corpus", json::object());
    cfg.corpus_path = corpus.value("path", std::string());
    cfg.corpus_format = corpus.value("format", cfg.corpus_format);

    const json chunking = j.value("chunking", json::object());
    cfg.chunking.strategy = chunk_strategy_from_string(chunking.value("strategy", std::string("none")));
    cfg.chunking.uniform_size = chunking.value("uniform_size", cfg.chunking.uniform_size);
    cfg.chunking.uniform_overlap = chunking.value("uniform_overlap", cfg.chunking.uniform_overlap);
    cfg.chunking.semantic_breakpoint = chunking.value("semantic_breakpoint", cfg.chunking.semantic_breakpoint);

    const json graph = j.value("graph", json::object());
    cfg.graph.synonym_threshold = graph.value("synonym_threshold", cfg.graph.synonym_threshold);
    cfg.graph.top_k = graph.value("top_k", cfg.graph.top_k);
    auto& r = cfg.graph.retrieval;
    r.phrase_matches = graph.value("phrase_matches", r.phrase_matches);
    r.match_floor = graph.value("match_floor", r.match_floor);
    r.pagerank.damping = graph.value("damping", r.pagerank.damping);
    r.pagerank.epsilon = graph.value("epsilon", r.pagerank.epsilon);
    r.pagerank.max_iters = graph.value("max_iters", r.pagerank.max_iters);

    json models = j.value("models", json::object());
    cfg.models.backend = models.value("backend", cfg.models.backend);
    cfg.models.mock_script = models.value("mock_script", std::string());
    cfg.models.timeout = std::chrono::milliseconds(models.value("timeout_ms", std::int64_t{60000}));
    const json defaults = models.value("default", json::object());
    json wire = json::object();
    for (const char* key : {"roles", "retry", "max_inflight", "max_input_chars"}) {
      if (models.contains(key)) wire[key] = models[key];
    }
    const GatewayConfig parsed = gateway_config_from_json(wire);
    GatewayConfig g = cfg.models.backend == "mock" ? mock_gateway_config() : GatewayConfig{};
    for (ModelRole role : kAllModelRoles) {
      if (parsed.roles.count(role)) {
        g.roles[role] = parsed.roles.at(role);
      } else if (!defaults.empty()) {
        RoleEndpoint ep = default_role_endpoint(role);
        ep.endpoint_url = defaults.value("endpoint_url", ep.endpoint_url);
        ep.model_name = defaults.value("model_name", ep.model_name);
        ep.api_key_env = defaults.value("api_key_env", ep.api_key_env);
        ep.max_tokens = defaults.value("max_tokens", ep.max_tokens);
        g.roles[role] = ep;
      }
    }
    if (wire.contains("retry")) g.retry = parsed.retry;
    g.max_inflight = parsed.max_inflight;
    g.max_input_chars = parsed.max_input_chars;
    cfg.models.gateway = std::move(g);

    const json gen = j.value("generation", json::object());
    cfg.topics_path = gen.value("topics", std::string());
    cfg.seeds_path = gen.value("seeds", std::string());
    if (!gen.contains("rng_seed")) throw ConfigError("generation.rng_seed is required");
    cfg.generation.rng_seed = gen.at("rng_seed").get<std::uint64_t>();
    cfg.generation.per_topic_count = gen.value("per_topic_count", cfg.generation.per_topic_count);
    cfg.generation.few_shot_k = gen.value("few_shot_k", cfg.generation.few_shot_k);
    cfg.generation.extra_attempts = gen.value("extra_attempts", cfg.generation.extra_attempts);
    cfg.generation.domain = gen.value("domain", cfg.generation.domain);

    if (j.contains("thresholds")) cfg.evaluation.thresholds = thresholds_from_json(j["thresholds"]);
    const json eval = j.value("evaluation", json::object());
    cfg.evaluation.relevancy_n = eval.value("relevancy_n", cfg.evaluation.relevancy_n);

    const json analysis = j.value("analysis", json::object());
    cfg.analysis.bins = analysis.value("bins", cfg.analysis.bins);
    json ir = analysis.value("ir", json::object());
    if (!ir.contains("rng_seed")) ir["rng_seed"] = cfg.generation.rng_seed;
    if (!ir.contains("domain")) ir["domain"] = cfg.generation.domain;
    cfg.analysis.ir = ir_config_from_json(ir);

    cfg.workers = j.value("workers", cfg.workers);
    cfg.output_dir = cfg.resolve(j.value("output_dir", std::string("out")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.evaluation.workers = cfg.workers;
  cfg.analysis.ir.workers = cfg.workers;
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j, fs::absolute(path).parent_path());
}

json canonical_config(const PipelineConfig& cfg) {
  const auto& r = cfg.graph.retrieval;
  json gateway = to_json(cfg.models.gateway);
  return json{
      {"corpus", {{"path", cfg.corpus_path}, {"format", cfg.corpus_format}}},
      {"chunking",
       {{"strategy", to_string(cfg.chunking.strategy)},
        {"uniform_size", cfg.chunking.uniform_size},
        {"uniform_overlap", cfg.chunking.uniform_overlap},
        {"semantic_breakpoint", cfg.chunking.semantic_breakpoint}}},
      {"graph",
       {{"synonym_threshold", cfg.graph.synonym_threshold},
        {"top_k", cfg.graph.top_k},
        {"phrase_matches", r.phrase_matches},
        {"match_floor", r.match_floor},
        {"damping", r.pagerank.damping},
        {"epsilon", r.pagerank.epsilon},
        {"max_iters", r.pagerank.max_iters}}},
      {"models",
       {{"backend", cfg.models.backend},
        {"mock_script", cfg.models.mock_script},
        {"timeout_ms", cfg.models.timeout.count()},
        {"gateway", gateway}}},
      {"generation",
       {{"topics", cfg.topics_path},
        {"seeds", cfg.seeds_path},
        {"rng_seed", cfg.generation.rng_seed},
        {"per_topic_count", cfg.generation.per_topic_count},
        {"few_shot_k", cfg.generation.few_shot_k},
        {"extra_attempts", cfg.generation.extra_attempts},
        {"domain", cfg.generation.domain}}},
      {"thresholds", to_json(cfg.evaluation.thresholds)},
      {"evaluation", {{"relevancy_n", cfg.evaluation.relevancy_n}}},
      {"analysis", {{"bins", cfg.analysis.bins}, {"ir", to_json(cfg.analysis.ir)}}},
      {"workers", cfg.workers}};
}

// Concurrency and timeouts change how fast a run goes, never what it produces.
json output_relevant_config(const PipelineConfig& cfg) {
  json j = canonical_config(cfg);
  j.erase("workers");
  j["models"].erase("timeout_ms");
  j["models"]["gateway"].erase("max_inflight");
  return j;
}

std::string config_hash(const PipelineConfig& cfg) { return sha256_hex(output_relevant_config(cfg).dump()); }

void check_input_paths(const PipelineConfig& cfg, const std::vector<PipelineStage>& stages) {
  auto require = [&](const char* field, const std::string& path) {
    const fs::path p = cfg.resolve(path);
    if (!fs::exists(p)) throw ConfigError("missing input for " + std::string(field) + ": " + p.string());
  };
  if (cfg.models.backend == "mock" && !cfg.models.mock_script.empty()) {
    require("models.mock_script", cfg.models.mock_script);
  }
  for (PipelineStage s : stages) {
    switch (s) {
      case PipelineStage::Ingest:
        require("corpus.path", cfg.corpus_path);
        break;
      case PipelineStage::Generate:
        require("generation.topics", cfg.topics_path);
        require("generation.seeds", cfg.seeds_path);
        break;
      case PipelineStage::Analyze:
        require("generation.seeds", cfg.seeds_path);
        break;
      default:
        break;
    }
  }
}

std::shared_ptr<Gateway> make_gateway(const PipelineConfig& cfg) {
  if (cfg.models.backend == "http") {
    return std::make_shared<Gateway>(cfg.models.gateway, make_http_transport(cfg.models.timeout));
  }
  MockScript script;
  if (!cfg.models.mock_script.empty()) {
    try {
      script = mock_script_from_json(read_json(cfg.resolve(cfg.models.mock_script)));
    } catch (const json::exception& e) {
      throw ConfigError("models.mock_script: " + std::string(e.what()));
    }
  }
  return mock_backend(std::move(script), cfg.models.gateway).gateway;
}

// --- manifest ---------------------------------------------------------------

const StageRecord* RunManifest::find(std::string_view stage) const {
  for (const auto& s : stages) {
    if (s.name == stage) return &s;
  }
  return nullptr;
}

json to_json(const RunManifest& m, bool include_timing) {
  json stages = json::array();
  json timing = json::object();
  for (const auto& s : m.stages) {
    json rec = {{"name", s.name}, {"status", s.status}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"counts", s.counts}};
    if (!s.error.empty()) rec["error"] = s.error;
    stages.push_back(std::move(rec));
    timing[s.name + "_ms"] = s.wall_ms;
  }
  json j = {{"version", m.version}, {"run_id", m.run_id}, {"config_hash", m.config_hash}, {"stages", stages}};
  if (include_timing) j["timing"] = timing;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.version = j.value("version", 1);
  m.run_id = j.at("run_id").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  const json timing = j.value("timing", json::object());
  for (const auto& s : j.at("stages")) {
    StageRecord r;
    r.name = s.at("name").get<std::string>();
    r.status = s.at("status").get<std::string>();
    r.inputs = s.value("inputs", std::map<std::string, std::string>{});
    r.outputs = s.value("outputs", std::map<std::string, std::string>{});
    r.counts = s.value("counts", json::object());
    r.error = s.value("error", std::string());
    r.wall_ms = timing.value(r.name + "_ms", 0.0);
    m.stages.push_back(std::move(r));
  }
  return m;
}

// --- stage bodies -----------------------------------------------------------

json ingest_stage(const fs::path& corpus, CorpusFormat format, const ChunkingConfig& chunking, Gateway* gateway,
                  std::size_t workers, const fs::path& documents_out, const fs::path& chunks_out) {
  chunking.validate();
  const auto loaded = load_corpus(corpus, format);
  Embedder embedder;
  if (chunking.strategy == ChunkStrategy::Semantic) {
    if (!gateway) throw ConfigError("semantic chunking needs an embedding model");
    embedder = gateway->embedder();
  }
  const auto chunks = chunk_corpus(loaded.documents, chunking, embedder, workers);
  std::vector<json> docs, chunk_records;
  for (const auto& d : loaded.documents) docs.push_back(to_json(d));
  for (const auto& c : chunks) chunk_records.push_back(to_json(c));
  write_jsonl(documents_out, docs);
  write_jsonl(chunks_out, chunk_records);
  json skipped = json::array();
  for (const auto& s : loaded.skipped) {
    skipped.push_back({{"source", fs::path(s.source).filename().string()}, {"line", s.line}, {"reason", s.reason}});
  }
  return json{{"documents", loaded.documents.size()},
              {"skipped", loaded.skipped.size()},
              {"skipped_records", skipped},
              {"chunks", chunks.size()}};
}

json build_graph_stage(const fs::path& chunks_path, Gateway& gateway, double synonym_threshold, std::size_t workers,
                       const fs::path& triples_out, const fs::path& index_out) {
  std::vector<Chunk> chunks;
  for (const auto& j : read_jsonl_strict(chunks_path)) chunks.push_back(chunk_from_json(j));
  const auto outcomes = extract_all(chunks, gateway, workers);
  std::vector<Triple> triples;
  std::size_t dropped = 0, unindexed = 0;
  json unindexed_ids = json::array();
  for (const auto& o : outcomes) {
    dropped += o.dropped;
    if (!o.indexed) {
      ++unindexed;
      unindexed_ids.push_back(o.chunk_id);
    }
    triples.insert(triples.end(), o.triples.begin(), o.triples.end());
  }
  std::vector<json> records;
  for (const auto& t : triples) records.push_back(to_json(t));
  write_jsonl(triples_out, records);
  const auto graph = build_graph(chunks, triples, gateway.embedder(), synonym_threshold);
  save_graph(graph, index_out);
  std::size_t by_kind[3] = {0, 0, 0};
  for (const auto& e : graph.edges()) ++by_kind[static_cast<int>(e.kind)];
  return json{{"chunks", chunks.size()},
              {"triples", triples.size()},
              {"dropped_lines", dropped},
              {"unindexed_chunks", unindexed},
              {"unindexed", unindexed_ids},
              {"phrase_nodes", graph.phrase_count()},
              {"passage_nodes", graph.passage_count()},
              {"relation_edges", by_kind[0]},
              {"containment_edges", by_kind[1]},
              {"synonym_edges", by_kind[2]}};
}

json generate_stage(const fs::path& topics_path, const fs::path& seeds_path, const fs::path& index, Gateway& gateway,
                    const GenerationConfig& gen, const RetrievalConfig& retrieval, const fs::path& drafts_out,
                    const fs::path& topic_report_out) {
  const auto topics = load_topics(topics_path, gen.per_topic_count);
  const auto seeds = load_seeds(seeds_path);
  const auto graph = load_graph(index);
  const auto retriever = make_retriever(graph, gateway, retrieval);
  const auto result = draft_topics(topics, seeds, retriever, gateway, gen);
  save_pairs(drafts_out, result.drafts);
  json report = json::array();
  std::size_t flagged = 0, malformed = 0;
  for (const auto& t : result.topics) {
    report.push_back(to_json(t));
    flagged += t.flagged ? 1 : 0;
    malformed += t.malformed;
  }
  write_json(topic_report_out, json{{"topics", report}});
  return json{{"topics", topics.size()},
              {"drafted", result.drafts.size()},
              {"malformed_blocks", malformed},
              {"flagged_topics", flagged}};
}

json refine_stage(const fs::path& drafts, const fs::path& index, Gateway& gateway, const GenerationConfig& gen,
                  const RetrievalConfig& retrieval, const fs::path& candidates_out) {
  const auto graph = load_graph(index);
  const auto retriever = make_retriever(graph, gateway, retrieval);
  auto refined = refine_pairs(load_pairs(drafts), retriever, gateway, gen);
  save_pairs(candidates_out, refined);
  return counts_of(refined);
}

json evaluate_stage(const fs::path& candidates, const fs::path& index, Gateway& gateway, const EvalConfig& eval,
                    const RetrievalConfig& retrieval, const fs::path& scored_out) {
  const auto graph = load_graph(index);
  const auto retriever = make_retriever(graph, gateway, retrieval);
  auto scored = evaluate_pairs(load_pairs(candidates), retriever, gateway, eval);
  save_pairs(scored_out, scored);
  json counts = counts_of(scored);
  std::map<std::string, std::size_t> reasons;
  for (const auto& p : scored) {
    for (const auto& r : p.reject_reasons()) ++reasons[r];
  }
  counts["reject_reasons"] = reasons;
  return counts;
}

json filter_stage(const fs::path& scored, const FilterThresholds& thresholds, const fs::path& retained_out) {
  const auto all = load_pairs(scored);
  const auto kept = retained_pairs(all, thresholds);
  save_pairs(retained_out, kept);
  return json{{"scored", all.size()}, {"retained", kept.size()}};
}

json analyze_stage(const fs::path& retained_path, const fs::path& seeds_path,
                   const std::optional<fs::path>& candidates_path, Gateway& gateway, const AnalysisConfig& cfg,
                   const fs::path& report_dir, const json& config_echo) {
  const auto retained = load_pairs(retained_path);
  const auto seeds = load_seeds(seeds_path);
  fs::create_directories(report_dir);
  json counts = json::object();
  const Embedder embedder = gateway.embedder();

  json diversity = {{"synthetic", nullptr}, {"seeds", nullptr}, {"comparison", nullptr}};
  std::optional<DiversityReport> synth_div, seed_div;
  if (retained.size() >= 2) {
    std::vector<std::string> qs;
    for (const auto& p : retained) qs.push_back(p.question);
    synth_div = pairwise_diversity(qs, embedder, cfg.bins);
    diversity["synthetic"] = to_json(*synth_div);
    counts["diversity_mean"] = synth_div->mean_similarity;
  } else {
    diversity["note"] = "fewer than two retained questions";
  }
  if (seeds.size() >= 2) {
    std::vector<std::string> qs;
    for (const auto& s : seeds) qs.push_back(s.question);
    seed_div = pairwise_diversity(qs, embedder, cfg.bins);
    diversity["seeds"] = to_json(*seed_div);
  }
  if (synth_div && seed_div) diversity["comparison"] = to_json(compare_datasets(*synth_div, *seed_div));
  write_json(report_dir / "diversity.json",
             report_document("diversity", config_echo, diversity));

  json ir = nullptr;
  if (!retained.empty()) {
    const auto report = indistinguishability_rate(retained, seeds, gateway, cfg.ir);
    ir = to_json(report);
    counts["ir"] = report.ir;
  }
  write_json(report_dir / "indistinguishability.json", report_document("indistinguishability", config_echo, ir));

  std::vector<QAPair> scored;
  if (candidates_path) {
    scored = load_pairs(*candidates_path);
    const auto ratio = generation_ratio(scored, retained);
    write_json(report_dir / "ratio.json", report_document("ratio", config_echo, to_json(ratio)));
    counts["ratio_percent"] = ratio.percent();
  }
  json histograms = json::object();
  for (const auto& [name, h] : metric_histograms(candidates_path ? scored : retained, cfg.bins)) {
    histograms[name] = to_json(h);
  }
  write_json(report_dir / "metrics.json", report_document("metrics", config_echo, histograms));
  counts["retained"] = retained.size();
  return counts;
}

// --- export -----------------------------------------------------------------

std::vector<json> rft_records(std::vector<QAPair> retained, const KnowledgeGraph& graph) {
  sort_pairs(retained);
  std::vector<json> out;
  for (const auto& p : retained) {
    json contexts = json::array();
    for (const auto& id : p.grounding.refine) {
      const auto node = graph.find(NodeKind::Passage, id);
      if (!node) throw GraphError("pair " + p.pair_id + " is grounded on unknown chunk " + id);
      contexts.push_back(graph.node(*node).text);
    }
    json provenance = to_json(p)["provenance"];
    provenance["pair_id"] = p.pair_id;
    provenance["topic"] = p.topic;
    provenance["context_ids"] = p.grounding.refine;
    out.push_back(json{{"schema_version", kRftSchemaVersion},
                       {"prompt", p.question},
                       {"response", p.refined_answer},
                       {"contexts", contexts},
                       {"scores", p.scores ? to_json(*p.scores) : json(nullptr)},
                       {"provenance", provenance}});
  }
  return out;
}

void export_rft(const std::vector<QAPair>& retained, const KnowledgeGraph& graph, const fs::path& out) {
  if (retained.empty()) throw EmptyOutputError("export: the retained store is empty, nothing to export");
  write_jsonl(out, rft_records(retained, graph));
}

// --- orchestration ----------------------------------------------------------

RunManifest run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::vector<PipelineStage> stages =
      options.stages ? *options.stages : std::vector<PipelineStage>(std::begin(kAllStages), std::end(kAllStages));
  std::sort(stages.begin(), stages.end());
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  check_input_paths(cfg, stages);

  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const fs::path manifest_path = out / kManifestFile;

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.run_id = "run-" + manifest.config_hash.substr(0, 16);
  if (fs::exists(manifest_path)) {
    auto previous = manifest_from_json(read_json(manifest_path));
    if (previous.config_hash == manifest.config_hash) {
      manifest.stages = std::move(previous.stages);
    } else if (options.resume) {
      throw ConfigError("cannot resume: the config changed since " + manifest_path.string() + " was written");
    }
  }

  const auto gateway = options.gateway ? options.gateway : make_gateway(cfg);
  auto art = [&](std::string_view name) { return out / name; };
  const fs::path reports = art(kReportDir);
  const json echo = output_relevant_config(cfg);

  auto outputs_intact = [&](const StageRecord& r) {
    for (const auto& [rel, digest] : r.outputs) {
      const fs::path p = out / rel;
      if (!fs::exists(p) || file_sha256(p) != digest) return false;
    }
    return true;
  };
  auto store = [&](StageRecord rec) {
    auto it = std::find_if(manifest.stages.begin(), manifest.stages.end(),
                           [&](const StageRecord& s) { return s.name == rec.name; });
    if (it != manifest.stages.end()) {
      *it = std::move(rec);
    } else {
      manifest.stages.push_back(std::move(rec));
    }
    std::sort(manifest.stages.begin(), manifest.stages.end(), [](const StageRecord& a, const StageRecord& b) {
      return pipeline_stage_from_string(a.name) < pipeline_stage_from_string(b.name);
    });
    write_json(manifest_path, to_json(manifest));
  };

  for (PipelineStage stage : stages) {
    const std::string name(to_string(stage));
    if (options.resume) {
      const StageRecord* done = manifest.find(name);
      if (done && done->status == "completed" && outputs_intact(*done)) {
        spdlog::info("resume: skipping completed stage {}", name);
        continue;
      }
    }

    StageRecord rec;
    rec.name = name;
    std::vector<std::string> inputs_internal, outputs;
    std::vector<std::pair<std::string, fs::path>> inputs_external;
    const auto started = std::chrono::steady_clock::now();
    spdlog::info("stage {} starting", name);
    try {
      switch (stage) {
        case PipelineStage::Ingest:
          inputs_external = {{cfg.corpus_path, cfg.resolve(cfg.corpus_path)}};
          rec.counts = ingest_stage(cfg.resolve(cfg.corpus_path), resolve_format(cfg), cfg.chunking, gateway.get(),
                                    cfg.workers, art(kDocumentsFile), art(kChunksFile));
          outputs = {std::string(kDocumentsFile), std::string(kChunksFile)};
          break;
        case PipelineStage::BuildGraph:
          inputs_internal = {std::string(kChunksFile)};
          rec.counts = build_graph_stage(art(kChunksFile), *gateway, cfg.graph.synonym_threshold, cfg.workers,
                                         art(kTriplesFile), art(kIndexFile));
          outputs = {std::string(kTriplesFile), std::string(kIndexFile)};
          break;
        case PipelineStage::Generate:
          inputs_external = {{cfg.topics_path, cfg.resolve(cfg.topics_path)},
                             {cfg.seeds_path, cfg.resolve(cfg.seeds_path)}};
          inputs_internal = {std::string(kIndexFile)};
          rec.counts = generate_stage(cfg.resolve(cfg.topics_path), cfg.resolve(cfg.seeds_path), art(kIndexFile),
                                      *gateway, generation_config(cfg), retrieval_config(cfg), art(kDraftsFile),
                                      art(kTopicReportFile));
          outputs = {std::string(kDraftsFile), std::string(kTopicReportFile)};
          break;
        case PipelineStage::Refine:
          inputs_internal = {std::string(kDraftsFile), std::string(kIndexFile)};
          rec.counts = refine_stage(art(kDraftsFile), art(kIndexFile), *gateway, generation_config(cfg),
                                    retrieval_config(cfg), art(kCandidatesFile));
          outputs = {std::string(kCandidatesFile)};
          break;
        case PipelineStage::Evaluate:
          inputs_internal = {std::string(kCandidatesFile), std::string(kIndexFile)};
          rec.counts = evaluate_stage(art(kCandidatesFile), art(kIndexFile), *gateway, cfg.evaluation,
                                      retrieval_config(cfg), art(kScoredFile));
          outputs = {std::string(kScoredFile)};
          break;
        case PipelineStage::Filter:
          inputs_internal = {std::string(kScoredFile)};
          rec.counts = filter_stage(art(kScoredFile), cfg.evaluation.thresholds, art(kRetainedFile));
          outputs = {std::string(kRetainedFile)};
          break;
        case PipelineStage::Analyze:
          inputs_external = {{cfg.seeds_path, cfg.resolve(cfg.seeds_path)}};
          inputs_internal = {std::string(kRetainedFile), std::string(kScoredFile)};
          rec.counts = analyze_stage(art(kRetainedFile), cfg.resolve(cfg.seeds_path), art(kScoredFile), *gateway,
                                     cfg.analysis, reports, echo);
          for (const char* f : {"diversity.json", "indistinguishability.json", "ratio.json", "metrics.json"}) {
            outputs.push_back(std::string(kReportDir) + "/" + f);
          }
          break;
        case PipelineStage::Export: {
          inputs_internal = {std::string(kRetainedFile), std::string(kIndexFile)};
          const auto retained = load_pairs(art(kRetainedFile));
          export_rft(retained, load_graph(art(kIndexFile)), art(kRftFile));
          rec.counts = json{{"records", retained.size()}};
          outputs = {std::string(kRftFile)};
          break;
        }
      }
      for (const auto& [label, p] : inputs_external) rec.inputs[label] = path_digest(p);
      for (const auto& rel : inputs_internal) rec.inputs[rel] = file_sha256(out / rel);
      for (const auto& rel : outputs) rec.outputs[rel] = file_sha256(out / rel);
      rec.status = "completed";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      store(std::move(rec));
      spdlog::error("stage {} failed: {}", name, e.what());
      if (dynamic_cast<const EmptyOutputError*>(&e) || dynamic_cast<const ConfigError*>(&e)) throw;
      throw StageFailure(stage, e.what());
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    spdlog::info("stage {} done in {:.0f} ms", name, rec.wall_ms);
    store(std::move(rec));
  }

  std::vector<json> calls;
  for (const auto& c : gateway->call_log()) calls.push_back(to_json(c));
  fs::create_directories(art(kCallLogFile).parent_path());
  write_jsonl(art(kCallLogFile), calls);
  write_json(manifest_path, to_json(manifest));
  return manifest;
}

}  // namespace synthqa
