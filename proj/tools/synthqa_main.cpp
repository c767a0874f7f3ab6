// synthqa: command line front end for the generation pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure,
// 4 empty-output error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "synthqa/mock_backend.hpp"
#include "synthqa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace synthqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitEmpty = 4;

struct GlobalOptions {
  std::string config;
  std::string out_dir;
  bool resume = false;
  std::optional<std::uint64_t> rng_seed;
  std::string log_level = "info";
};

// Without --config the tool runs against the offline mock backend with
// default settings, which is enough to exercise every subcommand.
PipelineConfig load_config(const GlobalOptions& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) {
    cfg = load_pipeline_config(g.config);
  } else {
    cfg.base_dir = fs::current_path();
    cfg.models.gateway = mock_gateway_config();
    cfg.output_dir = fs::current_path() / "out";
    cfg.analysis.ir.workers = cfg.workers;
    cfg.evaluation.workers = cfg.workers;
  }
  if (!g.out_dir.empty()) cfg.output_dir = fs::absolute(g.out_dir);
  if (g.rng_seed) {
    cfg.generation.rng_seed = *g.rng_seed;
    cfg.analysis.ir.rng_seed = *g.rng_seed;
  }
  return cfg;
}

GenerationConfig generation_of(const PipelineConfig& cfg) {
  GenerationConfig gen = cfg.generation;
  gen.draft_top_k = cfg.graph.top_k;
  gen.refine_top_k = cfg.graph.top_k;
  gen.workers = cfg.workers;
  return gen;
}

std::vector<PipelineStage> parse_stages(const std::string& list) {
  std::vector<PipelineStage> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(pipeline_stage_from_string(item));
  }
  if (out.empty()) throw ConfigError("--stages names no stage");
  return out;
}

void print_counts(const json& counts) { std::cout << counts.dump(2) << "\n"; }

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::exists(path)) throw ConfigError(flag + ": no such file: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded synthetic QA generation pipeline"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--out-dir", g.out_dir, "Output directory, overrides the config");
  app.add_flag("--resume", g.resume, "Skip stages already completed with the same config");
  app.add_option("--rng-seed", g.rng_seed, "Seed for all sampling, overrides the config");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load a corpus and write documents.jsonl and chunks.jsonl");
  std::string corpus, corpus_format, strategy;
  ingest->add_option("--corpus", corpus, "JSONL file or directory of text files");
  ingest->add_option("--format", corpus_format, "jsonl, plaintext-dir or auto");
  ingest->add_option("--strategy", strategy, "none, semantic or uniform");

  // build-graph
  auto* build = app.add_subcommand("build-graph", "Extract triples and build the retrieval index");
  std::string chunks_path, index_out;
  std::optional<double> synonym_threshold;
  build->add_option("--chunks", chunks_path, "Chunk store JSONL")->required();
  build->add_option("--out", index_out, "Index file to write")->required();
  build->add_option("--synonym-threshold", synonym_threshold, "Cosine threshold for synonym edges");

  // generate
  auto* generate = app.add_subcommand("generate", "Draft and refine QA pairs for every topic");
  std::string topics_path, seeds_path, graph_path, candidates_out;
  std::optional<std::size_t> per_topic;
  generate->add_option("--topics", topics_path, "Topic list, one per line")->required();
  generate->add_option("--seeds", seeds_path, "Seed store JSONL")->required();
  generate->add_option("--graph", graph_path, "Index file")->required();
  generate->add_option("--out", candidates_out, "Candidate store to write")->required();
  generate->add_option("--per-topic", per_topic, "Pairs requested per topic");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score candidate pairs and decide retention");
  std::string eval_in, eval_graph, eval_out, thresholds_path;
  evaluate->add_option("--in", eval_in, "Candidate store")->required();
  evaluate->add_option("--graph", eval_graph, "Index file")->required();
  evaluate->add_option("--out", eval_out, "Scored store to write")->required();
  evaluate->add_option("--thresholds", thresholds_path, "JSON file with filter thresholds");

  // filter
  auto* filter = app.add_subcommand("filter", "Keep the retained pairs of a scored store");
  std::string filter_in, filter_out, filter_thresholds;
  filter->add_option("--in", filter_in, "Scored store")->required();
  filter->add_option("--out", filter_out, "Retained store to write")->required();
  filter->add_option("--thresholds", filter_thresholds, "JSON file with filter thresholds");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Write diversity, indistinguishability, ratio and metric reports");
  std::string retained_path, analyze_seeds, report_dir, analyze_candidates;
  analyze->add_option("--retained", retained_path, "Retained store")->required();
  analyze->add_option("--seeds", analyze_seeds, "Seed store JSONL")->required();
  analyze->add_option("--report", report_dir, "Directory for report files")->required();
  analyze->add_option("--candidates", analyze_candidates, "Scored store, enables the ratio report");

  // export-rft
  auto* exporter = app.add_subcommand("export-rft", "Write the fine-tuning JSONL from a retained store");
  std::string export_in, export_graph, export_out;
  exporter->add_option("--in", export_in, "Retained store")->required();
  exporter->add_option("--graph", export_graph, "Index file, for context texts")->required();
  exporter->add_option("--out", export_out, "JSONL file to write")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline end to end from --config");
  std::string stage_list;
  run->add_option("--stages", stage_list, "Comma separated subset, e.g. analyze,export");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("synthqa"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    if (run->parsed()) {
      if (g.config.empty()) throw ConfigError("run needs --config");
      const PipelineConfig cfg = load_config(g);
      RunOptions opts;
      opts.resume = g.resume;
      if (!stage_list.empty()) opts.stages = parse_stages(stage_list);
      const auto manifest = run_pipeline(cfg, opts);
      std::cout << to_json(manifest).dump(2) << "\n";
      return kExitOk;
    }

    const PipelineConfig cfg = load_config(g);
    if (ingest->parsed()) {
      ChunkingConfig chunking = cfg.chunking;
      if (!strategy.empty()) chunking.strategy = chunk_strategy_from_string(strategy);
      const fs::path source = corpus.empty() ? cfg.resolve(cfg.corpus_path) : fs::path(corpus);
      if (source.empty() || !fs::exists(source)) throw ConfigError("ingest: corpus not found: " + source.string());
      std::string fmt = corpus_format.empty() ? cfg.corpus_format : corpus_format;
      const CorpusFormat format = fmt == "jsonl"           ? CorpusFormat::Jsonl
                                  : fmt == "plaintext-dir" ? CorpusFormat::PlaintextDir
                                                           : detect_corpus_format(source);
      fs::create_directories(cfg.output_dir);
      auto gateway = chunking.strategy == ChunkStrategy::Semantic ? make_gateway(cfg) : nullptr;
      print_counts(ingest_stage(source, format, chunking, gateway.get(), cfg.workers,
                                cfg.output_dir / "documents.jsonl", cfg.output_dir / "chunks.jsonl"));
    } else if (build->parsed()) {
      require_file("--chunks", chunks_path);
      auto gateway = make_gateway(cfg);
      const fs::path index(index_out);
      if (index.has_parent_path()) fs::create_directories(index.parent_path());
      fs::path triples = index;
      triples.replace_extension(".triples.jsonl");
      print_counts(build_graph_stage(chunks_path, *gateway, synonym_threshold.value_or(cfg.graph.synonym_threshold),
                                     cfg.workers, triples, index));
    } else if (generate->parsed()) {
      require_file("--topics", topics_path);
      require_file("--seeds", seeds_path);
      require_file("--graph", graph_path);
      GenerationConfig gen = generation_of(cfg);
      if (per_topic) gen.per_topic_count = *per_topic;
      if (gen.per_topic_count == 0) throw ConfigError("--per-topic must be positive");
      auto gateway = make_gateway(cfg);
      const fs::path out(candidates_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      fs::path drafts = out, report = out;
      drafts.replace_extension(".drafts.jsonl");
      report.replace_extension(".topics.json");
      json counts = {{"generate", generate_stage(topics_path, seeds_path, graph_path, *gateway, gen,
                                                 cfg.graph.retrieval, drafts, report)}};
      counts["refine"] = refine_stage(drafts, graph_path, *gateway, gen, cfg.graph.retrieval, out);
      print_counts(counts);
    } else if (evaluate->parsed()) {
      require_file("--in", eval_in);
      require_file("--graph", eval_graph);
      EvalConfig eval = cfg.evaluation;
      if (!thresholds_path.empty()) eval.thresholds = thresholds_from_json(read_json(thresholds_path));
      auto gateway = make_gateway(cfg);
      print_counts(evaluate_stage(eval_in, eval_graph, *gateway, eval, cfg.graph.retrieval, eval_out));
    } else if (filter->parsed()) {
      require_file("--in", filter_in);
      FilterThresholds t = cfg.evaluation.thresholds;
      if (!filter_thresholds.empty()) t = thresholds_from_json(read_json(filter_thresholds));
      print_counts(filter_stage(filter_in, t, filter_out));
    } else if (analyze->parsed()) {
      require_file("--retained", retained_path);
      require_file("--seeds", analyze_seeds);
      std::optional<fs::path> cands;
      if (!analyze_candidates.empty()) {
        require_file("--candidates", analyze_candidates);
        cands = analyze_candidates;
      }
      auto gateway = make_gateway(cfg);
      print_counts(analyze_stage(retained_path, analyze_seeds, cands, *gateway, cfg.analysis, report_dir,
                                 output_relevant_config(cfg)));
    } else if (exporter->parsed()) {
      require_file("--in", export_in);
      require_file("--graph", export_graph);
      const auto retained = load_pairs(export_in);
      export_rft(retained, load_graph(export_graph), export_out);
      print_counts(json{{"records", retained.size()}});
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const EmptyOutputError& e) {
    spdlog::error("empty output: {}", e.what());
    return kExitEmpty;
  } catch (const std::exception& e) {
    spdlog::error("stage failure: {}", e.what());
    return kExitStage;
  }
}
