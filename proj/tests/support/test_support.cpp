#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"
#include "synthqa/rng.hpp"

namespace synthqa::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::uint64_t counter = 0;
  const auto stamp = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto name = "synthqa-test-" + std::to_string(splitmix64(stamp ^ ++counter) % 1000000000ULL);
    path_ = fs::temp_directory_path() / name;
    if (fs::create_directory(path_)) return;
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

LogCapture::LogCapture() : stream_(std::make_shared<std::ostringstream>()) {
  previous_ = spdlog::default_logger();
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(*stream_);
  auto logger = std::make_shared<spdlog::logger>("capture", sink);
  logger->set_level(spdlog::level::trace);
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::trace);
}

LogCapture::~LogCapture() {
  spdlog::set_default_logger(std::static_pointer_cast<spdlog::logger>(previous_));
  spdlog::set_level(spdlog::level::off);
}

std::string LogCapture::text() const {
  spdlog::default_logger()->flush();
  return stream_->str();
}

fs::path fixture_dir() { return SYNTHQA_FIXTURE_DIR; }
fs::path cli_path() { return SYNTHQA_CLI_PATH; }

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<double> dense_ppr_oracle(std::size_t n,
                                     const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
                                     const std::map<std::size_t, double>& seeds, double damping) {
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (const auto& [u, v, weight] : edges) {
    w[u][v] += weight;
    w[v][u] += weight;
  }
  std::vector<double> degree(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) degree[j] += w[i][j];
  }
  std::vector<double> s(n, 0.0);
  double mass = 0.0;
  for (const auto& [node, m] : seeds) mass += m;
  for (const auto& [node, m] : seeds) s[node] = m / mass;

  std::vector<double> r = s;
  for (int iter = 0; iter < 100000; ++iter) {
    std::vector<double> next(n, 0.0);
    double dangling = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (degree[j] == 0.0) dangling += r[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double walk = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (degree[j] > 0.0) walk += w[i][j] / degree[j] * r[j];
      }
      next[i] = (1.0 - damping) * s[i] + damping * (walk + dangling * s[i]);
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - r[i]);
    r = std::move(next);
    if (delta < 1e-15) break;
  }
  return r;
}

std::vector<double> dense_ppr_oracle(const KnowledgeGraph& graph, const std::map<NodeId, double>& seeds,
                                     double damping) {
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
  for (const auto& e : graph.edges()) edges.emplace_back(e.u, e.v, e.weight);
  std::map<std::size_t, double> s(seeds.begin(), seeds.end());
  return dense_ppr_oracle(graph.node_count(), edges, s, damping);
}

std::vector<std::string> oracle_top_passages(const KnowledgeGraph& graph, const std::string& query,
                                             const Embedder& embedder, std::size_t k) {
  std::string key;
  for (char c : query) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const Vector q = embedder({key}).front();
  std::vector<std::pair<double, NodeId>> sims;
  for (NodeId id = 0; id < graph.node_count(); ++id) {
    if (graph.node(id).kind != NodeKind::Phrase) continue;
    double d = 0.0, nq = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      d += q[i] * graph.node(id).embedding[i];
      nq += q[i] * q[i];
    }
    d /= std::sqrt(nq);
    if (d >= 0.5) sims.emplace_back(d, id);
  }
  std::sort(sims.begin(), sims.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  if (sims.size() > 5) sims.resize(5);
  std::map<NodeId, double> seeds;
  for (auto& [sim, id] : sims) seeds[id] = sim;
  const auto scores = dense_ppr_oracle(graph, seeds, 0.85);
  std::vector<std::pair<double, std::string>> passages;
  for (NodeId id = 0; id < graph.node_count(); ++id) {
    if (graph.node(id).kind == NodeKind::Passage) passages.emplace_back(-scores[id], graph.node(id).key);
  }
  std::sort(passages.begin(), passages.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k && i < passages.size(); ++i) out.push_back(passages[i].second);
  return out;
}

double brute_force_mean_cosine(const std::vector<std::vector<double>>& vectors) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      double d = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t k = 0; k < vectors[i].size(); ++k) {
        d += vectors[i][k] * vectors[j][k];
        ni += vectors[i][k] * vectors[i][k];
        nj += vectors[j][k] * vectors[j][k];
      }
      sum += d / (std::sqrt(ni) * std::sqrt(nj));
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

KnowledgeGraph random_graph(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    Node node;
    node.kind = rng.below(3) == 0 ? NodeKind::Passage : NodeKind::Phrase;
    char key[32];
    std::snprintf(key, sizeof key, "n%03zu", i);
    node.key = key;
    nodes.push_back(node);
  }
  std::vector<Edge> edges;
  const std::size_t m = n < 2 ? 0 : rng.below(2 * n + 1);
  for (std::size_t k = 0; k < m; ++k) {
    const auto u = static_cast<NodeId>(rng.below(n));
    const auto v = static_cast<NodeId>(rng.below(n));
    if (u == v) continue;
    const bool phrase_u = nodes[u].kind == NodeKind::Phrase;
    const bool phrase_v = nodes[v].kind == NodeKind::Phrase;
    if (!phrase_u && !phrase_v) continue;  // passages only ever touch phrases
    EdgeKind kind = phrase_u != phrase_v ? EdgeKind::Containment
                                         : (rng.below(2) ? EdgeKind::Relation : EdgeKind::Synonym);
    edges.push_back(Edge{u, v, kind, 0.1 + 2.0 * rng.unit()});
  }
  return KnowledgeGraph::from_parts(std::move(nodes), std::move(edges));
}

Vector random_unit(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  Vector v(dim);
  for (auto& x : v) x = rng.unit() * 2.0 - 1.0;
  return normalized(v);
}

Vector basis(std::size_t dim, std::size_t i) {
  Vector v(dim, 0.0);
  v.at(i) = 1.0;
  return v;
}

QAPair refined_pair(const std::string& id, const std::string& question, const std::string& answer,
                    std::vector<std::string> chunks) {
  QAPair p;
  p.pair_id = id;
  p.topic = "topic";
  p.question = question;
  p.raw_answer = answer;
  p.refined_answer = answer;
  p.grounding.refine = std::move(chunks);
  p.advance(Stage::Refined);
  return p;
}

KnowledgeGraph chain_graph(const Embedder& embedder, std::size_t passages) {
  std::vector<Chunk> chunks;
  std::vector<Triple> triples;
  for (std::size_t i = 1; i <= passages; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "p%02zu", i);
    const std::string a = "alarm" + std::to_string(i);
    const std::string b = "alarm" + std::to_string(i + 1);
    Chunk c;
    c.chunk_id = id;
    c.doc_id = "doc";
    c.text = "Passage " + std::string(id) + ": " + a + " triggers " + b + ".";
    c.token_count = count_tokens(c.text);
    c.span = {0, c.text.size()};
    chunks.push_back(c);
    triples.push_back({a, "triggers", b, id});
  }
  return build_graph(chunks, triples, embedder, 0.99);
}

std::vector<SeedExample> make_seeds(std::size_t count) {
  std::vector<SeedExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string n = std::to_string(i);
    out.push_back({"Seed question " + n + "?", "Seed answer " + n + ".",
                   {"context " + n + "a", "context " + n + "b", "context " + n + "c"}, "topic" + n});
  }
  return out;
}

Document random_document(std::uint64_t seed, std::size_t max_tokens) {
  static const char* kGaps[] = {" ", "  ", "\t", "\n", " \n ", ".\n"};
  Rng rng(seed);
  const std::size_t n = rng.below(max_tokens + 1);
  Document doc;
  doc.doc_id = "rand" + std::to_string(seed);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) doc.body += kGaps[rng.below(6)];
    const std::size_t len = 1 + rng.below(9);
    for (std::size_t c = 0; c < len; ++c) doc.body += static_cast<char>('a' + rng.below(26));
  }
  return doc;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string uniform_tiling_violation(const Document& doc, const std::vector<Chunk>& chunks,
                                     const ChunkingConfig& cfg) {
  const auto words = split_words(doc.body);
  const std::size_t step = cfg.uniform_size - cfg.uniform_overlap;
  if (words.empty()) return chunks.empty() ? "" : "chunks for an empty body";

  std::size_t expected = 1;
  if (words.size() > cfg.uniform_size) expected += (words.size() - cfg.uniform_size + step - 1) / step;
  if (chunks.size() != expected) {
    return "expected " + std::to_string(expected) + " chunks, got " + std::to_string(chunks.size());
  }

  std::vector<std::string> rebuilt;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    const auto where = "chunk " + std::to_string(i) + ": ";
    if (c.text.empty()) return where + "empty";
    if (doc.body.substr(c.span.start, c.span.size()) != c.text) return where + "span does not match text";
    const auto mine = split_words(c.text);
    if (mine.size() != c.token_count) return where + "token_count disagrees";
    const std::size_t first = i * step;
    const std::size_t last = std::min(first + cfg.uniform_size, words.size());
    if (!std::equal(mine.begin(), mine.end(), words.begin() + first, words.begin() + last) ||
        mine.size() != last - first) {
      return where + "window is not tokens [" + std::to_string(first) + ", " + std::to_string(last) + ")";
    }
    if (i > 0) {
      const auto prev = split_words(chunks[i - 1].text);
      const std::size_t shared = cfg.uniform_overlap;
      if (!std::equal(prev.end() - static_cast<std::ptrdiff_t>(shared), prev.end(), mine.begin())) {
        return where + "overlap with the previous chunk is not exactly " + std::to_string(shared);
      }
    }
    rebuilt.insert(rebuilt.end(), mine.begin() + (i == 0 ? 0 : static_cast<std::ptrdiff_t>(cfg.uniform_overlap)),
                   mine.end());
  }
  if (rebuilt != words) return "overlap-free concatenation does not reconstruct the body";
  return "";
}

ChatRequest judge_request(std::vector<ChatMessage> messages) {
  ChatRequest r;
  r.role = ModelRole::Judge;
  r.messages = std::move(messages);
  return r;
}

MockRule marker_discriminator(const std::string& marker) {
  MockRule rule;
  rule.role = ModelRole::Discriminator;
  rule.responder = [marker](const MockCall& call) {
    const std::string needle = ":\nQ: " + marker;
    const auto at = call.prompt.find(needle);
    if (at == std::string::npos) return std::string("no idea");
    const auto start = call.prompt.rfind("Option ", at);
    return call.prompt.substr(start + 7, at - start - 7);
  };
  return rule;
}

MockRule constant_discriminator(const std::string& label) {
  MockRule rule;
  rule.role = ModelRole::Discriminator;
  rule.responses = {label};
  return rule;
}

std::vector<QAPair> synthetic_pairs(std::size_t n, const std::string& marker) {
  std::vector<QAPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%03zu", i);
    out.push_back(refined_pair(id, marker + " question " + std::to_string(i) + "?",
                               "Synthetic answer " + std::to_string(i) + "."));
  }
  return out;
}

namespace {

int stage_rank(Stage s) {
  switch (s) {
    case Stage::Drafted: return 0;
    case Stage::Refined: return 1;
    case Stage::Scored: return 2;
    case Stage::Retained:
    case Stage::Rejected: return 3;
  }
  return -1;
}

}  // namespace

std::string stage_machine_violation(std::uint64_t seed, std::size_t operations) {
  static const Stage kStages[] = {Stage::Drafted, Stage::Refined, Stage::Scored, Stage::Retained, Stage::Rejected};
  Rng rng(seed);
  QAPair pair;
  pair.pair_id = "prop";
  for (std::size_t op = 0; op < operations; ++op) {
    const QAPair before = pair;
    const auto where = "op " + std::to_string(op) + " from " + std::string(to_string(before.stage())) + ": ";
    const auto kind = rng.below(8);
    try {
      if (kind < 4) {
        const Stage target = kStages[rng.below(5)];
        pair.advance(target);
        if (stage_rank(pair.stage()) != stage_rank(before.stage()) + 1 || pair.stage() == Stage::Rejected) {
          return where + "advance did not move exactly one step forward";
        }
      } else if (kind < 7) {
        std::vector<std::string> reasons;
        const auto count = rng.below(3);
        for (std::size_t i = 0; i < count; ++i) reasons.push_back(rng.below(3) == 0 ? "" : "r" + std::to_string(i));
        pair.reject(reasons);
        if (before.terminal()) return where + "terminal pair accepted a rejection";
      } else {
        pair = pair_from_json(to_json(pair));
        if (!(pair == before)) return where + "JSON round trip changed the pair";
      }
    } catch (const StageError&) {
      if (!(pair == before)) return where + "failed move changed the pair";
    } catch (const std::exception& e) {
      return where + "unexpected exception: " + e.what();
    }
    if (stage_rank(pair.stage()) < stage_rank(before.stage())) return where + "moved backwards";
    if (before.terminal() && pair.stage() != before.stage()) return where + "left a terminal stage";
    if (pair.stage() == Stage::Rejected && pair.reject_reasons().empty()) return where + "rejected without a reason";
    if (pair.stage() == Stage::Drafted && op > 0 && before.stage() != Stage::Drafted) return where + "reset";
    if (pair.terminal() && rng.below(4) == 0) {
      pair = QAPair{};
      pair.pair_id = "prop";
    }
  }
  return "";
}

}  // namespace synthqa::testing
