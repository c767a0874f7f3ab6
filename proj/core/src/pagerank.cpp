#include <cmath>

#include "synthqa/knowledge_graph.hpp"

namespace synthqa {

void PageRankConfig::validate() const {
  if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("pagerank: damping must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("pagerank: epsilon must be positive");
  if (max_iters < 1) throw ConfigError("pagerank: max_iters must be positive");
}

PageRankResult personalized_pagerank(const KnowledgeGraph& graph, const std::map<NodeId, double>& seeds,
                                     const PageRankConfig& cfg) {
  cfg.validate();
  const std::size_t n = graph.node_count();
  if (seeds.empty()) throw GraphError("pagerank: no seed nodes");

  std::vector<double> teleport(n, 0.0);
  double mass = 0.0;
  for (const auto& [id, w] : seeds) {
    if (id >= n) {
      throw GraphError("pagerank: seed node " + std::to_string(id) + " is not in the graph (" +
                       std::to_string(n) + " nodes)");
    }
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw GraphError("pagerank: seed '" + graph.node(id).key + "' has invalid mass");
    }
    teleport[id] += w;
    mass += w;
  }
  if (!(mass > 0.0)) throw GraphError("pagerank: seed masses sum to zero");
  for (double& t : teleport) t /= mass;

  const double d = cfg.damping;
  PageRankResult result;
  std::vector<double> rank = teleport;
  std::vector<double> next(n);
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i) next[i] = (1.0 - d) * teleport[i];
    for (NodeId u = 0; u < n; ++u) {
      const double deg = graph.weighted_degree(u);
      if (deg <= 0.0) {
        dangling += rank[u];
        continue;
      }
      const double share = d * rank[u] / deg;
      for (const Neighbor& nb : graph.neighbors(u)) next[nb.node] += share * nb.weight;
    }
    if (dangling > 0.0) {
      for (std::size_t i = 0; i < n; ++i) next[i] += d * dangling * teleport[i];
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - rank[i]);
    rank.swap(next);
    result.iterations = iter;
    result.last_delta = delta;
    if (delta < cfg.epsilon) {
      result.converged = true;
      break;
    }
  }

  double total = 0.0;
  for (double r : rank) total += r;
  for (double& r : rank) r /= total;
  result.scores = std::move(rank);
  return result;
}

}  // namespace synthqa
