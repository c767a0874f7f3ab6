#include <bit>
#include <cstring>

#include "synthqa/hash.hpp"
#include "synthqa/knowledge_graph.hpp"

namespace synthqa {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'K', 'G', 'I', 'D', 'X', '\0'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_same_v<T, double>) {
      put(std::bit_cast<std::uint64_t>(value));
    } else {
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf_ += static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
      }
    }
  }
  void put_bytes(std::string_view s) { buf_.append(s); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint64_t>(s.size()));
    put_bytes(s);
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(get<std::uint64_t>());
    } else {
      need(sizeof(T));
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
      }
      pos_ += sizeof(T);
      return static_cast<T>(v);
    }
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return std::string(get_bytes(get<std::uint64_t>())); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw GraphError("graph index is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_graph(const KnowledgeGraph& graph) {
  Writer w;
  w.put_bytes(std::string_view(kMagic, sizeof kMagic));
  w.put(kGraphIndexVersion);
  w.put(static_cast<std::uint64_t>(graph.node_count()));
  w.put(static_cast<std::uint64_t>(graph.edges().size()));
  w.put(static_cast<std::uint32_t>(graph.embedding_dim()));
  w.put_string(graph.metadata().dump());

  for (const Node& node : graph.nodes()) {
    w.put(static_cast<std::uint8_t>(node.kind));
    w.put_string(node.key);
    w.put_string(node.text);
  }
  for (const Edge& e : graph.edges()) {
    w.put(e.u);
    w.put(e.v);
    w.put(static_cast<std::uint8_t>(e.kind));
    w.put(e.weight);
  }
  for (const Node& node : graph.nodes()) {
    for (double x : node.embedding) w.put(x);
  }
  w.put(fnv1a64(w.str()));
  return std::move(w.str());
}

KnowledgeGraph deserialize_graph(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw GraphError("not a graph index file");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader trailer(bytes.substr(bytes.size() - 8));
  if (trailer.get<std::uint64_t>() != fnv1a64(body)) throw GraphError("graph index checksum mismatch");

  Reader r(body);
  r.get_bytes(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kGraphIndexVersion) {
    throw GraphError("unsupported graph index version " + std::to_string(version));
  }
  const auto node_count = r.get<std::uint64_t>();
  const auto edge_count = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  json metadata = json::parse(r.get_string());

  std::vector<Node> nodes(node_count);
  for (auto& node : nodes) {
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw GraphError("graph index holds an unknown node kind");
    node.kind = static_cast<NodeKind>(kind);
    node.key = r.get_string();
    node.text = r.get_string();
  }
  std::vector<Edge> edges(edge_count);
  for (auto& e : edges) {
    e.u = r.get<std::uint32_t>();
    e.v = r.get<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 2) throw GraphError("graph index holds an unknown edge kind");
    e.kind = static_cast<EdgeKind>(kind);
    e.weight = r.get<double>();
  }
  for (auto& node : nodes) {
    node.embedding.resize(dim);
    for (double& x : node.embedding) x = r.get<double>();
  }
  if (r.position() != body.size()) throw GraphError("graph index has trailing bytes");
  return KnowledgeGraph::from_parts(std::move(nodes), std::move(edges), std::move(metadata));
}

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
  write_text_file(path, serialize_graph(graph));
}

KnowledgeGraph load_graph(const std::filesystem::path& path) { return deserialize_graph(read_text_file(path)); }

}  // namespace synthqa
