#pragma once

// Heterogeneous temporal sensor graphs: two node kinds (low-frequency L,
// high-frequency H), four relations (L-L, H-H, L-H, H-L). Graphs are
// immutable after construction; all builders are pure.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "htgnn/errors.hpp"

namespace htgnn::graph {

using json = nlohmann::json;

enum class NodeKind { Low, High };

inline std::string kind_name(NodeKind k) {
  return k == NodeKind::Low ? "L" : "H";
}

enum class RelationId : int { LL = 0, HH = 1, LH = 2, HL = 3 };

constexpr std::array<RelationId, 4> kAllRelations = {
    RelationId::LL, RelationId::HH, RelationId::LH, RelationId::HL};

struct RelationType {
  NodeKind source;
  NodeKind target;
  bool directed;
};

inline RelationType relation_type(RelationId r) {
  switch (r) {
    case RelationId::LL: return {NodeKind::Low, NodeKind::Low, false};
    case RelationId::HH: return {NodeKind::High, NodeKind::High, false};
    case RelationId::LH: return {NodeKind::Low, NodeKind::High, true};
    case RelationId::HL: return {NodeKind::High, NodeKind::Low, true};
  }
  throw Error("unreachable relation id");
}

inline std::string relation_name(RelationId r) {
  switch (r) {
    case RelationId::LL: return "L-L";
    case RelationId::HH: return "H-H";
    case RelationId::LH: return "L-H";
    case RelationId::HL: return "H-L";
  }
  throw Error("unreachable relation id");
}

struct Node {
  NodeKind kind;
  std::string subtype;  // free-form label, e.g. "T OR", "V AX", "D", "A"
  int index = 0;        // index within the subtype
  std::string position; // physical placement tag
};

using EdgeList = std::vector<std::pair<int, int>>;  // (source, target) in node_order

class HeteroTemporalGraph {
 public:
  // `edges` holds directed pairs per relation; for undirected relations both
  // orientations must be present (enforced here). Edge lists are canonicalized
  // (sorted, deduplicated) so equal specs serialize byte-identically.
  static HeteroTemporalGraph from_parts(std::vector<Node> nodes,
                                        std::array<EdgeList, 4> edges,
                                        bool enforce_heterogeneity = true) {
    HeteroTemporalGraph g;
    g.nodes_ = std::move(nodes);
    sort_node_order(g.nodes_);
    for (RelationId r : kAllRelations) {
      EdgeList& el = edges[static_cast<int>(r)];
      const RelationType rt = relation_type(r);
      std::set<std::pair<int, int>> uniq;
      for (auto [i, j] : el) {
        if (i < 0 || j < 0 || i >= static_cast<int>(g.nodes_.size()) ||
            j >= static_cast<int>(g.nodes_.size()))
          throw DanglingEdge(relation_name(r) + " edge references missing node");
        if (g.nodes_[i].kind != rt.source || g.nodes_[j].kind != rt.target)
          throw DanglingEdge(relation_name(r) + " edge endpoint has wrong node type");
        if (i == j) throw DanglingEdge(relation_name(r) + " self-loop not allowed");
        uniq.emplace(i, j);
        if (!rt.directed) uniq.emplace(j, i);
      }
      g.edges_[static_cast<int>(r)].assign(uniq.begin(), uniq.end());
    }
    if (enforce_heterogeneity && g.heterogeneity_order() <= 2)
      throw Error("graph violates heterogeneity condition |A|+|R| > 2");
    return g;
  }

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int i) const { return nodes_[i]; }
  const EdgeList& edges(RelationId r) const { return edges_[static_cast<int>(r)]; }

  int count(NodeKind k) const {
    int n = 0;
    for (const Node& v : nodes_)
      if (v.kind == k) ++n;
    return n;
  }

  std::vector<int> nodes_of_kind(NodeKind k) const {
    std::vector<int> out;
    for (int i = 0; i < n_nodes(); ++i)
      if (nodes_[i].kind == k) out.push_back(i);
    return out;
  }

  // node kinds present + relations carrying at least one edge
  int heterogeneity_order() const {
    std::set<NodeKind> kinds;
    for (const Node& v : nodes_) kinds.insert(v.kind);
    int rels = 0;
    for (RelationId r : kAllRelations)
      if (!edges(r).empty()) ++rels;
    return static_cast<int>(kinds.size()) + rels;
  }

  json to_json() const {
    json jn = json::array();
    for (const Node& v : nodes_)
      jn.push_back({{"type", kind_name(v.kind)},
                    {"subtype", v.subtype},
                    {"index", v.index},
                    {"position", v.position}});
    json je = json::object();
    for (RelationId r : kAllRelations) {
      json el = json::array();
      for (auto [i, j] : edges(r)) el.push_back(json::array({i, j}));
      je[relation_name(r)] = std::move(el);
    }
    return json{{"nodes", std::move(jn)}, {"edges", std::move(je)}};
  }

  static HeteroTemporalGraph from_json(const json& j,
                                       bool enforce_heterogeneity = true) {
    std::vector<Node> nodes;
    for (const auto& n : j.at("nodes")) {
      Node v;
      const std::string tn = n.at("type").get<std::string>();
      if (tn == "L") v.kind = NodeKind::Low;
      else if (tn == "H") v.kind = NodeKind::High;
      else throw ConfigError("unknown node type '" + tn + "'");
      v.subtype = n.at("subtype").get<std::string>();
      v.index = n.at("index").get<int>();
      v.position = n.value("position", "");
      nodes.push_back(std::move(v));
    }
    std::array<EdgeList, 4> edges;
    for (RelationId r : kAllRelations) {
      const auto& el = j.at("edges").at(relation_name(r));
      for (const auto& e : el)
        edges[static_cast<int>(r)].emplace_back(e.at(0).get<int>(),
                                                e.at(1).get<int>());
    }
    return from_parts(std::move(nodes), std::move(edges), enforce_heterogeneity);
  }

  bool operator==(const HeteroTemporalGraph& o) const {
    return to_json() == o.to_json();
  }

 private:
  static void sort_node_order(std::vector<Node>& nodes) {
    std::stable_sort(nodes.begin(), nodes.end(),
                     [](const Node& a, const Node& b) {
                       if (a.kind != b.kind) return a.kind == NodeKind::Low;
                       if (a.subtype != b.subtype) return a.subtype < b.subtype;
                       return a.index < b.index;
                     });
  }

  std::vector<Node> nodes_;
  std::array<EdgeList, 4> edges_;
};

// ---- rule-based construction ------------------------------------------------

struct NodeSpec {
  NodeKind kind;
  std::string subtype;
  int index = 0;
  std::string position;
};

struct EdgeRule {
  enum class Kind { Chain, Complete, BipartiteFull, Pairs };
  RelationId relation;
  Kind kind = Kind::Complete;
  // Optional subtype filters; empty means "all nodes of the relation's kind".
  std::string source_subtype;
  std::string target_subtype;
  // For Kind::Pairs: (source index-within-subtype, target index-within-subtype)
  std::vector<std::pair<int, int>> pairs;
};

inline HeteroTemporalGraph build_graph(const std::vector<NodeSpec>& specs,
                                       const std::vector<EdgeRule>& rules) {
  if (specs.empty()) throw EmptyTypePartition("node list is empty");
  std::vector<Node> nodes;
  std::set<std::string> subtypes;
  for (const NodeSpec& s : specs) {
    nodes.push_back(Node{s.kind, s.subtype, s.index, s.position});
    subtypes.insert(s.subtype);
  }
  // Resolve node_order first so rules operate on final indices.
  HeteroTemporalGraph ordered =
      HeteroTemporalGraph::from_parts(nodes, {}, /*enforce=*/false);

  auto select = [&](NodeKind k, const std::string& subtype) {
    if (!subtype.empty() && !subtypes.count(subtype))
      throw UnknownSubtype("'" + subtype + "' is not a declared subtype");
    std::vector<int> out;
    for (int i = 0; i < ordered.n_nodes(); ++i) {
      const Node& v = ordered.node(i);
      if (v.kind == k && (subtype.empty() || v.subtype == subtype))
        out.push_back(i);
    }
    return out;
  };

  std::array<EdgeList, 4> edges;
  for (const EdgeRule& rule : rules) {
    const RelationType rt = relation_type(rule.relation);
    const std::vector<int> src = select(rt.source, rule.source_subtype);
    const std::vector<int> dst = select(rt.target, rule.target_subtype);
    if (src.empty() || dst.empty())
      throw EmptyTypePartition("relation " + relation_name(rule.relation) +
                               " has no possible endpoints");
    EdgeList& el = edges[static_cast<int>(rule.relation)];
    switch (rule.kind) {
      case EdgeRule::Kind::Chain:
        for (std::size_t k = 0; k + 1 < src.size(); ++k)
          el.emplace_back(src[k], src[k + 1]);
        break;
      case EdgeRule::Kind::Complete:
        for (int i : src)
          for (int j : dst)
            if (i != j) el.emplace_back(i, j);
        break;
      case EdgeRule::Kind::BipartiteFull:
        for (int i : src)
          for (int j : dst)
            if (i != j) el.emplace_back(i, j);
        break;
      case EdgeRule::Kind::Pairs:
        for (auto [a, b] : rule.pairs) {
          int i = -1, j = -1;
          for (int c : src)
            if (ordered.node(c).index == a) i = c;
          for (int c : dst)
            if (ordered.node(c).index == b) j = c;
          if (i < 0 || j < 0)
            throw DanglingEdge("pair rule references a missing node index");
          el.emplace_back(i, j);
        }
        break;
    }
  }
  return HeteroTemporalGraph::from_parts(ordered.nodes(), std::move(edges));
}

// ---- reference topologies -----------------------------------------------------

namespace detail {

inline int ang_dist(int a, int b) {
  int d = std::abs(a - b) % 360;
  return std::min(d, 360 - d);
}

}  // namespace detail

// Two tapered-roller bearings. Per bearing: 8 outer-ring temperature sensors
// in a ring, 2 inner-ring temperature sensors, 3 axial + 3 radial vibration
// sensors. Inner-ring nodes are fully connected across both bearings;
// vibration nodes link to the same-position node on the other bearing and to
// their two nearest outer-ring temperature sensors (directed, both ways).
inline HeteroTemporalGraph bearing_topology() {
  struct P { NodeKind kind; std::string subtype; int index; int bearing; int angle; };
  std::vector<P> placed;
  const std::array<int, 3> ax_angles = {0, 120, 240};
  const std::array<int, 3> ra_angles = {60, 180, 300};
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 8; ++k)
      placed.push_back({NodeKind::Low, "T OR", b * 8 + k, b, k * 45});
    for (int k = 0; k < 2; ++k)
      placed.push_back({NodeKind::Low, "T IR", b * 2 + k, b, k * 180});
    for (int k = 0; k < 3; ++k)
      placed.push_back({NodeKind::High, "V AX", b * 3 + k, b, ax_angles[k]});
    for (int k = 0; k < 3; ++k)
      placed.push_back({NodeKind::High, "V RA", b * 3 + k, b, ra_angles[k]});
  }
  std::vector<Node> nodes;
  for (const P& p : placed)
    nodes.push_back(Node{p.kind, p.subtype, p.index,
                         "B" + std::to_string(p.bearing) + "@" +
                             std::to_string(p.angle)});
  HeteroTemporalGraph ordered =
      HeteroTemporalGraph::from_parts(nodes, {}, /*enforce=*/false);

  auto find = [&](const std::string& subtype, int index) {
    for (int i = 0; i < ordered.n_nodes(); ++i)
      if (ordered.node(i).subtype == subtype && ordered.node(i).index == index)
        return i;
    throw Error("bearing topology: node lookup failed");
  };
  auto meta = [&](int i) -> const P& {
    for (const P& p : placed)
      if (p.subtype == ordered.node(i).subtype && p.index == ordered.node(i).index)
        return p;
    throw Error("bearing topology: meta lookup failed");
  };

  std::array<EdgeList, 4> edges;
  EdgeList& ll = edges[static_cast<int>(RelationId::LL)];
  EdgeList& hh = edges[static_cast<int>(RelationId::HH)];
  EdgeList& lh = edges[static_cast<int>(RelationId::LH)];
  EdgeList& hl = edges[static_cast<int>(RelationId::HL)];

  for (int b = 0; b < 2; ++b) {
    // outer-ring temperature ring
    for (int k = 0; k < 8; ++k)
      ll.emplace_back(find("T OR", b * 8 + k), find("T OR", b * 8 + (k + 1) % 8));
    // vibration ring by angle within the bearing
    std::vector<int> vibs;
    for (int i = 0; i < ordered.n_nodes(); ++i)
      if (ordered.node(i).kind == NodeKind::High && meta(i).bearing == b)
        vibs.push_back(i);
    std::sort(vibs.begin(), vibs.end(),
              [&](int a, int c) { return meta(a).angle < meta(c).angle; });
    for (std::size_t k = 0; k < vibs.size(); ++k)
      hh.emplace_back(vibs[k], vibs[(k + 1) % vibs.size()]);
  }
  // all inner-ring nodes mutually connected (uniform inner-ring temperature)
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      ll.emplace_back(find("T IR", a), find("T IR", b));
  // cross-bearing proximity: same-position vibration pairs
  for (int k = 0; k < 3; ++k) {
    hh.emplace_back(find("V AX", k), find("V AX", 3 + k));
    hh.emplace_back(find("V RA", k), find("V RA", 3 + k));
  }
  // T<->V by angular proximity within the bearing: two nearest OR sensors
  for (int i = 0; i < ordered.n_nodes(); ++i) {
    if (ordered.node(i).kind != NodeKind::High) continue;
    const P& v = meta(i);
    std::vector<std::pair<int, int>> cands;  // (distance, node)
    for (int k = 0; k < 8; ++k) {
      const int j = find("T OR", v.bearing * 8 + k);
      cands.emplace_back(detail::ang_dist(v.angle, meta(j).angle), j);
    }
    std::sort(cands.begin(), cands.end());
    for (int k = 0; k < 2; ++k) {
      lh.emplace_back(cands[k].second, i);
      hl.emplace_back(i, cands[k].second);
    }
  }
  return HeteroTemporalGraph::from_parts(ordered.nodes(), std::move(edges));
}

// Bridge span with displacement (D, low-frequency) and acceleration
// (A, high-frequency) sensors co-located along the span: chain adjacency
// within each type, directed D-A / A-D edges between co-located pairs.
inline HeteroTemporalGraph bridge_topology(int n_d = 4, int n_a = 4) {
  std::vector<Node> nodes;
  for (int k = 0; k < n_d; ++k)
    nodes.push_back(Node{NodeKind::Low, "D", k, "span" + std::to_string(k)});
  for (int k = 0; k < n_a; ++k)
    nodes.push_back(Node{NodeKind::High, "A", k, "span" + std::to_string(k)});
  HeteroTemporalGraph ordered =
      HeteroTemporalGraph::from_parts(nodes, {}, /*enforce=*/false);

  auto find = [&](const std::string& subtype, int index) {
    for (int i = 0; i < ordered.n_nodes(); ++i)
      if (ordered.node(i).subtype == subtype && ordered.node(i).index == index)
        return i;
    throw Error("bridge topology: node lookup failed");
  };

  std::array<EdgeList, 4> edges;
  for (int k = 0; k + 1 < n_d; ++k)
    edges[static_cast<int>(RelationId::LL)].emplace_back(find("D", k),
                                                         find("D", k + 1));
  for (int k = 0; k + 1 < n_a; ++k)
    edges[static_cast<int>(RelationId::HH)].emplace_back(find("A", k),
                                                         find("A", k + 1));
  const int co = std::min(n_d, n_a);
  for (int k = 0; k < co; ++k) {
    edges[static_cast<int>(RelationId::LH)].emplace_back(find("D", k),
                                                         find("A", k));
    edges[static_cast<int>(RelationId::HL)].emplace_back(find("A", k),
                                                         find("D", k));
  }
  return HeteroTemporalGraph::from_parts(ordered.nodes(), std::move(edges));
}

// ---- degree statistics --------------------------------------------------------

// Per relation, per node: in-degree + 1. The +1 keeps the GCN normalization
// 1/(sqrt(d_i) sqrt(d_j)) finite for isolated nodes.
struct DegreeTable {
  std::array<std::vector<double>, 4> dhat;

  double at(RelationId r, int node) const {
    return dhat[static_cast<int>(r)][node];
  }
};

inline DegreeTable degree_table(const HeteroTemporalGraph& g) {
  DegreeTable t;
  for (RelationId r : kAllRelations) {
    std::vector<double>& d = t.dhat[static_cast<int>(r)];
    d.assign(g.n_nodes(), 1.0);
    for (auto [i, j] : g.edges(r)) d[j] += 1.0;
  }
  return t;
}

}  // namespace htgnn::graph
