#include "bnav/nav_graph.hpp"

#include <algorithm>
#include <limits>
#include <charconv>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace bnav {

namespace {

constexpr std::array<std::string_view, kNumLocationTypes> kLocationNames = {
    "room", "lab", "office", "kitchen", "hall", "corridor", "bathroom"};
constexpr std::array<char, kNumLocationTypes> kLocationPrefixes = {'R', 'L', 'O', 'K', 'H', 'C',
                                                                   'B'};
// Slot block per location type, indexed like LocationType.
constexpr std::array<std::size_t, kNumLocationTypes> kSlotCapacity = {96, 32, 32, 16, 8, 256, 16};

constexpr std::array<std::string_view, kNumSymbols> kBehaviorCodes = {
    "cf",  "ch-left", "ch-right", "io-left",  "io-right", "lt",
    "oio", "oo-left", "oo-right", "rt",       "sp",       "stop"};

constexpr std::array<std::string_view, kNumLandmarks> kLandmarkNames = {
    "painting", "bookshelf", "table",          "chair",
    "sofa",     "plant",     "vase",           "lamp",
    "whiteboard", "window",  "trash-can",      "water-fountain",
    "fire-extinguisher", "clock", "poster",    "cabinet",
    "printer",  "couch",     "mirror",         "rug"};

std::size_t type_index(LocationType t) { return static_cast<std::size_t>(t); }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::string_view location_name(LocationType type) { return kLocationNames[type_index(type)]; }

char location_prefix(LocationType type) { return kLocationPrefixes[type_index(type)]; }

std::optional<LocationType> parse_location_type(std::string_view name) {
  for (std::size_t i = 0; i < kNumLocationTypes; ++i)
    if (kLocationNames[i] == name) return kLocationTypes[i];
  return std::nullopt;
}

bool has_public_name(LocationType type) {
  return type != LocationType::kitchen && type != LocationType::bathroom;
}

std::strong_ordering NodeId::operator<=>(const NodeId& other) const {
  if (auto c = location_prefix(type) <=> location_prefix(other.type); c != 0) return c;
  // Index digits compare as text ("C-10" < "C-2").
  char a[16], b[16];
  auto ea = std::to_chars(a, a + sizeof a, index).ptr;
  auto eb = std::to_chars(b, b + sizeof b, other.index).ptr;
  std::string_view sa(a, static_cast<std::size_t>(ea - a));
  std::string_view sb(b, static_cast<std::size_t>(eb - b));
  return sa.compare(sb) <=> 0;
}

std::string to_string(NodeId node) {
  return std::string(1, location_prefix(node.type)) + "-" + std::to_string(node.index);
}

NodeId parse_node_id(std::string_view tag) {
  if (tag.size() < 3 || tag[1] != '-') throw ParseError("malformed node tag '" + std::string(tag) + "'");
  const auto it = std::find(kLocationPrefixes.begin(), kLocationPrefixes.end(), tag[0]);
  if (it == kLocationPrefixes.end())
    throw ParseError("unknown location prefix in node tag '" + std::string(tag) + "'");
  int index = 0;
  const auto digits = tag.substr(2);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || index < 0 ||
      (digits.size() > 1 && digits[0] == '0'))
    throw ParseError("bad node index in tag '" + std::string(tag) + "'");
  return NodeId{kLocationTypes[static_cast<std::size_t>(it - kLocationPrefixes.begin())], index};
}

std::string_view to_string(Behavior b) { return kBehaviorCodes[symbol_index(b)]; }

std::optional<Behavior> parse_behavior(std::string_view code, bool allow_stop) {
  for (std::size_t i = 0; i < kNumSymbols; ++i) {
    if (kBehaviorCodes[i] == code) {
      if (behavior_at(i) == Behavior::stop && !allow_stop) return std::nullopt;
      return behavior_at(i);
    }
  }
  static const std::map<std::string_view, Behavior> aliases = {
      {"ool", Behavior::oo_left},      {"oor", Behavior::oo_right},
      {"left-oo", Behavior::oo_left},  {"right-oo", Behavior::oo_right},
      {"iol", Behavior::io_left},      {"ior", Behavior::io_right},
      {"left-io", Behavior::io_left},  {"right-io", Behavior::io_right},
      {"chl", Behavior::ch_left},      {"chr", Behavior::ch_right},
      {"left-ch", Behavior::ch_left},  {"right-ch", Behavior::ch_right},
  };
  if (auto it = aliases.find(code); it != aliases.end()) return it->second;
  return std::nullopt;
}

std::string_view to_string(Landmark l) { return kLandmarkNames[static_cast<std::size_t>(l)]; }

std::optional<Landmark> parse_landmark(std::string_view name) {
  for (std::size_t i = 0; i < kNumLandmarks; ++i)
    if (kLandmarkNames[i] == name) return static_cast<Landmark>(i);
  return std::nullopt;
}

std::string to_string(const Triplet& t) {
  std::string s = to_string(t.from);
  s += ' ';
  s += to_string(t.behavior);
  s += " [";
  for (std::size_t i = 0; i < t.attrs.size(); ++i) {
    if (i) s += ',';
    s += to_string(t.attrs[i]);
  }
  s += "] ";
  s += to_string(t.to);
  return s;
}

std::string format_behaviors(std::span<const Behavior> behaviors) {
  std::string s;
  for (std::size_t i = 0; i < behaviors.size(); ++i) {
    if (i) s += ' ';
    s += to_string(behaviors[i]);
  }
  return s;
}

std::vector<Behavior> parse_behaviors(std::string_view text) {
  std::vector<Behavior> out;
  for (auto tok : split_ws(text)) {
    auto b = parse_behavior(tok);
    if (!b) throw ParseError("unknown behavior token '" + std::string(tok) + "'");
    out.push_back(*b);
  }
  return out;
}

InvalidPlan::InvalidPlan(std::size_t step, std::vector<NodeId> prefix)
    : Error("plan fails at step " + std::to_string(step)), step_(step), prefix_(std::move(prefix)) {}

// ---------------------------------------------------------------------------

BehavioralGraph::BehavioralGraph(std::string id, std::vector<NodeId> nodes,
                                 std::vector<Triplet> triplets)
    : id_(std::move(id)), nodes_(std::move(nodes)), triplets_(std::move(triplets)) {
  std::sort(nodes_.begin(), nodes_.end());
  if (std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end())
    throw GraphError("graph " + id_ + ": duplicate node");

  std::vector<std::pair<std::string, Triplet>> keyed;
  keyed.reserve(triplets_.size());
  for (auto& t : triplets_) keyed.emplace_back(to_string(t), std::move(t));
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  triplets_.clear();
  for (auto& [key, t] : keyed) triplets_.push_back(std::move(t));

  std::array<int, kNumBehaviors> none;
  none.fill(-1);
  next_.assign(nodes_.size(), none);
  edge_of_.assign(nodes_.size(), none);
  for (std::size_t e = 0; e < triplets_.size(); ++e) {
    const Triplet& t = triplets_[e];
    if (t.behavior == Behavior::stop) throw GraphError("graph " + id_ + ": stop cannot label an edge");
    if (t.from == t.to) throw GraphError("graph " + id_ + ": self loop at " + to_string(t.from));
    auto fi = node_index(t.from);
    auto ti = node_index(t.to);
    if (!fi || !ti) throw GraphError("graph " + id_ + ": edge endpoint not a node: " + to_string(t));
    auto& slot = next_[*fi][symbol_index(t.behavior)];
    if (slot != -1)
      throw GraphError("graph " + id_ + ": duplicate (from, behavior) pair " + to_string(t.from) +
                       " " + std::string(to_string(t.behavior)));
    slot = static_cast<int>(*ti);
    edge_of_[*fi][symbol_index(t.behavior)] = static_cast<int>(e);
  }

  for (std::size_t s = 0; s < nodes_.size(); ++s)
    for (int d : bfs_distances(*this, s)) diameter_ = std::max(diameter_, d);
}

std::optional<std::size_t> BehavioralGraph::node_index(NodeId node) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end() || *it != node) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

std::size_t BehavioralGraph::require_index(NodeId node) const {
  auto i = node_index(node);
  if (!i) throw UnknownNode("unknown node " + to_string(node) + " in graph " + id_);
  return *i;
}

const Triplet* BehavioralGraph::find_edge(NodeId node, Behavior b) const {
  if (b == Behavior::stop) return nullptr;
  auto i = node_index(node);
  if (!i) return nullptr;
  int e = edge_of_[*i][symbol_index(b)];
  return e < 0 ? nullptr : &triplets_[static_cast<std::size_t>(e)];
}

std::optional<std::size_t> BehavioralGraph::triplet_index(const Triplet& t) const {
  const Triplet* found = find_edge(t.from, t.behavior);
  if (!found || *found != t) return std::nullopt;
  return static_cast<std::size_t>(found - triplets_.data());
}

bool BehavioralGraph::weakly_connected() const {
  if (nodes_.empty()) return true;
  std::vector<std::vector<std::size_t>> adj(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n)
    for (int m : next_[n])
      if (m >= 0) {
        adj[n].push_back(static_cast<std::size_t>(m));
        adj[static_cast<std::size_t>(m)].push_back(n);
      }
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<std::size_t> stack = {0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (auto m : adj[n])
      if (!seen[m]) {
        seen[m] = 1;
        ++count;
        stack.push_back(m);
      }
  }
  return count == nodes_.size();
}

bool BehavioralGraph::strongly_connected() const {
  for (std::size_t s = 0; s < nodes_.size(); ++s) {
    auto d = bfs_distances(*this, s);
    if (std::find(d.begin(), d.end(), -1) != d.end()) return false;
  }
  return true;
}

std::vector<int> bfs_distances(const BehavioralGraph& g, std::size_t source) {
  std::vector<int> dist(g.node_count(), -1);
  std::deque<std::size_t> queue = {source};
  dist[source] = 0;
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    for (std::size_t b = 0; b < kNumBehaviors; ++b) {
      int m = g.next_index(n, behavior_at(b));
      if (m >= 0 && dist[static_cast<std::size_t>(m)] < 0) {
        dist[static_cast<std::size_t>(m)] = dist[n] + 1;
        queue.push_back(static_cast<std::size_t>(m));
      }
    }
  }
  return dist;
}

NodeId transition(const BehavioralGraph& g, NodeId node, Behavior b) {
  const auto i = g.require_index(node);
  if (b == Behavior::stop) throw NoSuchEdge("stop is not an executable behavior");
  int m = g.next_index(i, b);
  if (m < 0)
    throw NoSuchEdge("no edge " + to_string(node) + " " + std::string(to_string(b)) + " in graph " +
                     g.id());
  return g.nodes()[static_cast<std::size_t>(m)];
}

std::vector<NodeId> execute_plan(const BehavioralGraph& g, const NavPlan& plan) {
  std::size_t at = g.require_index(plan.start);
  std::vector<NodeId> visited = {plan.start};
  for (std::size_t t = 0; t < plan.behaviors.size(); ++t) {
    const Behavior b = plan.behaviors[t];
    int m = b == Behavior::stop ? -1 : g.next_index(at, b);
    if (m < 0) throw InvalidPlan(t + 1, visited);
    at = static_cast<std::size_t>(m);
    visited.push_back(g.nodes()[at]);
  }
  return visited;
}

bool is_valid_plan(const BehavioralGraph& g, const NavPlan& plan) {
  auto at = g.node_index(plan.start);
  if (!at) return false;
  std::size_t n = *at;
  for (Behavior b : plan.behaviors) {
    int m = b == Behavior::stop ? -1 : g.next_index(n, b);
    if (m < 0) return false;
    n = static_cast<std::size_t>(m);
  }
  return true;
}

MaskVector mask_at(const BehavioralGraph& g, std::size_t node_index) {
  MaskVector m = MaskVector::Constant(kMaskSentinel);
  for (std::size_t b = 0; b < kNumBehaviors; ++b)
    if (g.next_index(node_index, behavior_at(b)) >= 0) m[static_cast<Eigen::Index>(b)] = 0.0;
  m[static_cast<Eigen::Index>(symbol_index(Behavior::stop))] = 0.0;
  return m;
}

MaskVector mask(const BehavioralGraph& g, NodeId node) { return mask_at(g, g.require_index(node)); }

Eigen::VectorXd encode_triplet(const BehavioralGraph& g, const Triplet& t) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * n + static_cast<Eigen::Index>(kEdgeFeatureWidth));
  v[static_cast<Eigen::Index>(g.require_index(t.from))] = 1.0;
  v[n + static_cast<Eigen::Index>(symbol_index(t.behavior))] = 1.0;
  for (Landmark l : t.attrs)
    v[n + static_cast<Eigen::Index>(kNumBehaviors + static_cast<std::size_t>(l))] = 1.0;
  v[n + static_cast<Eigen::Index>(kEdgeFeatureWidth) + static_cast<Eigen::Index>(g.require_index(t.to))] = 1.0;
  return v;
}

std::size_t node_slot_capacity() {
  std::size_t total = 0;
  for (auto c : kSlotCapacity) total += c;
  return total;
}

std::size_t node_slot(NodeId node) {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < type_index(node.type); ++i) offset += kSlotCapacity[i];
  const auto cap = kSlotCapacity[type_index(node.type)];
  if (node.index < 0 || static_cast<std::size_t>(node.index) >= cap)
    throw ValidationError("node " + to_string(node) + " exceeds slot capacity " + std::to_string(cap));
  return offset + static_cast<std::size_t>(node.index);
}

std::size_t triplet_feature_width() { return 2 * node_slot_capacity() + kEdgeFeatureWidth; }

std::vector<std::size_t> triplet_feature_indices(const Triplet& t) {
  const std::size_t n = node_slot_capacity();
  std::vector<std::size_t> idx;
  idx.reserve(3 + t.attrs.size());
  idx.push_back(node_slot(t.from));
  idx.push_back(n + symbol_index(t.behavior));
  for (Landmark l : t.attrs) idx.push_back(n + kNumBehaviors + static_cast<std::size_t>(l));
  idx.push_back(n + kEdgeFeatureWidth + node_slot(t.to));
  return idx;
}

std::vector<Triplet> order_triplets(const BehavioralGraph& g, NodeId start) {
  const auto dist = bfs_distances(g, g.require_index(start));
  std::vector<Triplet> out(g.triplets().begin(), g.triplets().end());
  auto key = [&](const Triplet& t) {
    int d = dist[*g.node_index(t.from)];
    return d < 0 ? std::numeric_limits<int>::max() : d;
  };
  std::stable_sort(out.begin(), out.end(),
                   [&](const Triplet& a, const Triplet& b) { return key(a) < key(b); });
  return out;
}

NavPlan shortest_path(const BehavioralGraph& g, NodeId start, NodeId goal) {
  const auto s = g.require_index(start);
  const auto target = g.require_index(goal);
  std::vector<int> parent(g.node_count(), -1);
  std::vector<Behavior> via(g.node_count(), Behavior::stop);
  std::vector<char> seen(g.node_count(), 0);
  std::deque<std::size_t> queue = {s};
  seen[s] = 1;
  while (!queue.empty() && !seen[target]) {
    auto n = queue.front();
    queue.pop_front();
    for (std::size_t b = 0; b < kNumBehaviors; ++b) {
      int m = g.next_index(n, behavior_at(b));
      if (m < 0 || seen[static_cast<std::size_t>(m)]) continue;
      seen[static_cast<std::size_t>(m)] = 1;
      parent[static_cast<std::size_t>(m)] = static_cast<int>(n);
      via[static_cast<std::size_t>(m)] = behavior_at(b);
      queue.push_back(static_cast<std::size_t>(m));
    }
  }
  if (!seen[target])
    throw Unreachable(to_string(goal) + " is unreachable from " + to_string(start) + " in graph " +
                      g.id());
  NavPlan plan{start, {}};
  for (std::size_t n = target; n != s; n = static_cast<std::size_t>(parent[n]))
    plan.behaviors.push_back(via[n]);
  std::reverse(plan.behaviors.begin(), plan.behaviors.end());
  return plan;
}

RepairOutcome dfs_repair(const BehavioralGraph& g, NodeId start, std::span<const Behavior> seq,
                         int max_edits) {
  NavPlan original{start, {seq.begin(), seq.end()}};
  auto s = g.node_index(start);
  if (!s) return Unrepairable{original};

  std::vector<Behavior> work(seq.begin(), seq.end());
  std::function<bool(std::size_t, std::size_t, int)> search = [&](std::size_t pos, std::size_t node,
                                                                 int budget) -> bool {
    if (pos == work.size()) return true;
    const Behavior keep = seq[pos];
    if (keep != Behavior::stop) {
      int m = g.next_index(node, keep);
      if (m >= 0) {
        work[pos] = keep;
        if (search(pos + 1, static_cast<std::size_t>(m), budget)) return true;
      }
    }
    if (budget == 0) return false;
    for (std::size_t b = 0; b < kNumBehaviors; ++b) {
      const Behavior alt = behavior_at(b);
      if (alt == keep) continue;
      int m = g.next_index(node, alt);
      if (m < 0) continue;
      work[pos] = alt;
      if (search(pos + 1, static_cast<std::size_t>(m), budget - 1)) return true;
    }
    work[pos] = keep;
    return false;
  };

  for (int budget = 0; budget <= max_edits; ++budget) {
    if (search(0, *s, budget)) {
      int edits = 0;
      for (std::size_t i = 0; i < work.size(); ++i) edits += work[i] != seq[i];
      return Repaired{NavPlan{start, work}, edits};
    }
  }
  return Unrepairable{original};
}

// ---------------------------------------------------------------------------

void write_graph(std::ostream& out, const BehavioralGraph& g) {
  out << "graph " << g.id() << " nodes=" << g.node_count() << '\n';
  for (NodeId n : g.nodes()) out << "node " << to_string(n) << ':' << location_name(n.type) << '\n';
  for (const Triplet& t : g.triplets()) out << "edge " << to_string(t) << '\n';
}

BehavioralGraph read_graph(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::string id;
  std::size_t declared = 0;
  bool have_header = false;
  std::vector<NodeId> nodes;
  std::vector<Triplet> triplets;
  std::map<std::pair<std::string, Behavior>, std::size_t> seen_pairs;

  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0].starts_with('#')) continue;
    if (toks[0] == "graph") {
      if (have_header) throw ParseError(lineno, "second graph header");
      if (toks.size() != 3 || !toks[2].starts_with("nodes="))
        throw ParseError(lineno, "expected 'graph <id> nodes=<N>'");
      id = std::string(toks[1]);
      auto num = toks[2].substr(6);
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), declared);
      if (ec != std::errc{} || p != num.data() + num.size())
        throw ParseError(lineno, "bad node count '" + std::string(num) + "'");
      have_header = true;
      continue;
    }
    if (!have_header) throw ParseError(lineno, "missing graph header");
    try {
      if (toks[0] == "node") {
        if (toks.size() != 2) throw ParseError("expected 'node <tag>:<type>'");
        auto colon = toks[1].find(':');
        if (colon == std::string_view::npos) throw ParseError("expected 'node <tag>:<type>'");
        NodeId n = parse_node_id(toks[1].substr(0, colon));
        auto type = parse_location_type(toks[1].substr(colon + 1));
        if (!type) throw ParseError("unknown location type '" + std::string(toks[1].substr(colon + 1)) + "'");
        if (*type != n.type) throw ParseError("tag " + to_string(n) + " does not match type " + std::string(location_name(*type)));
        nodes.push_back(n);
      } else if (toks[0] == "edge") {
        if (toks.size() != 5) throw ParseError("expected 'edge <from> <behavior> [<attrs>] <to>'");
        Triplet t;
        t.from = parse_node_id(toks[1]);
        auto b = parse_behavior(toks[2]);
        if (!b) throw ParseError("unknown behavior token '" + std::string(toks[2]) + "'");
        t.behavior = *b;
        auto attrs = toks[3];
        if (attrs.size() < 2 || attrs.front() != '[' || attrs.back() != ']')
          throw ParseError("malformed attribute list '" + std::string(attrs) + "'");
        attrs = attrs.substr(1, attrs.size() - 2);
        while (!attrs.empty()) {
          auto comma = attrs.find(',');
          auto name = attrs.substr(0, comma);
          auto l = parse_landmark(name);
          if (!l) throw ParseError("unknown landmark '" + std::string(name) + "'");
          t.attrs.push_back(*l);
          attrs = comma == std::string_view::npos ? std::string_view{} : attrs.substr(comma + 1);
        }
        t.to = parse_node_id(toks[4]);
        auto key = std::make_pair(to_string(t.from), t.behavior);
        if (seen_pairs.count(key))
          throw ParseError("duplicate (from, behavior) pair; first seen on line " +
                           std::to_string(seen_pairs[key]));
        seen_pairs[key] = lineno;
        triplets.push_back(std::move(t));
      } else {
        throw ParseError("unknown record '" + std::string(toks[0]) + "'");
      }
    } catch (const ParseError& e) {
      if (e.line() != 0) throw;
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(lineno, "missing graph header");
  if (nodes.size() != declared)
    throw ParseError(lineno, "header declares " + std::to_string(declared) + " nodes, found " +
                                 std::to_string(nodes.size()));
  try {
    return BehavioralGraph(std::move(id), std::move(nodes), std::move(triplets));
  } catch (const GraphError& e) {
    throw ParseError(lineno, e.what());
  }
}

void write_graph_file(const std::string& path, const BehavioralGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_graph(out, g);
  if (!out) throw IoError("write failed: " + path);
}

BehavioralGraph read_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_graph(in);
}

}  // namespace bnav
