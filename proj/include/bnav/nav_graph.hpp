#pragma once

// Behavioral navigation graph: typed locations connected by directed behavior
// edges. The graph is the knowledge base the translator reads and the
// environment every plan is executed against.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "bnav/errors.hpp"

namespace bnav {

enum class LocationType : std::uint8_t { room, lab, office, kitchen, hall, corridor, bathroom };

inline constexpr std::size_t kNumLocationTypes = 7;
inline constexpr std::array<LocationType, kNumLocationTypes> kLocationTypes = {
    LocationType::room,     LocationType::lab,      LocationType::office, LocationType::kitchen,
    LocationType::hall,     LocationType::corridor, LocationType::bathroom};

std::string_view location_name(LocationType type);
char location_prefix(LocationType type);
std::optional<LocationType> parse_location_type(std::string_view name);

/// Whether people refer to this kind of place by a unique name ("room 3").
/// Kitchens and bathrooms are anonymous in instructions.
bool has_public_name(LocationType type);

/// A location tag such as "R-1" or "C-0".
struct NodeId {
  LocationType type = LocationType::room;
  int index = 0;

  bool operator==(const NodeId&) const = default;
  /// Canonical order: lexicographic on the rendered tag.
  std::strong_ordering operator<=>(const NodeId& other) const;
};

std::string to_string(NodeId node);
/// Parses "R-1" style tags. Throws ParseError.
NodeId parse_node_id(std::string_view tag);

/// Decoder alphabet. Enumerators are in lexicographic order of their codes so
/// enum order doubles as the canonical tie-break order; `stop` is last.
enum class Behavior : std::uint8_t {
  cf,
  ch_left,
  ch_right,
  io_left,
  io_right,
  lt,
  oio,
  oo_left,
  oo_right,
  rt,
  sp,
  stop,
};

inline constexpr std::size_t kNumBehaviors = 11;
inline constexpr std::size_t kNumSymbols = 12;

inline constexpr std::size_t symbol_index(Behavior b) { return static_cast<std::size_t>(b); }
inline constexpr Behavior behavior_at(std::size_t i) { return static_cast<Behavior>(i); }

std::string_view to_string(Behavior b);
/// Accepts canonical codes ("oo-right") and the short aliases ("oor", "iol",
/// "right-io", ...). Rejects "stop" unless allow_stop.
std::optional<Behavior> parse_behavior(std::string_view code, bool allow_stop = false);

enum class Landmark : std::uint8_t {
  painting,
  bookshelf,
  table,
  chair,
  sofa,
  plant,
  vase,
  lamp,
  whiteboard,
  window,
  trash_can,
  water_fountain,
  fire_extinguisher,
  clock,
  poster,
  cabinet,
  printer,
  couch,
  mirror,
  rug,
};

inline constexpr std::size_t kNumLandmarks = 20;

std::string_view to_string(Landmark l);
std::optional<Landmark> parse_landmark(std::string_view name);

struct Triplet {
  NodeId from;
  Behavior behavior = Behavior::cf;
  std::vector<Landmark> attrs;
  NodeId to;

  bool operator==(const Triplet&) const = default;
};

/// "R-1 oo-right [vase] C-1"
std::string to_string(const Triplet& t);

struct NavPlan {
  NodeId start;
  std::vector<Behavior> behaviors;

  bool operator==(const NavPlan&) const = default;
};

std::string format_behaviors(std::span<const Behavior> behaviors);
/// Space-separated behavior codes; aliases are normalized. Throws ParseError
/// naming the offending token.
std::vector<Behavior> parse_behaviors(std::string_view text);

/// Immutable graph with deterministic (node, behavior) transitions.
class BehavioralGraph {
 public:
  /// Validates and canonically sorts its input. Throws GraphError on a
  /// dangling endpoint, a self loop, a stop edge, or a duplicate
  /// (from, behavior) pair.
  BehavioralGraph(std::string id, std::vector<NodeId> nodes, std::vector<Triplet> triplets);

  const std::string& id() const { return id_; }
  std::span<const NodeId> nodes() const { return nodes_; }
  std::span<const Triplet> triplets() const { return triplets_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return triplets_.size(); }

  bool contains(NodeId node) const { return node_index(node).has_value(); }
  std::optional<std::size_t> node_index(NodeId node) const;
  /// Dense index; throws UnknownNode.
  std::size_t require_index(NodeId node) const;

  /// Triplet leaving `node` with behavior `b`, or nullptr.
  const Triplet* find_edge(NodeId node, Behavior b) const;
  /// Target node index for (node index, behavior), or -1.
  int next_index(std::size_t node, Behavior b) const { return next_[node][symbol_index(b)]; }
  std::optional<std::size_t> triplet_index(const Triplet& t) const;

  bool weakly_connected() const;
  bool strongly_connected() const;
  /// Longest finite directed shortest-path distance (in behaviors).
  int diameter() const { return diameter_; }

 private:
  std::string id_;
  std::vector<NodeId> nodes_;
  std::vector<Triplet> triplets_;
  std::vector<std::array<int, kNumBehaviors>> next_;
  std::vector<std::array<int, kNumBehaviors>> edge_of_;
  int diameter_ = 0;
};

/// Directed BFS distances from `source` (dense indices, -1 = unreachable).
std::vector<int> bfs_distances(const BehavioralGraph& g, std::size_t source);

NodeId transition(const BehavioralGraph& g, NodeId node, Behavior b);

/// Node sequence [start, n_1, ..., n_T]. Throws InvalidPlan.
std::vector<NodeId> execute_plan(const BehavioralGraph& g, const NavPlan& plan);

/// Additive decoder mask: 0 for executable behaviors and stop, kMaskSentinel
/// elsewhere.
using MaskVector = Eigen::Matrix<double, static_cast<int>(kNumSymbols), 1>;
inline constexpr double kMaskSentinel = -1e9;

MaskVector mask(const BehavioralGraph& g, NodeId node);
MaskVector mask_at(const BehavioralGraph& g, std::size_t node_index);

/// Width of the behavior-and-attribute segment: behavior one-hot plus
/// landmark multi-hot.
inline constexpr std::size_t kEdgeFeatureWidth = kNumBehaviors + kNumLandmarks;

/// [one-hot(from) over N | behavior one-hot, landmark multi-hot | one-hot(to) over N]
Eigen::VectorXd encode_triplet(const BehavioralGraph& g, const Triplet& t);

/// Graph-independent node slot: each location type owns a fixed block of
/// slots, so "R-3" lands in the same slot in every graph.
std::size_t node_slot(NodeId node);
std::size_t node_slot_capacity();

/// Active coordinates of the fixed-width triplet encoding
/// [slot(from) | behavior, landmarks | slot(to)] of width
/// 2 * node_slot_capacity() + kEdgeFeatureWidth.
std::vector<std::size_t> triplet_feature_indices(const Triplet& t);
std::size_t triplet_feature_width();

/// Triplets sorted by BFS distance of their from-node from start; ties keep the
/// canonical order. Triplets unreachable from start come last.
std::vector<Triplet> order_triplets(const BehavioralGraph& g, NodeId start);

/// Minimum-length plan; neighbours are expanded in behavior order. Throws
/// Unreachable.
NavPlan shortest_path(const BehavioralGraph& g, NodeId start, NodeId goal);

struct Repaired {
  NavPlan plan;
  int edits = 0;
};

struct Unrepairable {
  NavPlan original;
};

using RepairOutcome = std::variant<Repaired, Unrepairable>;

/// Depth-first substitution search for a valid same-length plan within
/// max_edits changes. Edit budgets are tried in increasing order, so the
/// result uses the fewest substitutions; within a budget positions go left to
/// right and replacements in behavior order.
RepairOutcome dfs_repair(const BehavioralGraph& g, NodeId start, std::span<const Behavior> seq,
                         int max_edits = 3);

bool is_valid_plan(const BehavioralGraph& g, const NavPlan& plan);

/// Line-oriented text format (see README). Canonically sorted on write.
void write_graph(std::ostream& out, const BehavioralGraph& g);
BehavioralGraph read_graph(std::istream& in);
void write_graph_file(const std::string& path, const BehavioralGraph& g);
BehavioralGraph read_graph_file(const std::string& path);

class InvalidPlan : public Error {
 public:
  InvalidPlan(std::size_t step, std::vector<NodeId> prefix);
  /// 1-based index of the failing behavior.
  std::size_t step() const noexcept { return step_; }
  const std::vector<NodeId>& prefix() const noexcept { return prefix_; }

 private:
  std::size_t step_;
  std::vector<NodeId> prefix_;
};

}  // namespace bnav
