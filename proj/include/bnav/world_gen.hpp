#pragma once

// Synthetic indoor environments, templated instructions and dataset splits.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnav/nav_graph.hpp"
#include "bnav/rng.hpp"

namespace bnav {

struct WorldSpec {
  std::uint64_t seed = 1;
  int num_rooms = 10;       ///< rooms proper, in [6, 65]; offices, labs etc. come on top
  int num_corridors = 2;    ///< main corridor plus branches attached at T-junctions
  int num_halls = 1;        ///< 0..2, placed at the ends of the main corridor
  double landmark_density = 0.3;
};

void validate(const WorldSpec& spec);

/// Corridor-backbone layout. Corridor positions are directional nodes, places
/// hang off corridor segments. The result is strongly connected. Throws
/// SpecInfeasible when the layout cannot be built after bounded retries.
BehavioralGraph generate_world(const WorldSpec& spec, std::string id = "world");

/// Surface templates used by synthesize_instruction. Slots: {from} and {to}
/// name the places at either end of an edge, {lm} a landmark.
struct PhraseBank {
  std::array<std::vector<std::string>, kNumBehaviors> behavior;
  std::vector<std::string> named_entry;  ///< io-left/io-right by destination name only, no side
  std::vector<std::string> merged_run;   ///< one clause covering several cf/sp edges
  std::vector<std::string> passing;      ///< landmark along a corridor edge
  std::vector<std::string> beside;       ///< landmark at an entered place
  std::vector<std::string> joiners;      ///< between clauses of one sentence
  std::string reorder_marker;            ///< "<B> after you <A>" keeps A before B
  std::vector<std::string> closings;
};

const PhraseBank& phrase_bank();

/// Deterministic per (plan, style_seed). Clause order follows plan order
/// except for "<B> after you <A>" pairs. A merged cf/sp run is only emitted
/// where it ends at the first node from which the next behavior is
/// executable, or at the end of the corridor when it closes the plan.
std::string synthesize_instruction(const BehavioralGraph& g, const NavPlan& plan,
                                   std::uint64_t style_seed);

struct Sample {
  std::string graph_id;
  std::string instruction;
  NavPlan gold_plan;  ///< gold_plan.start is the robot's start node

  bool operator==(const Sample&) const = default;
};

using GraphPtr = std::shared_ptr<const BehavioralGraph>;

struct DatasetSplit {
  std::string name;  ///< training, test-repeated or test-new
  std::vector<Sample> samples;
  std::vector<GraphPtr> graphs;

  /// Throws MissingGraph.
  const BehavioralGraph& graph(std::string_view id) const;
  bool operator==(const DatasetSplit& other) const;
};

struct DatasetSpec {
  int n_train_graphs = 20;
  int n_new_graphs = 5;
  int train_routes_per_graph = 25;
  int test_repeated_routes_per_graph = 5;
  int test_new_routes_per_graph = 20;
  double double_fraction = 0.0;
  double suboptimal_fraction = 0.05;
  int min_rooms = 6;
  int max_rooms = 16;
  int min_plan_length = 2;
  int max_plan_length = 14;
  std::uint64_t seed = 1;
};

void validate(const DatasetSpec& spec);

struct Dataset {
  DatasetSplit training;
  DatasetSplit test_repeated;
  DatasetSplit test_new;
};

Dataset build_dataset(const DatasetSpec& spec);

/// Convenience form using one route count for every split.
Dataset build_dataset(int n_train_graphs, int n_new_graphs, int routes_per_graph,
                      double double_fraction, std::uint64_t seed);

/// Shortest path plus a detour through one extra corridor node; nullopt when
/// no such detour fits within max_length.
std::optional<NavPlan> detour_route(const BehavioralGraph& g, NodeId start, NodeId goal,
                                    int max_length, Rng& rng);

using GraphRegistry = std::map<std::string, GraphPtr, std::less<>>;

/// `graph=<id> start=<tag> plan=<b1 b2 ...> text="<instruction>"` per line.
void write_samples(const std::vector<Sample>& samples, const std::string& path);
/// Throws ParseError (with line number) and MissingGraph.
std::vector<Sample> read_samples(const std::string& path, const GraphRegistry& graphs);

/// Writes graphs/<id>.graph, one samples file per split and manifest.txt.
void write_dataset(const std::string& dir, const Dataset& data);
/// Reads a manifest written by write_dataset; splits are keyed by name.
std::map<std::string, DatasetSplit> read_dataset(const std::string& manifest_path);

}  // namespace bnav
