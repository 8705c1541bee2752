#pragma once

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnav/nav_graph.hpp"
#include "bnav/world_gen.hpp"

namespace fx {

inline bnav::NodeId node(const std::string& tag) { return bnav::parse_node_id(tag); }

/// Graph from "FROM behavior TO" lines (behavior may be an alias). Extra
/// isolated nodes can be listed separately.
inline bnav::BehavioralGraph graph(const std::vector<std::string>& edges, const std::vector<std::string>& extra = {},
                                   const std::string& id = "g") {
  std::set<bnav::NodeId> nodes;
  std::vector<bnav::Triplet> ts;
  for (const auto& e : edges) {
    std::istringstream in(e);
    std::string a, b, c;
    in >> a >> b >> c;
    bnav::Triplet t;
    t.from = node(a);
    t.behavior = *bnav::parse_behavior(b);
    t.to = node(c);
    std::string lm;
    while (in >> lm) t.attrs.push_back(*bnav::parse_landmark(lm));
    nodes.insert(t.from);
    nodes.insert(t.to);
    ts.push_back(t);
  }
  for (const auto& x : extra) nodes.insert(node(x));
  return bnav::BehavioralGraph(id, {nodes.begin(), nodes.end()}, ts);
}

/// Small dataset used by several suites.
inline bnav::DatasetSpec small_spec(std::uint64_t seed, int graphs = 2, int routes = 10) {
  bnav::DatasetSpec s;
  s.seed = seed;
  s.n_train_graphs = graphs;
  s.n_new_graphs = 1;
  s.train_routes_per_graph = routes;
  s.test_repeated_routes_per_graph = 2;
  s.test_new_routes_per_graph = 2;
  s.max_rooms = 8;
  return s;
}

}  // namespace fx
