#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "bnav/nav_graph.hpp"
#include "bnav/text.hpp"
#include "bnav/world_gen.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bnav;
using fx::node;
namespace fs = std::filesystem;

namespace {

std::string tmpdir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bnav_wg_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

using RouteKey = std::tuple<std::string, std::string, std::string>;
RouteKey key(const Sample& s) {
  return {s.graph_id, to_string(s.gold_plan.start), format_behaviors(s.gold_plan.behaviors)};
}

const Dataset& default_data() {
  static const Dataset d = [] {
    DatasetSpec s;
    s.seed = 3;
    return build_dataset(s);
  }();
  return d;
}

}  // namespace

TEST_CASE("generate_world is deterministic") {
  WorldSpec s;
  s.seed = 42;
  auto a = generate_world(s);
  auto b = generate_world(s);
  CHECK(std::ranges::equal(a.nodes(), b.nodes()));
  CHECK(std::ranges::equal(a.triplets(), b.triplets()));
  s.seed = 43;
  auto c = generate_world(s);
  CHECK_FALSE(std::ranges::equal(a.triplets(), c.triplets()));
}

TEST_CASE("room count is exact") {
  for (int rooms : {6, 9, 20, 65}) {
    WorldSpec s;
    s.seed = 7;
    s.num_rooms = rooms;
    auto g = generate_world(s);
    int n = 0;
    for (NodeId x : g.nodes()) n += x.type == LocationType::room;
    CHECK(n == rooms);
  }
  WorldSpec bad;
  bad.num_rooms = 5;
  CHECK_THROWS_AS(generate_world(bad), ValidationError);
  bad.num_rooms = 66;
  CHECK_THROWS_AS(generate_world(bad), ValidationError);
}

TEST_CASE("generated worlds are connected") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    WorldSpec s;
    s.seed = seed;
    s.num_rooms = 6 + static_cast<int>(seed % 30);
    auto g = generate_world(s);
    CHECK(oracle::weakly_connected(g));
    // Every node reaches every other node along directed edges.
    auto d = oracle::bfs(g, g.nodes()[0]);
    CHECK(d.size() == g.node_count());
  }
}

TEST_CASE("single exit-and-turn-right instruction") {
  auto g = fx::graph({"R-1 oo-right C-1", "C-1 cf C-2"});
  NavPlan p{node("R-1"), {Behavior::oo_right}};
  for (std::uint64_t style = 0; style < 20; ++style) {
    const std::string text = synthesize_instruction(g, p, style);
    const bool mentions = text.find("turn right") != std::string::npos || text.find("make a right") != std::string::npos;
    CHECK_MESSAGE(mentions, text);
  }
}

TEST_CASE("style seeds change the wording, not the plan") {
  WorldSpec ws;
  ws.seed = 9;
  auto g = generate_world(ws);
  Rng rng(1);
  int differing = 0;
  for (int k = 0; k < 40; ++k) {
    NodeId s = g.nodes()[uniform_index(rng, g.node_count())];
    NodeId t = g.nodes()[uniform_index(rng, g.node_count())];
    auto plan = shortest_path(g, s, t);
    if (plan.behaviors.size() < 2) continue;
    auto a = synthesize_instruction(g, plan, 1);
    auto b = synthesize_instruction(g, plan, 2);
    differing += a != b;
    CHECK(oracle::invert_instruction(g, s, a) == plan.behaviors);
    CHECK(oracle::invert_instruction(g, s, b) == plan.behaviors);
  }
  CHECK(differing > 20);
}

TEST_CASE("landmarks on traversed edges can be mentioned") {
  auto g = fx::graph({"R-1 oor C-1 vase", "C-1 cf C-2"});
  NavPlan p{node("R-1"), {Behavior::oo_right}};
  bool seen = false;
  for (std::uint64_t style = 0; style < 30 && !seen; ++style)
    seen = synthesize_instruction(g, p, style).find("vase") != std::string::npos;
  CHECK(seen);
}

TEST_CASE("every synthesized instruction inverts to its gold plan") {
  const auto& d = default_data();
  for (const DatasetSplit* split : {&d.training, &d.test_repeated, &d.test_new})
    for (const auto& s : split->samples) {
      auto back = oracle::invert_instruction(split->graph(s.graph_id), s.gold_plan.start, s.instruction);
      CHECK_MESSAGE(back == s.gold_plan.behaviors, s.instruction << " | " << format_behaviors(s.gold_plan.behaviors));
    }
}

TEST_CASE("dataset sizes and double instructions") {
  const auto& d = default_data();
  CHECK(d.training.samples.size() == 500);
  CHECK(d.test_repeated.samples.size() == 100);
  CHECK(d.test_new.samples.size() == 100);
  std::set<RouteKey> routes;
  for (const auto& s : d.training.samples) routes.insert(key(s));
  CHECK(routes.size() == d.training.samples.size());

  auto spec = fx::small_spec(4, 3, 20);
  spec.double_fraction = 0.3;
  auto dd = build_dataset(spec);
  std::map<RouteKey, int> count;
  for (const auto& s : dd.training.samples) ++count[key(s)];
  std::size_t singles = 0, doubles = 0;
  for (const auto& [k, n] : count) {
    CHECK((n == 1 || n == 2));
    (n == 1 ? singles : doubles) += 1;
  }
  CHECK(doubles > 0);
  CHECK(dd.training.samples.size() == singles + 2 * doubles);
  // Same arithmetic at the reported corpus scale.
  CHECK(4062 + 2 * 2002 == 8066);
}

TEST_CASE("split disjointness") {
  const auto& d = default_data();
  std::set<RouteKey> train;
  for (const auto& s : d.training.samples) train.insert(key(s));
  for (const auto& s : d.test_repeated.samples) CHECK(train.count(key(s)) == 0);
  std::set<std::string> train_graphs;
  for (const auto& g : d.training.graphs) train_graphs.insert(g->id());
  for (const auto& s : d.test_repeated.samples) CHECK(train_graphs.count(s.graph_id) == 1);
  for (const auto& s : d.test_new.samples) CHECK(train_graphs.count(s.graph_id) == 0);
}

TEST_CASE("gold plans are valid and within length bounds") {
  const auto& d = default_data();
  for (const DatasetSplit* split : {&d.training, &d.test_repeated, &d.test_new})
    for (const auto& s : split->samples) {
      const auto& g = split->graph(s.graph_id);
      CHECK(oracle::run(g, s.gold_plan.start, s.gold_plan.behaviors).has_value());
      CHECK(s.gold_plan.behaviors.size() >= 2);
      CHECK(s.gold_plan.behaviors.size() <= 14);
      CHECK(g.edge_count() <= 300);
      CHECK(normalize_text(s.instruction).size() <= 150);
    }
}

TEST_CASE("dataset generation is deterministic") {
  auto a = build_dataset(fx::small_spec(5));
  auto b = build_dataset(fx::small_spec(5));
  CHECK(a.training == b.training);
  CHECK(a.test_repeated == b.test_repeated);
  CHECK(a.test_new == b.test_new);
}

TEST_CASE("invalid dataset specs") {
  auto s = fx::small_spec(1);
  s.train_routes_per_graph = 0;
  CHECK_THROWS_AS(build_dataset(s), ValidationError);
  s = fx::small_spec(1);
  s.double_fraction = 1.5;
  CHECK_THROWS_AS(build_dataset(s), ValidationError);
}

TEST_CASE("samples round trip") {
  auto d = build_dataset(fx::small_spec(6));
  std::vector<Sample> ten(d.training.samples.begin(), d.training.samples.begin() + 10);
  GraphRegistry reg;
  for (const auto& g : d.training.graphs) reg[g->id()] = g;
  const std::string dir = tmpdir("samples");
  write_samples(ten, dir + "/s.samples");
  CHECK(read_samples(dir + "/s.samples", reg) == ten);

  {
    std::ofstream out(dir + "/bad.samples");
    out << "graph=" << ten[0].graph_id << " start=" << to_string(ten[0].gold_plan.start)
        << " plan=cf zigzag text=\"go\"\n";
  }
  try {
    read_samples(dir + "/bad.samples", reg);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("zigzag") != std::string::npos);
    CHECK(e.line() == 1);
  }
  {
    std::ofstream out(dir + "/missing.samples");
    out << "graph=nowhere start=R-0 plan=cf text=\"go\"\n";
  }
  CHECK_THROWS_AS(read_samples(dir + "/missing.samples", reg), MissingGraph);
}

TEST_CASE("dataset directory round trip and referential integrity") {
  auto d = build_dataset(fx::small_spec(8));
  const std::string dir = tmpdir("dataset");
  write_dataset(dir, d);
  auto back = read_dataset(dir + "/manifest.txt");
  REQUIRE(back.count("training") == 1);
  CHECK(back.at("training") == d.training);
  CHECK(back.at("test-repeated") == d.test_repeated);
  CHECK(back.at("test-new") == d.test_new);
  for (const auto& [name, split] : back)
    for (const auto& s : split.samples) {
      CHECK(fs::exists(dir + "/graphs/" + s.graph_id + ".graph"));
      CHECK_NOTHROW(split.graph(s.graph_id));
    }
}

TEST_CASE("detour routes") {
  WorldSpec ws;
  ws.seed = 12;
  auto g = generate_world(ws);
  Rng rng(3);
  int found = 0;
  for (NodeId s : g.nodes())
    for (NodeId t : g.nodes()) {
      if (s == t) continue;
      auto best = shortest_path(g, s, t);
      auto det = detour_route(g, s, t, 14, rng);
      if (!det) continue;
      ++found;
      CHECK(det->behaviors.size() > best.behaviors.size());
      CHECK(det->behaviors.size() <= 14);
      CHECK(oracle::run(g, s, det->behaviors) == to_string(t));
    }
  CHECK(found > 0);
}

TEST_CASE("normalize_text") {
  CHECK(normalize_text("Turn Right, then advance.") ==
        std::vector<std::string>{"turn", "right", ",", "then", "advance", "."});
  CHECK(normalize_text("rooms") == std::vector<std::string>{"room"});
  for (const auto& s : default_data().training.samples) {
    auto once = normalize_text(s.instruction);
    CHECK(normalize_text(join_tokens(once)) == once);
  }
}
