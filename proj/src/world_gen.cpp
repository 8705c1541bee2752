#include "bnav/world_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace bnav {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Layout

namespace {

enum Side { kLeft = 0, kRight = 1 };

struct CorridorLayout {
  int length = 0;
  std::vector<int> plus, minus;  // node index per segment and direction
};

struct Junction {
  int branch = 0;  // corridor index
  int segment = 0;
  Side side = kLeft;
};

struct Layout {
  std::vector<NodeId> nodes;
  std::vector<Triplet> triplets;
};

class WorldBuilder {
 public:
  WorldBuilder(const WorldSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  Layout build() {
    plan_places();
    plan_corridors();
    create_corridor_nodes();
    assign_places();
    scatter_landmarks();
    connect_corridors();
    connect_places();
    connect_halls();
    return Layout{nodes_, triplets_};
  }

 private:
  int add_node(LocationType type) {
    int& counter = counters_[static_cast<std::size_t>(type)];
    nodes_.push_back(NodeId{type, counter++});
    return static_cast<int>(nodes_.size() - 1);
  }

  void edge(int from, Behavior b, int to, std::vector<Landmark> attrs = {}) {
    std::sort(attrs.begin(), attrs.end());
    attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());
    triplets_.push_back(Triplet{nodes_[static_cast<std::size_t>(from)], b, std::move(attrs),
                                nodes_[static_cast<std::size_t>(to)]});
  }

  void plan_places() {
    const int rooms = spec_.num_rooms;
    place_types_.assign(static_cast<std::size_t>(rooms), LocationType::room);
    const int offices = uniform_int(rng_, 1, std::max(1, rooms / 3));
    const int labs = uniform_int(rng_, 0, std::max(0, rooms / 4));
    const int kitchens = uniform_int(rng_, 0, 2);
    const int bathrooms = uniform_int(rng_, 0, 2);
    place_types_.insert(place_types_.end(), static_cast<std::size_t>(offices), LocationType::office);
    place_types_.insert(place_types_.end(), static_cast<std::size_t>(labs), LocationType::lab);
    place_types_.insert(place_types_.end(), static_cast<std::size_t>(kitchens), LocationType::kitchen);
    place_types_.insert(place_types_.end(), static_cast<std::size_t>(bathrooms), LocationType::bathroom);
    shuffle(place_types_, rng_);
  }

  void plan_corridors() {
    const int branches = spec_.num_corridors - 1;
    const int halls = spec_.num_halls;
    const int places = static_cast<int>(place_types_.size());
    // A hall opens onto two short corridors of its own.
    const int hall_corridors = 2 * halls;
    corridors_.resize(static_cast<std::size_t>(1 + branches + hall_corridors));

    // Roughly 1.35 slot per place, two slots per segment.
    int segments = static_cast<int>(std::ceil(places * 0.68)) + 1;
    int hall_len_total = 0;
    for (int h = 0; h < hall_corridors; ++h) {
      int len = uniform_int(rng_, 1, 2);
      corridors_[static_cast<std::size_t>(1 + branches + h)].length = len;
      hall_len_total += len;
    }
    segments = std::max(segments - hall_len_total, 3 + 2 * branches);
    int main_len = std::max(3 + 2 * branches, segments / (1 + branches) + (branches > 0 ? 2 : 0));
    corridors_[0].length = main_len;
    int rest = std::max(0, segments - main_len);
    for (int b = 0; b < branches; ++b) {
      int len = std::max(2, rest / std::max(1, branches - b));
      len = std::max(2, len + uniform_int(rng_, -1, 1));
      corridors_[static_cast<std::size_t>(1 + b)].length = len;
      rest = std::max(0, rest - len);
    }

    // Junction segments on the main corridor: interior, one branch each.
    std::vector<int> candidates;
    for (int s = 1; s + 1 < main_len; ++s) candidates.push_back(s);
    shuffle(candidates, rng_);
    for (int b = 0; b < branches; ++b)
      junctions_.push_back(Junction{1 + b, candidates[static_cast<std::size_t>(b)],
                                    bernoulli(rng_, 0.5) ? kLeft : kRight});
  }

  void create_corridor_nodes() {
    for (auto& c : corridors_) {
      c.plus.resize(static_cast<std::size_t>(c.length));
      c.minus.resize(static_cast<std::size_t>(c.length));
      for (int s = 0; s < c.length; ++s) {
        c.plus[static_cast<std::size_t>(s)] = add_node(LocationType::corridor);
        c.minus[static_cast<std::size_t>(s)] = add_node(LocationType::corridor);
      }
    }
  }

  void assign_places() {
    // slot id = (corridor, segment, side)
    std::set<std::tuple<int, int, int>> free;
    for (int c = 0; c < static_cast<int>(corridors_.size()); ++c)
      for (int s = 0; s < corridors_[static_cast<std::size_t>(c)].length; ++s)
        for (int side = 0; side < 2; ++side) free.insert({c, s, side});
    for (const auto& j : junctions_) free.erase({0, j.segment, j.side});

    // Dead ends need a place to turn around in.
    std::vector<std::tuple<int, int, int>> required;
    auto require_end = [&](int c, int s) {
      int side = bernoulli(rng_, 0.5) ? kLeft : kRight;
      if (!free.count({c, s, side})) side = 1 - side;
      required.emplace_back(c, s, side);
      free.erase({c, s, side});
    };
    for (int c = 0; c < static_cast<int>(corridors_.size()); ++c) {
      const int last = corridors_[static_cast<std::size_t>(c)].length - 1;
      if (c == 0) {
        if (spec_.num_halls < 1) require_end(0, last);
        if (spec_.num_halls < 2) require_end(0, 0);
      } else {
        require_end(c, last);
      }
    }
    if (required.size() > place_types_.size())
      throw SpecInfeasible("not enough places for the corridor dead ends");

    std::vector<std::tuple<int, int, int>> rest(free.begin(), free.end());
    shuffle(rest, rng_);
    const std::size_t extra = place_types_.size() - required.size();
    if (rest.size() < extra) throw SpecInfeasible("corridors too short for the requested places");
    required.insert(required.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(extra));
    std::sort(required.begin(), required.end());

    for (std::size_t i = 0; i < required.size(); ++i) {
      int node = add_node(place_types_[i]);
      slot_place_[required[i]] = node;
    }
  }

  void scatter_landmarks() {
    auto draw = [&]() {
      std::vector<Landmark> out = {static_cast<Landmark>(uniform_index(rng_, kNumLandmarks))};
      if (bernoulli(rng_, 0.25)) out.push_back(static_cast<Landmark>(uniform_index(rng_, kNumLandmarks)));
      return out;
    };
    for (int c = 0; c < static_cast<int>(corridors_.size()); ++c)
      for (int s = 0; s < corridors_[static_cast<std::size_t>(c)].length; ++s)
        if (bernoulli(rng_, spec_.landmark_density)) segment_landmarks_[{c, s}] = draw();
    for (const auto& [slot, node] : slot_place_)
      if (bernoulli(rng_, spec_.landmark_density * 0.5)) place_landmarks_[node] = draw();
  }

  std::vector<Landmark> seg_lm(int c, int s) const {
    auto it = segment_landmarks_.find({c, s});
    return it == segment_landmarks_.end() ? std::vector<Landmark>{} : it->second;
  }

  const Junction* junction_at(int segment) const {
    for (const auto& j : junctions_)
      if (j.segment == segment) return &j;
    return nullptr;
  }

  void connect_corridors() {
    for (int c = 0; c < static_cast<int>(corridors_.size()); ++c) {
      const auto& cor = corridors_[static_cast<std::size_t>(c)];
      for (int s = 0; s < cor.length; ++s) {
        const int plus = cor.plus[static_cast<std::size_t>(s)];
        const int minus = cor.minus[static_cast<std::size_t>(s)];
        const Junction* j = c == 0 ? junction_at(s) : nullptr;
        const Behavior straight = j ? Behavior::sp : Behavior::cf;
        if (s + 1 < cor.length) edge(plus, straight, cor.plus[static_cast<std::size_t>(s + 1)], seg_lm(c, s));
        if (s > 0) edge(minus, straight, cor.minus[static_cast<std::size_t>(s - 1)], seg_lm(c, s));
        if (!j) continue;
        const auto& br = corridors_[static_cast<std::size_t>(j->branch)];
        const int into = br.plus[0];
        const int back = br.minus[0];
        if (j->side == kLeft) {
          edge(plus, Behavior::lt, into);
          edge(minus, Behavior::rt, into);
          edge(back, Behavior::lt, plus);
          edge(back, Behavior::rt, minus);
        } else {
          edge(plus, Behavior::rt, into);
          edge(minus, Behavior::lt, into);
          edge(back, Behavior::lt, minus);
          edge(back, Behavior::rt, plus);
        }
      }
    }
  }

  void connect_places() {
    for (const auto& [slot, place] : slot_place_) {
      const auto [c, s, side] = slot;
      const auto& cor = corridors_[static_cast<std::size_t>(c)];
      const int plus = cor.plus[static_cast<std::size_t>(s)];
      const int minus = cor.minus[static_cast<std::size_t>(s)];
      auto lm_it = place_landmarks_.find(place);
      const auto lm = lm_it == place_landmarks_.end() ? std::vector<Landmark>{} : lm_it->second;
      if (side == kLeft) {
        edge(plus, Behavior::io_left, place, lm);
        edge(minus, Behavior::io_right, place, lm);
        edge(place, Behavior::oo_left, plus);
        edge(place, Behavior::oo_right, minus);
      } else {
        edge(plus, Behavior::io_right, place, lm);
        edge(minus, Behavior::io_left, place, lm);
        edge(place, Behavior::oo_left, minus);
        edge(place, Behavior::oo_right, plus);
      }
      auto across = slot_place_.find({c, s, 1 - side});
      if (across != slot_place_.end()) edge(place, Behavior::oio, across->second);
    }
  }

  void connect_halls() {
    const int branches = spec_.num_corridors - 1;
    const auto& main = corridors_[0];
    for (int h = 0; h < spec_.num_halls; ++h) {
      const int hall = add_node(LocationType::hall);
      const auto& left = corridors_[static_cast<std::size_t>(1 + branches + 2 * h)];
      const auto& right = corridors_[static_cast<std::size_t>(2 + branches + 2 * h)];
      // Hall 0 sits past the + end of the main corridor, hall 1 past the - end.
      const int entry = h == 0 ? main.plus.back() : main.minus.front();
      const int exit = h == 0 ? main.minus.back() : main.plus.front();
      edge(entry, Behavior::cf, hall);
      edge(hall, Behavior::ch_left, left.plus[0]);
      edge(hall, Behavior::ch_right, right.plus[0]);
      edge(left.minus[0], Behavior::cf, right.plus[0]);
      edge(left.minus[0], Behavior::rt, exit);
      edge(right.minus[0], Behavior::cf, left.plus[0]);
      edge(right.minus[0], Behavior::lt, exit);
    }
  }

  const WorldSpec& spec_;
  Rng& rng_;
  std::array<int, kNumLocationTypes> counters_{};
  std::vector<NodeId> nodes_;
  std::vector<Triplet> triplets_;
  std::vector<LocationType> place_types_;
  std::vector<CorridorLayout> corridors_;
  std::vector<Junction> junctions_;
  std::map<std::tuple<int, int, int>, int> slot_place_;
  std::map<std::pair<int, int>, std::vector<Landmark>> segment_landmarks_;
  std::map<int, std::vector<Landmark>> place_landmarks_;
};

bool is_place(NodeId n) { return n.type != LocationType::corridor && n.type != LocationType::hall; }

}  // namespace

void validate(const WorldSpec& spec) {
  if (spec.num_rooms < 6 || spec.num_rooms > 65)
    throw ValidationError("num_rooms must be in [6, 65], got " + std::to_string(spec.num_rooms));
  if (spec.num_corridors < 1 || spec.num_corridors > 8)
    throw ValidationError("num_corridors must be in [1, 8]");
  if (spec.num_halls < 0 || spec.num_halls > 2) throw ValidationError("num_halls must be in [0, 2]");
  if (!(spec.landmark_density >= 0.0 && spec.landmark_density <= 1.0))
    throw ValidationError("landmark_density must be in [0, 1]");
}

BehavioralGraph generate_world(const WorldSpec& spec, std::string id) {
  validate(spec);
  constexpr int kAttempts = 8;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, {0x776f726cULL, static_cast<std::uint64_t>(attempt)}));
    try {
      Layout layout = WorldBuilder(spec, rng).build();
      BehavioralGraph g(id, std::move(layout.nodes), std::move(layout.triplets));
      if (g.strongly_connected()) return g;
    } catch (const SpecInfeasible&) {
    } catch (const ValidationError&) {
      // slot capacity exceeded; try another draw
    }
  }
  throw SpecInfeasible("could not lay out world with seed " + std::to_string(spec.seed));
}

// ---------------------------------------------------------------------------
// Instructions

const PhraseBank& phrase_bank() {
  static const PhraseBank bank = [] {
    PhraseBank p;
    auto set = [&](Behavior b, std::vector<std::string> v) { p.behavior[symbol_index(b)] = std::move(v); };
    set(Behavior::oo_left, {"exit {from} and turn left", "go out of {from} and turn left",
                            "leave {from} and make a left", "go out and turn left"});
    set(Behavior::oo_right, {"exit {from} and turn right", "go out of {from} and turn right",
                             "leave {from} and make a right", "go out and turn right"});
    set(Behavior::io_left, {"enter {to} on your left", "go into {to} on the left", "turn left into {to}"});
    set(Behavior::io_right, {"enter {to} on your right", "go into {to} on the right", "turn right into {to}"});
    set(Behavior::oio, {"exit {from} and enter {to} straight ahead", "go out and enter {to} in front of you",
                        "cross into {to} across the corridor"});
    set(Behavior::lt, {"turn left at the intersection", "make a left at the corner", "take a left at the junction"});
    set(Behavior::rt, {"turn right at the intersection", "make a right at the corner", "take a right at the junction"});
    set(Behavior::cf, {"follow the corridor", "go down the corridor", "walk along the hallway",
                       "continue down the corridor"});
    set(Behavior::sp, {"go straight through the intersection", "cross the intersection",
                       "continue straight past the junction"});
    set(Behavior::ch_left, {"cross the hall and turn left", "go through the hall and make a left"});
    set(Behavior::ch_right, {"cross the hall and turn right", "go through the hall and make a right"});
    p.named_entry = {"enter {to}", "go into {to}", "head into {to}"};
    p.merged_run = {"advance forward", "keep going straight", "go straight ahead"};
    p.passing = {"passing {lm}", "past {lm}", "where you will see {lm}"};
    p.beside = {"next to {lm}", "with {lm} inside"};
    p.joiners = {", ", ", then ", ", and then "};
    p.reorder_marker = "after you";
    p.closings = {"You have arrived.", "That is your destination.", "You will be there."};
    return p;
  }();
  return bank;
}

namespace {

std::string landmark_words(Landmark l) {
  std::string s(to_string(l));
  std::replace(s.begin(), s.end(), '-', ' ');
  return s;
}

std::string place_ref(NodeId n, Rng& rng) {
  const std::string word(location_name(n.type));
  if (has_public_name(n.type) && is_place(n) && bernoulli(rng, 0.5))
    return word + " " + std::to_string(n.index);
  return "the " + word;
}

std::string fill(std::string tmpl, std::string_view slot, const std::string& value) {
  for (auto pos = tmpl.find(slot); pos != std::string::npos; pos = tmpl.find(slot))
    tmpl.replace(pos, slot.size(), value);
  return tmpl;
}

bool straight(Behavior b) { return b == Behavior::cf || b == Behavior::sp; }

/// The single cf/sp edge available at `node`, if any.
std::optional<Behavior> straight_at(const BehavioralGraph& g, std::size_t node) {
  if (g.next_index(node, Behavior::cf) >= 0) return Behavior::cf;
  if (g.next_index(node, Behavior::sp) >= 0) return Behavior::sp;
  return std::nullopt;
}

struct Clause {
  std::string text;
  bool plain = true;  // no landmark mention, eligible for reordering
};

}  // namespace

std::string synthesize_instruction(const BehavioralGraph& g, const NavPlan& plan,
                                   std::uint64_t style_seed) {
  const PhraseBank& bank = phrase_bank();
  const auto visited = execute_plan(g, plan);
  const auto& bs = plan.behaviors;
  if (bs.empty()) return "You are already there.";

  Rng rng(derive_seed(style_seed, {fnv1a64(to_string(plan.start) + ":" + format_behaviors(bs))}));
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[uniform_index(rng, v.size())];
  };
  auto lm_ref = [&](Landmark l) { return (bernoulli(rng, 0.5) ? "the " : "a ") + landmark_words(l); };

  std::vector<Clause> clauses;
  std::size_t t = 0;
  while (t < bs.size()) {
    if (straight(bs[t])) {
      std::size_t u = t;
      while (u + 1 < bs.size() && straight(bs[u + 1])) ++u;
      // Replay the reader's greedy rule: keep going straight until the next
      // behavior is possible (or the corridor ends) and merge only if that
      // lands exactly where the plan does.
      bool mergeable = false;
      {
        std::size_t node = *g.node_index(visited[t]);
        std::size_t steps = 0;
        bool agrees = true;
        while (true) {
          auto s = straight_at(g, node);
          if (!s) break;
          if (t + steps > u || *s != bs[t + steps]) {
            agrees = false;
            break;
          }
          node = static_cast<std::size_t>(g.next_index(node, *s));
          ++steps;
          if (u + 1 < bs.size() && g.next_index(node, bs[u + 1]) >= 0) break;
        }
        mergeable = agrees && steps == u - t + 1;
      }
      if (mergeable && bernoulli(rng, 0.5)) {
        Clause c{pick(bank.merged_run), true};
        for (std::size_t k = t; k <= u && c.plain; ++k) {
          const Triplet* e = g.find_edge(visited[k], bs[k]);
          if (e && !e->attrs.empty() && bernoulli(rng, 0.5)) {
            c.text += " " + fill(pick(bank.passing), "{lm}", lm_ref(e->attrs.front()));
            c.plain = false;
          }
        }
        clauses.push_back(std::move(c));
        t = u + 1;
        continue;
      }
    }
    const Behavior b = bs[t];
    const NodeId to = visited[t + 1];
    Clause c;
    if ((b == Behavior::io_left || b == Behavior::io_right) && has_public_name(to.type) && bernoulli(rng, 0.4)) {
      // Only the name says which door; the side has to come from the map.
      c.text = fill(pick(bank.named_entry), "{to}", std::string(location_name(to.type)) + " " + std::to_string(to.index));
    } else {
      c.text = pick(bank.behavior[symbol_index(b)]);
      c.text = fill(c.text, "{from}", place_ref(visited[t], rng));
      c.text = fill(c.text, "{to}", place_ref(to, rng));
    }
    const Triplet* e = g.find_edge(visited[t], b);
    if (e && !e->attrs.empty() && bernoulli(rng, 0.6)) {
      const bool entering = b == Behavior::io_left || b == Behavior::io_right || b == Behavior::oio;
      c.text += " " + fill(pick(entering ? bank.beside : bank.passing), "{lm}", lm_ref(e->attrs.front()));
      c.plain = false;
    }
    clauses.push_back(std::move(c));
    ++t;
  }

  // Occasionally describe a pair back to front: "<second> after you <first>".
  std::vector<Clause> arranged;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i + 1 < clauses.size() && clauses[i].plain && clauses[i + 1].plain && bernoulli(rng, 0.15)) {
      arranged.push_back(Clause{clauses[i + 1].text + " " + bank.reorder_marker + " " + clauses[i].text, false});
      ++i;
    } else {
      arranged.push_back(clauses[i]);
    }
  }

  std::string text;
  std::size_t i = 0;
  while (i < arranged.size()) {
    const std::size_t n = std::min<std::size_t>(arranged.size() - i, static_cast<std::size_t>(uniform_int(rng, 1, 3)));
    std::string sentence = arranged[i].text;
    for (std::size_t k = 1; k < n; ++k) sentence += pick(bank.joiners) + arranged[i + k].text;
    sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
    if (!text.empty()) text += ' ';
    text += sentence + ".";
    i += n;
  }
  if (bernoulli(rng, 0.3)) text += " " + pick(bank.closings);
  return text;
}

// ---------------------------------------------------------------------------
// Datasets

const BehavioralGraph& DatasetSplit::graph(std::string_view id) const {
  for (const auto& g : graphs)
    if (g->id() == id) return *g;
  throw MissingGraph("split " + name + " has no graph '" + std::string(id) + "'");
}

bool DatasetSplit::operator==(const DatasetSplit& other) const {
  if (name != other.name || samples != other.samples || graphs.size() != other.graphs.size()) return false;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& a = *graphs[i];
    const auto& b = *other.graphs[i];
    if (a.id() != b.id() || !std::ranges::equal(a.nodes(), b.nodes()) ||
        !std::ranges::equal(a.triplets(), b.triplets()))
      return false;
  }
  return true;
}

void validate(const DatasetSpec& spec) {
  if (spec.n_train_graphs <= 0 || spec.n_new_graphs <= 0)
    throw ValidationError("graph counts must be positive");
  if (spec.train_routes_per_graph <= 0 || spec.test_repeated_routes_per_graph <= 0 ||
      spec.test_new_routes_per_graph <= 0)
    throw ValidationError("route counts must be positive");
  if (!(spec.double_fraction >= 0.0 && spec.double_fraction <= 1.0))
    throw ValidationError("double_fraction must be in [0, 1]");
  if (!(spec.suboptimal_fraction >= 0.0 && spec.suboptimal_fraction <= 1.0))
    throw ValidationError("suboptimal_fraction must be in [0, 1]");
  if (spec.min_rooms < 6 || spec.max_rooms > 65 || spec.min_rooms > spec.max_rooms)
    throw ValidationError("room range must lie within [6, 65]");
  if (spec.min_plan_length < 1 || spec.min_plan_length > spec.max_plan_length)
    throw ValidationError("bad plan length range");
}

std::optional<NavPlan> detour_route(const BehavioralGraph& g, NodeId start, NodeId goal,
                                    int max_length, Rng& rng) {
  const NavPlan best = shortest_path(g, start, goal);
  const auto on_path = execute_plan(g, best);
  std::vector<NodeId> candidates;
  for (NodeId n : g.nodes())
    if (n.type == LocationType::corridor && std::find(on_path.begin(), on_path.end(), n) == on_path.end())
      candidates.push_back(n);
  shuffle(candidates, rng);
  for (std::size_t k = 0; k < std::min<std::size_t>(candidates.size(), 24); ++k) {
    NavPlan a = shortest_path(g, start, candidates[k]);
    NavPlan b = shortest_path(g, candidates[k], goal);
    NavPlan joined{start, a.behaviors};
    joined.behaviors.insert(joined.behaviors.end(), b.behaviors.begin(), b.behaviors.end());
    if (static_cast<int>(joined.behaviors.size()) > max_length) continue;
    if (joined.behaviors.size() <= best.behaviors.size()) continue;
    const auto nodes = execute_plan(g, joined);
    // The goal should only be reached at the end.
    if (std::find(nodes.begin(), nodes.end() - 1, goal) != nodes.end() - 1) continue;
    return joined;
  }
  return std::nullopt;
}

namespace {

std::string route_key(const std::string& graph_id, const NavPlan& p) {
  return graph_id + "|" + to_string(p.start) + "|" + format_behaviors(p.behaviors);
}

std::vector<NavPlan> make_routes(const BehavioralGraph& g, int count, const DatasetSpec& spec,
                                 std::set<std::string>& used, Rng& rng) {
  std::vector<NodeId> places;
  for (NodeId n : g.nodes())
    if (is_place(n)) places.push_back(n);
  std::vector<NavPlan> routes;
  const int max_attempts = count * 200;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(routes.size()) < count; ++attempt) {
    const NodeId s = places[uniform_index(rng, places.size())];
    const NodeId goal = places[uniform_index(rng, places.size())];
    if (s == goal) continue;
    NavPlan plan = shortest_path(g, s, goal);
    if (bernoulli(rng, spec.suboptimal_fraction)) {
      if (auto d = detour_route(g, s, goal, spec.max_plan_length, rng)) plan = std::move(*d);
    }
    const int len = static_cast<int>(plan.behaviors.size());
    if (len < spec.min_plan_length || len > spec.max_plan_length) continue;
    if (!used.insert(route_key(g.id(), plan)).second) continue;
    routes.push_back(std::move(plan));
  }
  if (static_cast<int>(routes.size()) < count)
    throw SpecInfeasible("graph " + g.id() + " yields only " + std::to_string(routes.size()) +
                         " distinct routes, " + std::to_string(count) + " requested");
  return routes;
}

std::string graph_name(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03d", prefix, i);
  return buf;
}

GraphPtr random_world(const std::string& id, const DatasetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  WorldSpec w;
  w.seed = derive_seed(seed, {1});
  w.num_rooms = uniform_int(rng, spec.min_rooms, spec.max_rooms);
  w.num_corridors = uniform_int(rng, 1, 3);
  w.num_halls = uniform_int(rng, 0, 2);
  w.landmark_density = 0.3;
  return std::make_shared<const BehavioralGraph>(generate_world(w, id));
}

std::string instruction_for(const BehavioralGraph& g, const NavPlan& plan, std::uint64_t seed,
                            const std::string& avoid = {}) {
  for (std::uint64_t k = 0;; ++k) {
    std::string text = synthesize_instruction(g, plan, derive_seed(seed, {k}));
    if (text != avoid || k >= 16) return text;
  }
}

}  // namespace

Dataset build_dataset(const DatasetSpec& spec) {
  validate(spec);
  Dataset data;
  data.training.name = "training";
  data.test_repeated.name = "test-repeated";
  data.test_new.name = "test-new";

  for (int i = 0; i < spec.n_train_graphs; ++i)
    data.training.graphs.push_back(
        random_world(graph_name('g', i), spec, derive_seed(spec.seed, {10, static_cast<std::uint64_t>(i)})));
  for (int i = 0; i < spec.n_new_graphs; ++i)
    data.test_new.graphs.push_back(
        random_world(graph_name('n', i), spec, derive_seed(spec.seed, {11, static_cast<std::uint64_t>(i)})));
  data.test_repeated.graphs = data.training.graphs;

  std::set<std::string> used;
  std::vector<std::vector<NavPlan>> train_routes;
  for (std::size_t i = 0; i < data.training.graphs.size(); ++i) {
    Rng rng(derive_seed(spec.seed, {20, i}));
    train_routes.push_back(make_routes(*data.training.graphs[i], spec.train_routes_per_graph, spec, used, rng));
  }

  // Which training plans get a second instruction.
  std::vector<std::pair<std::size_t, std::size_t>> all_plans;
  for (std::size_t i = 0; i < train_routes.size(); ++i)
    for (std::size_t r = 0; r < train_routes[i].size(); ++r) all_plans.emplace_back(i, r);
  std::set<std::pair<std::size_t, std::size_t>> doubled;
  {
    Rng rng(derive_seed(spec.seed, {30}));
    auto order = all_plans;
    shuffle(order, rng);
    const auto k = static_cast<std::size_t>(std::llround(spec.double_fraction * static_cast<double>(order.size())));
    doubled.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }

  for (std::size_t i = 0; i < train_routes.size(); ++i) {
    const auto& g = *data.training.graphs[i];
    for (std::size_t r = 0; r < train_routes[i].size(); ++r) {
      const auto& plan = train_routes[i][r];
      const auto seed = derive_seed(spec.seed, {40, i, r});
      std::string first = instruction_for(g, plan, derive_seed(seed, {0}));
      data.training.samples.push_back(Sample{g.id(), first, plan});
      if (doubled.count({i, r}))
        data.training.samples.push_back(Sample{g.id(), instruction_for(g, plan, derive_seed(seed, {1}), first), plan});
    }
  }

  for (std::size_t i = 0; i < data.test_repeated.graphs.size(); ++i) {
    const auto& g = *data.test_repeated.graphs[i];
    Rng rng(derive_seed(spec.seed, {50, i}));
    auto routes = make_routes(g, spec.test_repeated_routes_per_graph, spec, used, rng);
    for (std::size_t r = 0; r < routes.size(); ++r)
      data.test_repeated.samples.push_back(
          Sample{g.id(), instruction_for(g, routes[r], derive_seed(spec.seed, {60, i, r})), routes[r]});
  }

  for (std::size_t i = 0; i < data.test_new.graphs.size(); ++i) {
    const auto& g = *data.test_new.graphs[i];
    Rng rng(derive_seed(spec.seed, {70, i}));
    std::set<std::string> fresh;
    auto routes = make_routes(g, spec.test_new_routes_per_graph, spec, fresh, rng);
    for (std::size_t r = 0; r < routes.size(); ++r)
      data.test_new.samples.push_back(
          Sample{g.id(), instruction_for(g, routes[r], derive_seed(spec.seed, {80, i, r})), routes[r]});
  }
  return data;
}

Dataset build_dataset(int n_train_graphs, int n_new_graphs, int routes_per_graph,
                      double double_fraction, std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_train_graphs = n_train_graphs;
  spec.n_new_graphs = n_new_graphs;
  spec.train_routes_per_graph = routes_per_graph;
  spec.test_repeated_routes_per_graph = routes_per_graph;
  spec.test_new_routes_per_graph = routes_per_graph;
  spec.double_fraction = double_fraction;
  spec.seed = seed;
  return build_dataset(spec);
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

Sample parse_sample_line(std::string_view line, std::size_t lineno, const GraphRegistry& graphs) {
  auto expect = [&](std::string_view key, std::size_t at) {
    if (line.substr(at, key.size()) != key)
      throw ParseError(lineno, "expected '" + std::string(key) + "'");
    return at + key.size();
  };
  std::size_t p = expect("graph=", 0);
  std::size_t sp = line.find(' ', p);
  if (sp == std::string_view::npos) throw ParseError(lineno, "truncated record");
  Sample s;
  s.graph_id = std::string(line.substr(p, sp - p));
  p = expect("start=", sp + 1);
  sp = line.find(' ', p);
  if (sp == std::string_view::npos) throw ParseError(lineno, "truncated record");
  try {
    s.gold_plan.start = parse_node_id(line.substr(p, sp - p));
  } catch (const ParseError& e) {
    throw ParseError(lineno, e.what());
  }
  p = expect("plan=", sp + 1);
  std::size_t text_at = line.find(" text=\"", p);
  if (text_at == std::string_view::npos) throw ParseError(lineno, "missing text field");
  try {
    s.gold_plan.behaviors = parse_behaviors(line.substr(p, text_at - p));
  } catch (const ParseError& e) {
    throw ParseError(lineno, e.what());
  }
  p = text_at + 7;
  bool closed = false;
  for (; p < line.size(); ++p) {
    char c = line[p];
    if (c == '\\' && p + 1 < line.size()) {
      s.instruction += line[++p];
    } else if (c == '"') {
      closed = true;
      ++p;
      break;
    } else {
      s.instruction += c;
    }
  }
  if (!closed) throw ParseError(lineno, "unterminated text field");
  while (p < line.size() && (line[p] == ' ' || line[p] == '\r')) ++p;
  if (p != line.size()) throw ParseError(lineno, "trailing characters after text field");
  if (s.instruction.empty()) throw ParseError(lineno, "empty instruction");

  auto it = graphs.find(s.graph_id);
  if (it == graphs.end())
    throw MissingGraph("line " + std::to_string(lineno) + ": unknown graph id '" + s.graph_id + "'");
  if (!is_valid_plan(*it->second, s.gold_plan))
    throw ParseError(lineno, "plan does not execute on graph " + s.graph_id);
  return s;
}

}  // namespace

void write_samples(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& s : samples)
    out << "graph=" << s.graph_id << " start=" << to_string(s.gold_plan.start)
        << " plan=" << format_behaviors(s.gold_plan.behaviors) << " text=" << quote(s.instruction) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Sample> read_samples(const std::string& path, const GraphRegistry& graphs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_sample_line(line, lineno, graphs));
  }
  return out;
}

void write_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "graphs", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  std::set<std::string> written;
  std::ostringstream manifest;
  manifest << "# bnav dataset manifest v1\n";
  for (const DatasetSplit* split : {&data.training, &data.test_repeated, &data.test_new})
    for (const auto& g : split->graphs)
      if (written.insert(g->id()).second) {
        const std::string rel = "graphs/" + g->id() + ".graph";
        write_graph_file((fs::path(dir) / rel).string(), *g);
        manifest << "graph " << g->id() << ' ' << rel << '\n';
      }
  for (const DatasetSplit* split : {&data.training, &data.test_repeated, &data.test_new}) {
    std::string file = split->name + ".samples";
    std::replace(file.begin(), file.end(), '-', '_');
    write_samples(split->samples, (fs::path(dir) / file).string());
    manifest << "split " << split->name << ' ' << file;
    for (const auto& g : split->graphs) manifest << ' ' << g->id();
    manifest << '\n';
  }
  std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.str();
}

std::map<std::string, DatasetSplit> read_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  GraphRegistry registry;
  std::map<std::string, DatasetSplit> splits;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "graph") {
      std::string id, rel;
      if (!(ls >> id >> rel)) throw ParseError(lineno, "expected 'graph <id> <path>'");
      auto g = std::make_shared<const BehavioralGraph>(read_graph_file((base / rel).string()));
      if (g->id() != id) throw ParseError(lineno, "graph file " + rel + " holds id " + g->id());
      registry[id] = std::move(g);
    } else if (kind == "split") {
      std::string name, rel, id;
      if (!(ls >> name >> rel)) throw ParseError(lineno, "expected 'split <name> <samples> <graph ids...>'");
      DatasetSplit split;
      split.name = name;
      GraphRegistry own;
      while (ls >> id) {
        auto it = registry.find(id);
        if (it == registry.end()) throw MissingGraph("manifest line " + std::to_string(lineno) + ": unknown graph '" + id + "'");
        split.graphs.push_back(it->second);
        own[id] = it->second;
      }
      split.samples = read_samples((base / rel).string(), own);
      splits[name] = std::move(split);
    } else {
      throw ParseError(lineno, "unknown manifest record '" + kind + "'");
    }
  }
  return splits;
}

}  // namespace bnav
