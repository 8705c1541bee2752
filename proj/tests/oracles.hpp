#pragma once

// Test-side reference implementations. None of these call the library code
// they are used to check; they work from raw triplet lists and plain strings.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnav/nav_graph.hpp"

namespace oracle {

using bnav::Behavior;
using bnav::BehavioralGraph;
using bnav::NodeId;

// ---------------------------------------------------------------------------
// Graph search over the raw triplet list.

inline std::map<std::string, std::vector<std::pair<Behavior, std::string>>> adjacency(const BehavioralGraph& g) {
  std::map<std::string, std::vector<std::pair<Behavior, std::string>>> adj;
  for (NodeId n : g.nodes()) adj[bnav::to_string(n)];
  for (const auto& t : g.triplets()) adj[bnav::to_string(t.from)].push_back({t.behavior, bnav::to_string(t.to)});
  return adj;
}

/// Directed hop distances from start; absent keys are unreachable.
inline std::map<std::string, int> bfs(const BehavioralGraph& g, NodeId start) {
  auto adj = adjacency(g);
  std::map<std::string, int> dist;
  std::deque<std::string> q;
  dist[bnav::to_string(start)] = 0;
  q.push_back(bnav::to_string(start));
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (const auto& [b, v] : adj[u])
      if (!dist.count(v)) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
  }
  return dist;
}

/// Every node reachable ignoring edge direction.
inline bool weakly_connected(const BehavioralGraph& g) {
  if (g.node_count() == 0) return true;
  std::map<std::string, std::vector<std::string>> und;
  for (const auto& t : g.triplets()) {
    und[bnav::to_string(t.from)].push_back(bnav::to_string(t.to));
    und[bnav::to_string(t.to)].push_back(bnav::to_string(t.from));
  }
  std::set<std::string> seen{bnav::to_string(g.nodes()[0])};
  std::vector<std::string> stack{bnav::to_string(g.nodes()[0])};
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (const auto& v : und[u])
      if (seen.insert(v).second) stack.push_back(v);
  }
  return seen.size() == g.node_count();
}

/// Final node tag or nullopt when some behavior has no edge.
inline std::optional<std::string> run(const BehavioralGraph& g, NodeId start, const std::vector<Behavior>& seq) {
  auto adj = adjacency(g);
  std::string cur = bnav::to_string(start);
  for (Behavior b : seq) {
    bool moved = false;
    for (const auto& [eb, v] : adj[cur])
      if (eb == b) {
        cur = v;
        moved = true;
        break;
      }
    if (!moved) return std::nullopt;
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Repair: enumerate every sequence within k substitutions.

/// Smallest number of substitutions (<= max_edits) that makes seq valid, or -1.
inline int min_repair_edits(const BehavioralGraph& g, NodeId start, const std::vector<Behavior>& seq,
                            int max_edits) {
  const std::size_t n = seq.size();
  for (int k = 0; k <= max_edits; ++k) {
    std::vector<std::size_t> pos(static_cast<std::size_t>(k));
    // Combinations of k positions, each taking one of the other 10 behaviors.
    std::function<bool(std::size_t, std::size_t, std::vector<Behavior>&)> rec =
        [&](std::size_t depth, std::size_t from, std::vector<Behavior>& cur) -> bool {
      if (depth == static_cast<std::size_t>(k)) return run(g, start, cur).has_value();
      for (std::size_t p = from; p < n; ++p) {
        const Behavior orig = cur[p];
        for (std::size_t s = 0; s < bnav::kNumBehaviors; ++s) {
          if (bnav::behavior_at(s) == orig) continue;
          cur[p] = bnav::behavior_at(s);
          if (rec(depth + 1, p + 1, cur)) {
            cur[p] = orig;
            return true;
          }
        }
        cur[p] = orig;
      }
      return false;
    };
    std::vector<Behavior> cur = seq;
    if (k > static_cast<int>(n)) break;
    if (rec(0, 0, cur)) return k;
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Edit distance by breadth-first search over strings.
//
// Strings over a small alphabet are packed as (length, base-4 digits). An
// optimal edit script can always be ordered as deletions, substitutions,
// insertions, so intermediate lengths never exceed max(|a|, |b|) and the
// search can be confined to strings of length <= max_len.

class EditGraph {
 public:
  explicit EditGraph(int max_len, int alphabet = 4) : max_len_(max_len), k_(alphabet) {
    for (int len = 0; len <= max_len_; ++len) {
      offset_.push_back(total_);
      int c = 1;
      for (int i = 0; i < len; ++i) c *= k_;
      total_ += c;
    }
  }

  int size() const { return total_; }

  int encode(const std::vector<int>& s) const {
    int v = 0;
    for (int x : s) v = v * k_ + x;
    return offset_[s.size()] + v;
  }

  std::vector<int> decode(int id) const {
    int len = 0;
    while (len < max_len_ && offset_[len + 1] <= id) ++len;
    int v = id - offset_[len];
    std::vector<int> s(static_cast<std::size_t>(len));
    for (int i = len - 1; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] = v % k_;
      v /= k_;
    }
    return s;
  }

  /// Distances from `src` to every packed string.
  std::vector<int> distances_from(int src) const {
    if (adj_.empty()) build_adjacency();
    std::vector<int> dist(static_cast<std::size_t>(total_), -1);
    std::vector<int> q{src};
    q.reserve(static_cast<std::size_t>(total_));
    dist[static_cast<std::size_t>(src)] = 0;
    for (std::size_t h = 0; h < q.size(); ++h) {
      const int u = q[h];
      for (int id : adj_[static_cast<std::size_t>(u)])
        if (dist[static_cast<std::size_t>(id)] < 0) {
          dist[static_cast<std::size_t>(id)] = dist[static_cast<std::size_t>(u)] + 1;
          q.push_back(id);
        }
    }
    return dist;
  }

 private:
  // One-edit neighbours of every string, computed once.
  void build_adjacency() const {
    adj_.resize(static_cast<std::size_t>(total_));
    for (int u = 0; u < total_; ++u) {
      const auto s = decode(u);
      auto& out = adj_[static_cast<std::size_t>(u)];
      for (std::size_t i = 0; i < s.size(); ++i) {
        auto t = s;
        t.erase(t.begin() + static_cast<std::ptrdiff_t>(i));
        out.push_back(encode(t));
        for (int c = 0; c < k_; ++c)
          if (c != s[i]) {
            auto r = s;
            r[i] = c;
            out.push_back(encode(r));
          }
      }
      if (static_cast<int>(s.size()) < max_len_)
        for (std::size_t i = 0; i <= s.size(); ++i)
          for (int c = 0; c < k_; ++c) {
            auto t = s;
            t.insert(t.begin() + static_cast<std::ptrdiff_t>(i), c);
            out.push_back(encode(t));
          }
    }
  }

  mutable std::vector<std::vector<int>> adj_;
  int max_len_, k_;
  int total_ = 0;
  std::vector<int> offset_;
};

// ---------------------------------------------------------------------------
// Instruction inverse. Works from keywords rather than the generator's
// template table, and replays the reader's rule for merged straight runs:
// keep going straight until the next instruction becomes possible.

namespace detail {

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> w;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      w.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) w.push_back(cur);
  return w;
}

inline bool has(const std::vector<std::string>& w, const std::string& x) {
  return std::find(w.begin(), w.end(), x) != w.end();
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    auto k = s.find(sep, pos);
    if (k == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, k - pos));
    pos = k + sep.size();
  }
}

struct Item {
  enum Kind { single, merged, named } kind = single;
  Behavior b = Behavior::cf;
  std::string tag;  // named entries
};

inline std::optional<Item> classify(const std::string& clause) {
  const auto w = words(clause);
  if (w.empty()) return std::nullopt;
  const std::string lc = lower(clause);
  auto side = [&]() -> int { return has(w, "left") ? 0 : has(w, "right") ? 1 : -1; };
  auto starts = [&](const std::string& p) { return lc.rfind(p, 0) == 0; };
  if (starts("advance forward") || starts("keep going straight") || starts("go straight ahead"))
    return Item{Item::merged, Behavior::cf, {}};
  if (has(w, "hall") && (has(w, "cross") || has(w, "through")) && side() >= 0) return Item{Item::single, side() == 0 ? Behavior::ch_left : Behavior::ch_right, {}};
  const bool leaving = has(w, "exit") || has(w, "leave") || (has(w, "go") && has(w, "out"));
  if ((leaving && has(w, "enter")) || lc.find("cross into") != std::string::npos)
    return Item{Item::single, Behavior::oio, {}};
  if (leaving && side() >= 0) return Item{Item::single, side() == 0 ? Behavior::oo_left : Behavior::oo_right, {}};
  if (has(w, "into") || w[0] == "enter") {
    if (side() >= 0) return Item{Item::single, side() == 0 ? Behavior::io_left : Behavior::io_right, {}};
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      auto type = bnav::parse_location_type(w[i]);
      if (type && std::isdigit(static_cast<unsigned char>(w[i + 1][0])))
        return Item{Item::named, Behavior::io_left,
                    std::string(1, bnav::location_prefix(*type)) + "-" + w[i + 1]};
    }
    return std::nullopt;
  }
  const bool crossing = has(w, "intersection") || has(w, "junction") || has(w, "corner");
  if (crossing && side() >= 0) return Item{Item::single, side() == 0 ? Behavior::lt : Behavior::rt, {}};
  if (crossing) return Item{Item::single, Behavior::sp, {}};
  if (has(w, "corridor") || has(w, "hallway")) return Item{Item::single, Behavior::cf, {}};
  return std::nullopt;
}

}  // namespace detail

/// Parses a synthesized instruction back to behaviors; nullopt if some clause
/// is not understood or a step cannot be executed.
inline std::optional<std::vector<Behavior>> invert_instruction(const BehavioralGraph& g, NodeId start,
                                                               const std::string& text) {
  using detail::Item;
  static const std::set<std::string> closings = {"you have arrived", "that is your destination",
                                                 "you will be there", "you are already there"};
  std::vector<Item> items;
  for (auto sentence : detail::split_on(text, ".")) {
    while (!sentence.empty() && sentence.front() == ' ') sentence.erase(0, 1);
    if (sentence.empty() || closings.count(detail::lower(sentence))) continue;
    // Joiners, longest first.
    std::vector<std::string> clauses{sentence};
    for (const std::string sep : {", and then ", ", then ", ", "}) {
      std::vector<std::string> next;
      for (const auto& c : clauses)
        for (const auto& part : detail::split_on(c, sep)) next.push_back(part);
      clauses = next;
    }
    for (const auto& c : clauses) {
      auto parts = detail::split_on(c, " after you ");
      if (parts.size() > 2) return std::nullopt;
      if (parts.size() == 2) std::swap(parts[0], parts[1]);
      for (const auto& p : parts) {
        auto item = detail::classify(p);
        if (!item) return std::nullopt;
        items.push_back(*item);
      }
    }
  }

  auto adj = adjacency(g);
  auto edge = [&](const std::string& u, Behavior b) -> std::optional<std::string> {
    for (const auto& [eb, v] : adj[u])
      if (eb == b) return v;
    return std::nullopt;
  };
  auto straight = [&](const std::string& u) -> std::optional<Behavior> {
    if (edge(u, Behavior::cf)) return Behavior::cf;
    if (edge(u, Behavior::sp)) return Behavior::sp;
    return std::nullopt;
  };
  auto named_entry = [&](const std::string& u, const std::string& tag) -> std::optional<Behavior> {
    for (Behavior b : {Behavior::io_left, Behavior::io_right})
      if (auto v = edge(u, b); v && *v == tag) return b;
    return std::nullopt;
  };

  std::vector<Behavior> out;
  std::string cur = bnav::to_string(start);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& it = items[i];
    if (it.kind == Item::merged) {
      auto ready = [&](const std::string& u) {
        if (i + 1 >= items.size()) return false;
        const Item& nx = items[i + 1];
        if (nx.kind == Item::named) return named_entry(u, nx.tag).has_value();
        if (nx.kind == Item::single) return edge(u, nx.b).has_value();
        return false;
      };
      std::size_t steps = 0;
      while (auto s = straight(cur)) {
        out.push_back(*s);
        cur = *edge(cur, *s);
        ++steps;
        if (ready(cur) || steps > 4 * g.node_count()) break;
      }
      if (steps == 0) return std::nullopt;
      continue;
    }
    Behavior b = it.b;
    if (it.kind == Item::named) {
      auto nb = named_entry(cur, it.tag);
      if (!nb) return std::nullopt;
      b = *nb;
    }
    auto v = edge(cur, b);
    if (!v) return std::nullopt;
    out.push_back(b);
    cur = *v;
  }
  return out;
}

}  // namespace oracle
