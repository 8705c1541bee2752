#include "bnav/eval_metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace bnav {

int exact_match(std::span<const Behavior> pred, std::span<const Behavior> gold) {
  return std::equal(pred.begin(), pred.end(), gold.begin(), gold.end()) ? 1 : 0;
}

std::size_t matched_tokens(std::span<const Behavior> pred, std::span<const Behavior> gold) {
  std::array<std::size_t, kNumSymbols> cp{}, cg{};
  for (Behavior b : pred) ++cp[symbol_index(b)];
  for (Behavior b : gold) ++cg[symbol_index(b)];
  std::size_t m = 0;
  for (std::size_t i = 0; i < kNumSymbols; ++i) m += std::min(cp[i], cg[i]);
  return m;
}

double f1_score(std::span<const Behavior> pred, std::span<const Behavior> gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  const double m = static_cast<double>(matched_tokens(pred, gold));
  const double p = pred.empty() ? 0.0 : m / static_cast<double>(pred.size());
  const double r = gold.empty() ? 0.0 : m / static_cast<double>(gold.size());
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

int edit_distance(std::span<const Behavior> a, std::span<const Behavior> b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

int goal_match(const BehavioralGraph& g, NodeId start, std::span<const Behavior> pred,
               std::span<const Behavior> gold) {
  auto end_of = [&](std::span<const Behavior> seq) -> int {
    auto node = g.node_index(start);
    if (!node) return -1;
    int cur = static_cast<int>(*node);
    for (Behavior b : seq) {
      if (b == Behavior::stop) return -1;
      cur = g.next_index(static_cast<std::size_t>(cur), b);
      if (cur < 0) return -1;
    }
    return cur;
  };
  const int gp = end_of(pred);
  return gp >= 0 && gp == end_of(gold) ? 1 : 0;
}

SampleRecord score_sample(const BehavioralGraph& g, NodeId start, std::span<const Behavior> pred,
                          std::span<const Behavior> gold, std::string sample_id) {
  SampleRecord r;
  r.sample_id = std::move(sample_id);
  r.em = exact_match(pred, gold);
  const double m = static_cast<double>(matched_tokens(pred, gold));
  r.precision = pred.empty() ? 0.0 : m / static_cast<double>(pred.size());
  r.recall = gold.empty() ? 1.0 : m / static_cast<double>(gold.size());
  r.ed = edit_distance(pred, gold);
  r.gm = goal_match(g, start, pred, gold);
  r.pred.assign(pred.begin(), pred.end());
  r.gold.assign(gold.begin(), gold.end());
  return r;
}

MetricReport aggregate(std::string split, std::vector<SampleRecord> records) {
  MetricReport rep;
  rep.split = std::move(split);
  rep.n = records.size();
  double ed_sum = 0.0;
  std::size_t em = 0, gm = 0;
  for (const auto& r : records) {
    em += static_cast<std::size_t>(r.em);
    gm += static_cast<std::size_t>(r.gm);
    ed_sum += r.ed;
    rep.matched += matched_tokens(r.pred, r.gold);
    rep.predicted += r.pred.size();
    rep.gold_tokens += r.gold.size();
  }
  if (rep.n) {
    const double n = static_cast<double>(rep.n);
    rep.em = static_cast<double>(em) / n;
    rep.gm = static_cast<double>(gm) / n;
    rep.ed = ed_sum / n;
  }
  const double p = rep.predicted ? static_cast<double>(rep.matched) / static_cast<double>(rep.predicted) : 0.0;
  const double r = rep.gold_tokens ? static_cast<double>(rep.matched) / static_cast<double>(rep.gold_tokens) : 0.0;
  rep.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  rep.records = std::move(records);
  return rep;
}

MetricReport evaluate(const PlanSource& source, const DatasetSplit& split) {
  if (split.samples.empty()) throw EmptyDataset("split " + split.name + " has no samples");
  std::vector<SampleRecord> recs;
  recs.reserve(split.samples.size());
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const Sample& s = split.samples[i];
    const BehavioralGraph& g = split.graph(s.graph_id);
    auto pred = source(s, g);
    char id[64];
    std::snprintf(id, sizeof id, "%s-%04zu", split.name.c_str(), i);
    recs.push_back(score_sample(g, s.gold_plan.start, pred, s.gold_plan.behaviors, id));
  }
  return aggregate(split.name, std::move(recs));
}

std::string records_csv(const MetricReport& rep) {
  std::string out = "sample_id,em,f1_p,f1_r,ed,gm,pred_plan,gold_plan\n";
  char buf[128];
  for (const auto& r : rep.records) {
    std::snprintf(buf, sizeof buf, ",%d,%.6f,%.6f,%d,%d,", r.em, r.precision, r.recall, r.ed, r.gm);
    out += r.sample_id + buf + format_behaviors(r.pred) + "," + format_behaviors(r.gold) + "\n";
  }
  return out;
}

std::string summary_header() { return "split,n,EM,F1,ED,GM"; }

std::string summary_line(const MetricReport& rep) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%zu,%.2f,%.2f,%.4f,%.2f", rep.split.c_str(), rep.n, 100.0 * rep.em,
                100.0 * rep.f1, rep.ed, 100.0 * rep.gm);
  return buf;
}

}  // namespace bnav
