#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bnav/nav_graph.hpp"
#include "bnav/world_gen.hpp"

namespace bnav {

int exact_match(std::span<const Behavior> pred, std::span<const Behavior> gold);

/// Multiset intersection size.
std::size_t matched_tokens(std::span<const Behavior> pred, std::span<const Behavior> gold);

/// Per-pair F1; 0 when precision + recall is 0.
double f1_score(std::span<const Behavior> pred, std::span<const Behavior> gold);

/// Levenshtein distance with unit insert, delete and substitute costs.
int edit_distance(std::span<const Behavior> pred, std::span<const Behavior> gold);

/// 1 iff pred executes from start and ends where gold ends.
int goal_match(const BehavioralGraph& g, NodeId start, std::span<const Behavior> pred,
               std::span<const Behavior> gold);

struct SampleRecord {
  std::string sample_id;
  int em = 0;
  double precision = 0.0;  ///< this sample's matched / predicted (0 when nothing predicted)
  double recall = 0.0;     ///< matched / gold (1 when gold is empty)
  int ed = 0;
  int gm = 0;
  std::vector<Behavior> pred;
  std::vector<Behavior> gold;
};

struct MetricReport {
  std::string split;
  std::size_t n = 0;
  double em = 0.0;  ///< fraction of samples
  double f1 = 0.0;  ///< micro-averaged over the split
  double ed = 0.0;  ///< mean edit distance
  double gm = 0.0;  ///< fraction of samples
  std::size_t matched = 0, predicted = 0, gold_tokens = 0;
  std::vector<SampleRecord> records;
};

/// Scores one (pred, gold) pair.
SampleRecord score_sample(const BehavioralGraph& g, NodeId start, std::span<const Behavior> pred,
                          std::span<const Behavior> gold, std::string sample_id = {});

/// Aggregates records into a report (micro F1, means and fractions).
MetricReport aggregate(std::string split, std::vector<SampleRecord> records);

using PlanSource = std::function<std::vector<Behavior>(const Sample&, const BehavioralGraph&)>;

/// Sample ids are "<split>-<index>". Throws EmptyDataset and MissingGraph.
MetricReport evaluate(const PlanSource& source, const DatasetSplit& split);

/// Header `sample_id,em,f1_p,f1_r,ed,gm,pred_plan,gold_plan`.
std::string records_csv(const MetricReport& report);
/// `split n EM F1 ED GM` row with EM, F1 and GM as percentages.
std::string summary_line(const MetricReport& report);
std::string summary_header();

}  // namespace bnav
