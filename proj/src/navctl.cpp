#include "bnav/navctl.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "bnav/checkpoint.hpp"
#include "bnav/eval_metrics.hpp"
#include "bnav/training.hpp"

namespace bnav {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("short write to " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool flag(const RunConfig& rc, const std::string& key) {
  const auto& v = rc.get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
  throw ValidationError(key + ": not a boolean: '" + v + "'");
}

std::string route_key(const Sample& s) {
  return s.graph_id + "|" + to_string(s.gold_plan.start) + "|" + format_behaviors(s.gold_plan.behaviors);
}

// Distinct plans, and how many of them carry two or more instructions.
std::pair<std::size_t, std::size_t> plan_counts(const DatasetSplit& split) {
  std::map<std::string, int> per;
  for (const auto& s : split.samples) ++per[route_key(s)];
  std::size_t doubles = 0;
  for (const auto& [k, n] : per) doubles += n > 1 ? 1 : 0;
  return {per.size(), doubles};
}

}  // namespace

void write_run_manifest(const std::string& out_dir, const std::string& command, const RunConfig& rc,
                        const std::vector<std::string>& artifacts) {
  std::string m = "# bnav run manifest v1\n";
  m += "command " + command + "\n";
  m += "config_hash " + hex64(rc.hash()) + "\n";
  m += "seed " + rc.get("seed") + "\n";
  for (const auto& [k, v] : rc.values()) m += "config " + k + "=" + v + "\n";
  std::vector<std::string> sorted = artifacts;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& rel : sorted) {
    const std::string bytes = read_file(fs::path(out_dir) / rel);
    m += "artifact " + rel + " " + hex64(fnv1a64(bytes)) + " " + std::to_string(bytes.size()) + "\n";
  }
  write_file(fs::path(out_dir) / "run.manifest", m);
}

void cmd_gen(const RunConfig& rc, const std::string& out_dir, std::ostream& log) {
  const DatasetSpec spec = dataset_spec(rc);
  const Dataset data = build_dataset(spec);

  // Independent hygiene scan before anything is written.
  std::set<std::string> train_keys, train_graphs;
  for (const auto& s : data.training.samples) train_keys.insert(route_key(s));
  for (const auto& g : data.training.graphs) train_graphs.insert(g->id());
  for (const auto& s : data.test_repeated.samples)
    if (train_keys.count(route_key(s)) || !train_graphs.count(s.graph_id))
      throw ValidationError("test-repeated sample violates split hygiene: " + route_key(s));
  for (const auto& s : data.test_new.samples)
    if (train_graphs.count(s.graph_id)) throw ValidationError("test-new sample uses a training graph: " + s.graph_id);
  for (const DatasetSplit* sp : {&data.training, &data.test_repeated, &data.test_new})
    for (const auto& s : sp->samples)
      if (!is_valid_plan(sp->graph(s.graph_id), s.gold_plan))
        throw ValidationError("gold plan does not execute: " + route_key(s));

  ensure_dir(out_dir);
  write_dataset(out_dir, data);

  log << "split          graphs  single  double  plans  samples\n";
  for (const DatasetSplit* sp : {&data.training, &data.test_repeated, &data.test_new}) {
    auto [plans, doubles] = plan_counts(*sp);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %6zu  %6zu  %6zu  %5zu  %7zu\n", sp->name.c_str(), sp->graphs.size(),
                  plans - doubles, doubles, plans, sp->samples.size());
    log << buf;
  }
  log << "hygiene: test-repeated routes disjoint from training, test-new graphs unseen: ok\n";

  std::vector<std::string> artifacts;
  for (const auto& e : fs::recursive_directory_iterator(out_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out_dir).generic_string();
    if (rel == "run.manifest") continue;
    if (rel == "manifest.txt" || rel.ends_with(".samples") || rel.starts_with("graphs/")) artifacts.push_back(rel);
  }
  write_run_manifest(out_dir, "gen", rc, artifacts);
}

void cmd_train(const RunConfig& rc, const std::string& out_dir, std::ostream& log) {
  const ModelConfig cfg = model_config(rc);
  auto splits = read_dataset(rc.get("dataset"));
  auto it = splits.find("training");
  if (it == splits.end() || it->second.samples.empty()) throw EmptyDataset("dataset has no training samples");
  const DatasetSplit& training = it->second;

  ensure_dir(out_dir);
  ModelState st = build_model(cfg, training.samples);
  if (cfg.variant == Variant::baseline) log << "baseline variant: scheduled sampling disabled\n";
  TrainOptions opts;
  opts.checkpoint_dir = out_dir;
  opts.resume = flag(rc, "resume");
  opts.on_epoch = [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %4d  tf %.3f  loss %.6f  val_em %.4f  val_gm %.4f\n", e.epoch,
                  e.teacher_forcing, e.loss, e.val_em, e.val_gm);
    log << buf;
  };
  TrainingReport rep = train(st, training, opts);
  save_checkpoint(to_checkpoint(st), (fs::path(out_dir) / "model.ckpt").string());
  write_file(fs::path(out_dir) / "train_report.csv", rep.to_csv());
  log << "best epoch " << rep.best_epoch << " (fit " << rep.n_fit << ", validation " << rep.n_val << ")\n";
  write_run_manifest(out_dir, "train", rc, {"model.ckpt", "train_report.csv"});
}

ModelState load_model_for(const RunConfig& rc) {
  ModelState st = model_from_checkpoint(load_checkpoint(rc.get("checkpoint")));
  const auto stored = config_to_map(st.config);
  for (const std::string key : {"variant", "hidden_size", "embed_dim"}) {
    if (rc.explicitly_set(key) && rc.get(key) != stored.at(key))
      throw ShapeMismatch("checkpoint has " + key + "=" + stored.at(key) + " but the config asks for " + rc.get(key));
  }
  // Decode-time options may be overridden.
  if (rc.explicitly_set("ordered_triplets")) st.config.ordered_triplets = flag(rc, "ordered_triplets");
  if (rc.explicitly_set("max_triplets")) st.config.max_triplets = std::stoi(rc.get("max_triplets"));
  if (rc.explicitly_set("max_words")) st.config.max_words = std::stoi(rc.get("max_words"));
  return st;
}

void cmd_eval(const RunConfig& rc, const std::string& out_dir, std::ostream& log) {
  ModelState st = load_model_for(rc);
  auto splits = read_dataset(rc.get("dataset"));
  const auto wanted = split_list(rc.get("splits"));
  if (wanted.empty()) throw ValidationError("no splits requested");

  std::vector<MetricReport> reports;
  for (const auto& name : wanted) {
    auto it = splits.find(name);
    if (it == splits.end()) throw ValidationError("dataset has no split '" + name + "'");
    reports.push_back(evaluate(
        [&](const Sample& s, const BehavioralGraph& g) { return translate(st, g, s.gold_plan.start, s.instruction); },
        it->second));
  }

  ensure_dir(out_dir);
  std::string summary = summary_header() + "\n";
  std::vector<std::string> artifacts{"summary.csv"};
  for (const auto& r : reports) {
    summary += summary_line(r) + "\n";
    write_file(fs::path(out_dir) / (r.split + ".csv"), records_csv(r));
    artifacts.push_back(r.split + ".csv");
  }
  write_file(fs::path(out_dir) / "summary.csv", summary);
  log << summary;
  write_run_manifest(out_dir, "eval", rc, artifacts);
}

std::string attention_csv(const DecodeTrace& tr) {
  const bool graph_rows = !tr.triplets.empty();
  const std::size_t rows = graph_rows ? tr.triplets.size() : tr.words.size();
  std::string out = graph_rows ? "triplet" : "word";
  for (std::size_t t = 0; t < tr.step_attention.size(); ++t) out += ",step_" + std::to_string(t + 1);
  out += "\n";
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    std::string label = graph_rows ? to_string(tr.triplets[r]) : tr.words[r];
    if (label.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char c : label) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = q + "\"";
    }
    out += label;
    for (const auto& d : tr.step_attention) {
      std::snprintf(buf, sizeof buf, ",%.6f", d[static_cast<Eigen::Index>(r)]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string attention_pgm(const DecodeTrace& tr, int cell) {
  const std::size_t rows = tr.triplets.empty() ? tr.words.size() : tr.triplets.size();
  const std::size_t cols = tr.step_attention.size();
  const std::size_t w = cols * static_cast<std::size_t>(cell), h = rows * static_cast<std::size_t>(cell);
  std::string img = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<double> col_max(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) col_max[c] = tr.step_attention[c].maxCoeff();
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t r = y / static_cast<std::size_t>(cell);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t c = x / static_cast<std::size_t>(cell);
      const double v = col_max[c] > 0 ? tr.step_attention[c][static_cast<Eigen::Index>(r)] / col_max[c] : 0.0;
      img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    }
  }
  return img;
}

void cmd_predict(const RunConfig& rc, const std::string& out_dir, std::ostream& log) {
  ModelState st = load_model_for(rc);
  if (rc.get("graph").empty()) throw ValidationError("predict needs a graph file");
  if (rc.get("start").empty()) throw ValidationError("predict needs a start tag");
  if (rc.get("instruction").empty()) throw ValidationError("predict needs an instruction");
  const BehavioralGraph g = read_graph_file(rc.get("graph"));
  const NodeId start = parse_node_id(rc.get("start"));
  g.require_index(start);

  DecodeTrace tr = predict(st, g, start, rc.get("instruction"));
  NavPlan plan = tr.plan;
  if (st.config.variant == Variant::baseline) {
    auto out = dfs_repair(g, start, tr.plan.behaviors, 3);
    if (auto* r = std::get_if<Repaired>(&out)) {
      plan = r->plan;
      log << "repair: " << r->edits << " substitution(s)\n";
    } else {
      log << "repair: unrepairable within 3 substitutions\n";
    }
  }
  log << "plan: " << format_behaviors(plan.behaviors) << "\n";
  try {
    const auto nodes = execute_plan(g, plan);
    log << "nodes:";
    for (NodeId n : nodes) log << ' ' << to_string(n);
    log << "\n";
  } catch (const InvalidPlan& e) {
    log << "nodes: invalid at step " << e.step() << "\n";
  }

  std::vector<std::string> artifacts;
  if (const auto& dir = rc.get("attention"); !dir.empty()) {
    ensure_dir(dir);
    write_file(fs::path(dir) / "attention.csv", attention_csv(tr));
    write_file(fs::path(dir) / "attention.pgm", attention_pgm(tr));
    log << "attention written to " << dir << "\n";
  }
  ensure_dir(out_dir);
  write_file(fs::path(out_dir) / "prediction.txt", format_behaviors(plan.behaviors) + "\n");
  artifacts.push_back("prediction.txt");
  write_run_manifest(out_dir, "predict", rc, artifacts);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Translate navigation instructions into behavior plans"};
  app.require_subcommand(1);

  std::string config_file, out_dir = "out";
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  bool resume = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value config file");
    sub->add_option("--seed", flags["seed"], "random seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--set", sets, "override one key (key=value), repeatable");
  };
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* trn = app.add_subcommand("train", "train a model variant");
  auto* evl = app.add_subcommand("eval", "score a checkpoint on dataset splits");
  auto* prd = app.add_subcommand("predict", "translate one instruction");
  for (auto* s : {gen, trn, evl, prd}) common(s);
  trn->add_option("--dataset", flags["dataset"], "dataset manifest");
  trn->add_option("--variant", flags["variant"], "full, full-no-mask, ablation, ablation-mask or baseline");
  trn->add_option("--epochs", flags["epochs"], "training epochs");
  trn->add_flag("--resume", resume, "continue from <out>/last.ckpt");
  evl->add_option("--dataset", flags["dataset"], "dataset manifest");
  evl->add_option("--checkpoint", flags["checkpoint"], "model checkpoint");
  evl->add_option("--splits", flags["splits"], "comma-separated split names");
  prd->add_option("--checkpoint", flags["checkpoint"], "model checkpoint");
  prd->add_option("--graph", flags["graph"], "graph file");
  prd->add_option("--start", flags["start"], "start node tag, e.g. R-1");
  prd->add_option("--instruction", flags["instruction"], "instruction text");
  prd->add_option("--attention", flags["attention"], "directory for attention CSV and image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig rc;
    if (!config_file.empty()) rc.merge_file(config_file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
      rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : flags)
      if (!v.empty()) rc.set(k, v);
    if (resume) rc.set("resume", "true");

    if (gen->parsed()) cmd_gen(rc, out_dir, std::cout);
    else if (trn->parsed()) cmd_train(rc, out_dir, std::cout);
    else if (evl->parsed()) cmd_eval(rc, out_dir, std::cout);
    else cmd_predict(rc, out_dir, std::cout);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace bnav
