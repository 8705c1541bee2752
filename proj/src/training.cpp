#include "bnav/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "bnav/checkpoint.hpp"

namespace bnav {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Snapshot {
  std::vector<Eigen::MatrixXd> values;

  static Snapshot of(const std::vector<num::Param<double>*>& ps) {
    Snapshot s;
    for (auto* p : ps) s.values.push_back(p->value);
    return s;
  }
  void restore(const std::vector<num::Param<double>*>& ps) const {
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
  }
};

std::string encode_epoch(const EpochRecord& e) {
  std::string s = std::to_string(e.epoch) + " " + g17(e.teacher_forcing) + " " + g17(e.loss) + " " + g17(e.val_em) +
                  " " + g17(e.val_gm);
  for (double b : e.batch_losses) s += " " + g17(b);
  return s;
}

EpochRecord decode_epoch(const std::string& s) {
  std::istringstream in(s);
  EpochRecord e;
  in >> e.epoch >> e.teacher_forcing >> e.loss >> e.val_em >> e.val_gm;
  double b;
  while (in >> b) e.batch_losses.push_back(b);
  if (!in.eof()) throw ParseError("bad epoch record in checkpoint");
  return e;
}

struct Progress {
  int next_epoch = 0;
  int best_epoch = -1;
  double best_gm = -1.0, best_em = -1.0;
  std::vector<EpochRecord> history;
};

void save_training(const std::string& path, const ModelState& st, const std::vector<num::Param<double>*>& ps,
                   const num::Adam<double>& adam, const Snapshot& best, const Progress& pr) {
  Checkpoint ck = to_checkpoint(st);
  ck.meta["format"] = "bnav-training";
  ck.meta["train.next_epoch"] = std::to_string(pr.next_epoch);
  ck.meta["train.adam_steps"] = std::to_string(adam.steps());
  ck.meta["train.best_epoch"] = std::to_string(pr.best_epoch);
  ck.meta["train.best_gm"] = g17(pr.best_gm);
  ck.meta["train.best_em"] = g17(pr.best_em);
  for (const auto& e : pr.history) {
    char key[40];
    std::snprintf(key, sizeof key, "train.epoch.%05d", e.epoch);
    ck.meta[key] = encode_epoch(e);
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!adam.first_moments().empty()) {
      ck.tensors["adam.m/" + ps[i]->name] = adam.first_moments()[i];
      ck.tensors["adam.v/" + ps[i]->name] = adam.second_moments()[i];
    }
    if (!best.values.empty()) ck.tensors["best/" + ps[i]->name] = best.values[i];
  }
  save_checkpoint(ck, path);
}

void load_training(const std::string& path, ModelState& st, const std::vector<num::Param<double>*>& ps,
                   num::Adam<double>& adam, Snapshot& best, Progress& pr) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta_value("format") != "bnav-training") throw ValidationError(path + " is not a training checkpoint");
  auto mine = config_to_map(st.config);
  for (const auto& [k, v] : mine) {
    if (k == "epochs") continue;
    if (ck.meta_value("config." + k) != v)
      throw ValidationError("cannot resume: config key " + k + " differs (" + ck.meta_value("config." + k) + " vs " +
                            v + ")");
  }
  if (ck.vocab != st.vocab.tokens()) throw ValidationError("cannot resume: vocabulary differs");
  for (auto* p : ps) {
    const auto& t = ck.tensor(p->name);
    if (t.rows() != p->value.rows() || t.cols() != p->value.cols()) throw ShapeMismatch("cannot resume: " + p->name);
    p->value = t;
  }
  pr.next_epoch = std::stoi(ck.meta_value("train.next_epoch"));
  pr.best_epoch = std::stoi(ck.meta_value("train.best_epoch"));
  pr.best_gm = std::stod(ck.meta_value("train.best_gm"));
  pr.best_em = std::stod(ck.meta_value("train.best_em"));
  const long steps = std::stol(ck.meta_value("train.adam_steps"));
  if (steps > 0) {
    for (auto* p : ps) {
      adam.first_moments().push_back(ck.tensor("adam.m/" + p->name));
      adam.second_moments().push_back(ck.tensor("adam.v/" + p->name));
    }
    adam.set_steps(steps);
  }
  best.values.clear();
  if (ck.tensors.count("best/" + ps.front()->name))
    for (auto* p : ps) best.values.push_back(ck.tensor("best/" + p->name));
  pr.history.clear();
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("train.epoch.", 0) == 0) pr.history.push_back(decode_epoch(v));
}

}  // namespace

std::string TrainingReport::to_csv() const {
  std::string out = "epoch,teacher_forcing,loss,val_em,val_gm\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.4f,%.10g,%.6f,%.6f\n", e.epoch, e.teacher_forcing, e.loss, e.val_em,
                  e.val_gm);
    out += buf;
  }
  return out;
}

double teacher_forcing_at(const ModelConfig& cfg, int epoch) {
  if (cfg.variant == Variant::baseline || !cfg.scheduled_sampling) return 1.0;
  if (cfg.epochs <= 1) return cfg.tf_start;
  const double f = std::clamp(static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1), 0.0, 1.0);
  return cfg.tf_start + (cfg.tf_end - cfg.tf_start) * f;
}

ValidationSplit split_validation(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, {0x76616c}));
  shuffle(idx, rng);
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (k >= n) k = n ? n - 1 : 0;
  ValidationSplit s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  s.fit.assign(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.fit.begin(), s.fit.end());
  return s;
}

TrainingReport train(ModelState& st, const DatasetSplit& split, const TrainOptions& opts) {
  if (split.samples.empty()) throw EmptyDataset("training split is empty");
  const ModelConfig& cfg = st.config;
  const auto vs = split_validation(split.samples.size(), cfg.validation_fraction, cfg.seed);

  std::vector<PreparedInput> prepared;
  prepared.reserve(split.samples.size());
  for (const auto& s : split.samples)
    prepared.push_back(prepare_input(st, split.graph(s.graph_id), s.gold_plan.start, s.instruction));

  auto ps = st.params();
  num::Adam<double> adam(num::AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps});
  Snapshot best;
  Progress pr;

  std::string last_path, best_path;
  if (!opts.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create " + opts.checkpoint_dir + ": " + ec.message());
    last_path = (std::filesystem::path(opts.checkpoint_dir) / "last.ckpt").string();
    best_path = (std::filesystem::path(opts.checkpoint_dir) / "best.ckpt").string();
    if (opts.resume && std::filesystem::exists(last_path)) load_training(last_path, st, ps, adam, best, pr);
  }

  TrainingReport rep;
  rep.n_fit = vs.fit.size();
  rep.n_val = vs.val.size();
  int run_epochs = 0;
  for (int epoch = pr.next_epoch; epoch < cfg.epochs; ++epoch) {
    if (opts.max_epochs_this_run >= 0 && run_epochs >= opts.max_epochs_this_run) break;
    ++run_epochs;
    EpochRecord er;
    er.epoch = epoch;
    er.teacher_forcing = teacher_forcing_at(cfg, epoch);

    std::vector<std::size_t> order = vs.fit;
    Rng order_rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch)}));
    shuffle(order, order_rng);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t lo = 0; lo < order.size(); lo += bs) {
      st.zero_grad();
      double bl = 0.0;
      for (std::size_t k = lo; k < std::min(order.size(), lo + bs); ++k) {
        const std::size_t i = order[k];
        Rng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch), i}));
        bl += sample_loss(st, prepared[i], split.samples[i].gold_plan.behaviors,
                          LossOptions{true, er.teacher_forcing, true}, rng);
      }
      num::clip_global_norm(ps, cfg.clip_norm);
      adam.step(ps);
      er.batch_losses.push_back(bl);
      er.loss += bl;
    }

    bool improved = false;
    if (!vs.val.empty()) {
      std::size_t em = 0, gm = 0;
      for (std::size_t i : vs.val) {
        const auto& s = split.samples[i];
        const auto& g = split.graph(s.graph_id);
        auto pred = translate(st, g, s.gold_plan.start, s.instruction);
        em += pred == s.gold_plan.behaviors ? 1 : 0;
        NavPlan pp{s.gold_plan.start, pred};
        if (is_valid_plan(g, pp) && execute_plan(g, pp).back() == execute_plan(g, s.gold_plan).back()) ++gm;
      }
      er.val_em = static_cast<double>(em) / static_cast<double>(vs.val.size());
      er.val_gm = static_cast<double>(gm) / static_cast<double>(vs.val.size());
      if (er.val_gm > pr.best_gm || (er.val_gm == pr.best_gm && er.val_em > pr.best_em)) {
        pr.best_gm = er.val_gm;
        pr.best_em = er.val_em;
        pr.best_epoch = epoch;
        best = Snapshot::of(ps);
        improved = true;
      }
    } else {
      pr.best_epoch = epoch;
      improved = true;
    }
    pr.history.push_back(er);
    pr.next_epoch = epoch + 1;
    if (!last_path.empty()) {
      save_training(last_path, st, ps, adam, best, pr);
      if (improved) save_checkpoint(to_checkpoint(st), best_path);
    }
    if (opts.on_epoch) opts.on_epoch(er);
  }

  if (!vs.val.empty() && !best.values.empty()) best.restore(ps);
  rep.epochs = pr.history;
  rep.best_epoch = pr.best_epoch;
  return rep;
}

}  // namespace bnav
