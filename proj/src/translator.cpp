#include "bnav/translator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "bnav/text.hpp"

namespace bnav {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

constexpr std::size_t kStop = symbol_index(Behavior::stop);

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": not a number: '" + v + "'");
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": not an integer: '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": not an unsigned integer: '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": not a boolean: '" + v + "'");
}

std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  return best;
}

Vec mask_vec(const BehavioralGraph& g, std::size_t node) { return Vec(mask_at(g, node)); }

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::full_no_mask: return "full-no-mask";
    case Variant::ablation: return "ablation";
    case Variant::ablation_mask: return "ablation-mask";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (auto v : {Variant::full, Variant::full_no_mask, Variant::ablation, Variant::ablation_mask, Variant::baseline})
    if (to_string(v) == name) return v;
  return std::nullopt;
}

bool uses_mask(Variant v) { return v == Variant::full || v == Variant::ablation_mask; }
bool uses_graph_encoder(Variant v) { return v == Variant::full || v == Variant::full_no_mask; }

void validate(const ModelConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
  };
  need(c.hidden_size > 0, "hidden_size must be positive");
  need(c.embed_dim > 0, "embed_dim must be positive");
  need(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
  need(c.batch_size > 0, "batch_size must be positive");
  need(c.max_triplets > 0, "max_triplets must be positive");
  need(c.max_words > 0, "max_words must be positive");
  need(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0, "validation_fraction must be in [0, 1)");
  need(c.tf_start >= 0.0 && c.tf_start <= 1.0 && c.tf_end >= 0.0 && c.tf_end <= 1.0,
       "teacher forcing probabilities must be in [0, 1]");
  need(c.learning_rate > 0.0, "learning_rate must be positive");
  need(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, "Adam betas must be in [0, 1)");
  need(c.adam_eps > 0.0, "adam_eps must be positive");
  need(c.clip_norm >= 0.0, "clip_norm must be non-negative");
  need(c.epochs >= 0, "epochs must be non-negative");
}

std::map<std::string, std::string> config_to_map(const ModelConfig& c) {
  return {
      {"variant", std::string(to_string(c.variant))},
      {"hidden_size", std::to_string(c.hidden_size)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"dropout", fmt_double(c.dropout)},
      {"batch_size", std::to_string(c.batch_size)},
      {"max_triplets", std::to_string(c.max_triplets)},
      {"max_words", std::to_string(c.max_words)},
      {"validation_fraction", fmt_double(c.validation_fraction)},
      {"ordered_triplets", c.ordered_triplets ? "true" : "false"},
      {"scheduled_sampling", c.scheduled_sampling ? "true" : "false"},
      {"tf_start", fmt_double(c.tf_start)},
      {"tf_end", fmt_double(c.tf_end)},
      {"learning_rate", fmt_double(c.learning_rate)},
      {"beta1", fmt_double(c.beta1)},
      {"beta2", fmt_double(c.beta2)},
      {"adam_eps", fmt_double(c.adam_eps)},
      {"clip_norm", fmt_double(c.clip_norm)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"embeddings", c.embeddings},
      {"train_embeddings", c.train_embeddings ? "true" : "false"},
  };
}

ModelConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "variant") {
      auto p = parse_variant(v);
      if (!p) throw ValidationError("unknown variant '" + v + "'");
      c.variant = *p;
    } else if (k == "hidden_size") c.hidden_size = static_cast<int>(parse_int(k, v));
    else if (k == "embed_dim") c.embed_dim = static_cast<int>(parse_int(k, v));
    else if (k == "dropout") c.dropout = parse_double(k, v);
    else if (k == "batch_size") c.batch_size = static_cast<int>(parse_int(k, v));
    else if (k == "max_triplets") c.max_triplets = static_cast<int>(parse_int(k, v));
    else if (k == "max_words") c.max_words = static_cast<int>(parse_int(k, v));
    else if (k == "validation_fraction") c.validation_fraction = parse_double(k, v);
    else if (k == "ordered_triplets") c.ordered_triplets = parse_bool(k, v);
    else if (k == "scheduled_sampling") c.scheduled_sampling = parse_bool(k, v);
    else if (k == "tf_start") c.tf_start = parse_double(k, v);
    else if (k == "tf_end") c.tf_end = parse_double(k, v);
    else if (k == "learning_rate") c.learning_rate = parse_double(k, v);
    else if (k == "beta1") c.beta1 = parse_double(k, v);
    else if (k == "beta2") c.beta2 = parse_double(k, v);
    else if (k == "adam_eps") c.adam_eps = parse_double(k, v);
    else if (k == "clip_norm") c.clip_norm = parse_double(k, v);
    else if (k == "epochs") c.epochs = static_cast<int>(parse_int(k, v));
    else if (k == "seed") c.seed = parse_u64(k, v);
    else if (k == "embeddings") c.embeddings = v;
    else if (k == "train_embeddings") c.train_embeddings = parse_bool(k, v);
    else throw ValidationError("unknown model key '" + k + "'");
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------

ModelState::ModelState(const ModelConfig& cfg, Vocabulary v) : config(cfg), vocab(std::move(v)) {
  validate(config);
  const Eigen::Index H = config.hidden_size, D = config.embed_dim;
  const auto V = static_cast<Eigen::Index>(vocab.size());
  const auto F = static_cast<Eigen::Index>(triplet_feature_width());
  emb = Param("emb", V, D);
  proj_W = Param("proj.W", D, F);
  proj_b = Param("proj.b", D, 1);
  enc_i_fwd = Gru("enc_i.fwd", D, H);
  enc_i_bwd = Gru("enc_i.bwd", D, H);
  enc_g_fwd = Gru("enc_g.fwd", D, H);
  enc_g_bwd = Gru("enc_g.bwd", D, H);
  att_W = Param("att.W", 2 * H, 2 * H);
  fc_W = Param("fc.W", H, 4 * H);
  fc_b = Param("fc.b", H, 1);
  abl_W = Param("abl.W", H, 2 * H);
  abl_b = Param("abl.b", H, 1);
  dec = Gru("dec", kDecoderInputWidth, H);
  W1 = Param("dec_att.W1", H, H);
  W2 = Param("dec_att.W2", H, H);
  va = Param("dec_att.v", H, 1);
  W3 = Param("out.W3", static_cast<Eigen::Index>(kNumSymbols), 2 * H);
}

std::vector<ModelState::Param*> ModelState::params() {
  std::vector<Param*> p;
  if (config.train_embeddings) p.push_back(&emb);
  for (auto* q : enc_i_fwd.params()) p.push_back(q);
  for (auto* q : enc_i_bwd.params()) p.push_back(q);
  if (uses_graph_encoder(config.variant)) {
    p.push_back(&proj_W);
    p.push_back(&proj_b);
    for (auto* q : enc_g_fwd.params()) p.push_back(q);
    for (auto* q : enc_g_bwd.params()) p.push_back(q);
    p.push_back(&att_W);
    p.push_back(&fc_W);
    p.push_back(&fc_b);
  } else {
    p.push_back(&abl_W);
    p.push_back(&abl_b);
  }
  for (auto* q : dec.params()) p.push_back(q);
  p.push_back(&W1);
  p.push_back(&W2);
  p.push_back(&va);
  p.push_back(&W3);
  return p;
}

std::vector<const ModelState::Param*> ModelState::params() const {
  auto mut = const_cast<ModelState*>(this)->params();
  std::vector<const Param*> out(mut.begin(), mut.end());
  if (!config.train_embeddings) out.insert(out.begin(), &emb);
  return out;
}

void ModelState::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

void ModelState::initialize(const EmbeddingTable& table) {
  if (table.vectors.rows() != emb.value.rows() || table.vectors.cols() != emb.value.cols())
    throw ShapeMismatch("embedding table does not match vocabulary and embed_dim");
  Rng rng(derive_seed(config.seed, {0x696e6974}));
  emb.value = table.vectors;
  for (Param* p : {&proj_W, &att_W, &fc_W, &abl_W, &W1, &W2, &va, &W3}) num::glorot_uniform(p->value, rng);
  for (Param* p : {&proj_b, &fc_b, &abl_b}) p->value.setZero();
  for (Gru* g : {&enc_i_fwd, &enc_i_bwd, &enc_g_fwd, &enc_g_bwd, &dec}) g->init(rng);
  for (Param* p : const_cast<ModelState*>(this)->params()) p->zero_grad();
}

ModelState build_model(const ModelConfig& cfg, const std::vector<Sample>& corpus) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& s : corpus) docs.push_back(normalize_text(s.instruction));
  Vocabulary vocab = Vocabulary::from_corpus(docs);
  EmbeddingTable table = cfg.embeddings.empty()
                             ? random_embeddings(vocab, cfg.embed_dim, cfg.seed)
                             : load_pretrained(cfg.embeddings, vocab, cfg.embed_dim, cfg.seed);
  ModelState st(cfg, std::move(vocab));
  st.initialize(table);
  return st;
}

Checkpoint to_checkpoint(const ModelState& st) {
  Checkpoint ck;
  ck.meta["format"] = "bnav-model";
  for (const auto& [k, v] : config_to_map(st.config)) ck.meta["config." + k] = v;
  ck.vocab = st.vocab.tokens();
  for (const auto* p : st.params()) ck.tensors[p->name] = p->value;
  return ck;
}

ModelState model_from_checkpoint(const Checkpoint& ck) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("config.", 0) == 0) kv[k.substr(7)] = v;
  ModelConfig cfg = config_from_map(kv);
  if (ck.vocab.empty() || ck.vocab.front() != Vocabulary::kUnknown)
    throw ValidationError("checkpoint vocabulary is malformed");
  Vocabulary vocab = Vocabulary::from_tokens(ck.vocab);
  if (vocab.tokens() != ck.vocab) throw ValidationError("checkpoint vocabulary is not canonical");
  ModelState st(cfg, std::move(vocab));
  for (auto* p : const_cast<const ModelState&>(st).params()) {
    const auto& t = ck.tensor(p->name);
    if (t.rows() != p->value.rows() || t.cols() != p->value.cols())
      throw ShapeMismatch("tensor " + p->name + " is " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                          ", model expects " + std::to_string(p->value.rows()) + "x" +
                          std::to_string(p->value.cols()));
    const_cast<ModelState::Param*>(p)->value = t;
  }
  return st;
}

// ---------------------------------------------------------------------------

PreparedInput prepare_input(const ModelState& st, const BehavioralGraph& g, NodeId start,
                            std::string_view instruction) {
  PreparedInput in;
  in.graph = &g;
  in.start = start;
  in.start_index = g.require_index(start);
  in.words = normalize_text(instruction);
  if (in.words.empty()) throw EmptyInstruction("instruction has no tokens");
  if (in.words.size() > static_cast<std::size_t>(st.config.max_words)) in.words.resize(st.config.max_words);
  for (const auto& w : in.words) in.tokens.push_back(st.vocab.id(w));
  if (uses_graph_encoder(st.config.variant)) {
    in.triplets = st.config.ordered_triplets ? order_triplets(g, start)
                                             : std::vector<Triplet>(g.triplets().begin(), g.triplets().end());
    if (in.triplets.empty()) throw EmptyGraph("graph " + g.id() + " has no triplets");
    if (in.triplets.size() > static_cast<std::size_t>(st.config.max_triplets))
      in.triplets.resize(st.config.max_triplets);
    for (const auto& t : in.triplets) in.features.push_back(triplet_feature_indices(t));
  }
  return in;
}

Vec decoder_input(std::size_t prev_symbol, LocationType start_type) {
  Vec x = Vec::Zero(kDecoderInputWidth);
  if (prev_symbol > kStartSymbol) throw ShapeMismatch("decoder symbol out of range");
  x[static_cast<Eigen::Index>(prev_symbol)] = 1.0;
  x[static_cast<Eigen::Index>(kNumSymbols + 1 + static_cast<std::size_t>(start_type))] = 1.0;
  return x;
}

std::size_t step_cap(const BehavioralGraph& g) { return 2 * static_cast<std::size_t>(g.diameter()) + 5; }

namespace {

// One forward pass through encoders and context layers, keeping what the
// backward pass needs.
struct ContextPass {
  std::optional<num::BiGruRun<double>> enc_i, enc_g;
  Mat I, Mi;
  Mat G, Mg;
  layers::Attention<double> att;
  Mat Y, Mc;
  Mat C;
};

Mat embed_tokens(const ModelState& st, const std::vector<std::size_t>& tokens) {
  Mat X(static_cast<Eigen::Index>(tokens.size()), st.config.embed_dim);
  for (std::size_t t = 0; t < tokens.size(); ++t)
    X.row(static_cast<Eigen::Index>(t)) = st.emb.value.row(static_cast<Eigen::Index>(tokens[t]));
  return X;
}

Mat project_triplets(const ModelState& st, const std::vector<std::vector<std::size_t>>& features) {
  Mat X(static_cast<Eigen::Index>(features.size()), st.config.embed_dim);
  for (std::size_t l = 0; l < features.size(); ++l) {
    Vec x = st.proj_b.value.col(0);
    for (auto idx : features[l]) x += st.proj_W.value.col(static_cast<Eigen::Index>(idx));
    X.row(static_cast<Eigen::Index>(l)) = x.transpose();
  }
  return X;
}

void run_context(const ModelState& st, const PreparedInput& in, bool train, Rng& rng, ContextPass& p) {
  const double rate = st.config.dropout;
  const Eigen::Index H = st.hidden();
  p.enc_i.emplace(st.enc_i_fwd, st.enc_i_bwd);
  Mat Iraw = p.enc_i->run(embed_tokens(st, in.tokens));
  p.Mi = num::dropout_mask<double>(Iraw.rows(), Iraw.cols(), rate, train, rng);
  p.I = Iraw.cwiseProduct(p.Mi);
  if (uses_graph_encoder(st.config.variant)) {
    if (in.features.empty()) throw EmptyGraph("no triplets to encode");
    p.enc_g.emplace(st.enc_g_fwd, st.enc_g_bwd);
    Mat Graw = p.enc_g->run(project_triplets(st, in.features));
    p.Mg = num::dropout_mask<double>(Graw.rows(), Graw.cols(), rate, train, rng);
    p.G = Graw.cwiseProduct(p.Mg);
    p.att = layers::attend_forward<double>(st.att_W.value, p.I, p.G);
    p.Y = layers::fc_forward<double>(st.fc_W.value, st.fc_b.value, p.att.F);
    p.Mc = num::dropout_mask<double>(p.Y.rows(), H, rate, train, rng);
    p.C = p.Y.cwiseProduct(p.Mc).transpose();
  } else {
    Mat rows = p.I * st.abl_W.value.transpose();
    rows.rowwise() += st.abl_b.value.col(0).transpose();
    p.C = rows.transpose();
  }
}

void context_backward(ModelState& st, const PreparedInput& in, const ContextPass& p, const Mat& dC) {
  Mat dI;
  if (uses_graph_encoder(st.config.variant)) {
    Mat dY = dC.transpose().cwiseProduct(p.Mc);
    auto fg = layers::fc_backward<double>(st.fc_W.value, p.att.F, p.Y, dY);
    st.fc_W.grad += fg.dW;
    st.fc_b.grad += fg.db;
    auto ag = layers::attend_backward<double>(st.att_W.value, p.I, p.G, p.att, fg.dF);
    st.att_W.grad += ag.dW;
    dI = std::move(ag.dI);
    Mat dXg = p.enc_g->backward(ag.dG.cwiseProduct(p.Mg), st.enc_g_fwd, st.enc_g_bwd);
    for (std::size_t l = 0; l < in.features.size(); ++l) {
      const auto row = dXg.row(static_cast<Eigen::Index>(l)).transpose();
      for (auto idx : in.features[l]) st.proj_W.grad.col(static_cast<Eigen::Index>(idx)) += row;
    }
    st.proj_b.grad.col(0) += dXg.colwise().sum().transpose();
  } else {
    Mat dRows = dC.transpose();
    st.abl_W.grad.noalias() += dRows.transpose() * p.I;
    st.abl_b.grad.col(0) += dRows.colwise().sum().transpose();
    dI = dRows * st.abl_W.value;
  }
  Mat dXi = p.enc_i->backward(dI.cwiseProduct(p.Mi), st.enc_i_fwd, st.enc_i_bwd);
  if (st.config.train_embeddings)
    for (std::size_t t = 0; t < in.tokens.size(); ++t)
      st.emb.grad.row(static_cast<Eigen::Index>(in.tokens[t])) += dXi.row(static_cast<Eigen::Index>(t));
}

}  // namespace

Encoded encode(const ModelState& st, const PreparedInput& in) {
  Encoded e;
  e.I = num::encode_bidirectional<double>(st.enc_i_fwd, st.enc_i_bwd, embed_tokens(st, in.tokens));
  if (uses_graph_encoder(st.config.variant)) {
    if (in.features.empty()) throw EmptyGraph("no triplets to encode");
    e.G = num::encode_bidirectional<double>(st.enc_g_fwd, st.enc_g_bwd, project_triplets(st, in.features));
  }
  return e;
}

layers::Attention<double> attend_graph_to_instruction(const ModelState& st, const Mat& I, const Mat& G) {
  const Eigen::Index w = 2 * st.hidden();
  if (I.cols() != w || G.cols() != w) throw ShapeMismatch("encodings must have 2H columns");
  return layers::attend_forward<double>(st.att_W.value, I, G);
}

Mat compress_context(const ModelState& st, const Mat& F) {
  num::require_shape<double>(F, F.rows(), 4 * st.hidden(), "compress_context input");
  return layers::fc_forward<double>(st.fc_W.value, st.fc_b.value, F).transpose();
}

Mat ablation_forward(const ModelState& st, const Mat& I) {
  if (uses_graph_encoder(st.config.variant))
    throw VariantMismatch("ablation context requested for variant " + std::string(to_string(st.config.variant)));
  num::require_shape<double>(I, I.rows(), 2 * st.hidden(), "ablation input");
  Mat rows = I * st.abl_W.value.transpose();
  rows.rowwise() += st.abl_b.value.col(0).transpose();
  return rows.transpose();
}

DecoderStep decode_step(const ModelState& st, const Vec& h_prev, std::size_t prev_symbol, LocationType start_type,
                        const Mat& C) {
  num::require_size<double>(h_prev, st.hidden(), "decoder state");
  num::require_shape<double>(C, st.hidden(), C.cols(), "decoder context");
  DecoderStep s;
  s.h = num::gru_step<double>(st.dec, decoder_input(prev_symbol, start_type), h_prev);
  Mat P = st.W2.value * C;
  auto da = layers::decoder_attend_forward<double>(st.W1.value, st.va.value, s.h, C, P);
  s.logits = layers::output_forward<double>(st.W3.value, da.ctx, s.h);
  s.d = std::move(da.d);
  return s;
}

DecodeTrace predict(const ModelState& st, const PreparedInput& in) {
  const BehavioralGraph& g = *in.graph;
  Rng unused(0);
  ContextPass p;
  run_context(st, in, false, unused, p);

  DecodeTrace tr;
  tr.plan.start = in.start;
  tr.words = in.words;
  tr.triplets = in.triplets;
  if (uses_graph_encoder(st.config.variant)) tr.encoder_attention = p.att.A;

  const bool masked = uses_mask(st.config.variant);
  const std::size_t cap = step_cap(g);
  const Mat P = st.W2.value * p.C;
  num::GruRun<double> run(st.dec);
  std::size_t prev = kStartSymbol;
  std::size_t node = in.start_index;
  for (;;) {
    const Vec& h = run.push(decoder_input(prev, in.start.type));
    auto da = layers::decoder_attend_forward<double>(st.W1.value, st.va.value, h, p.C, P);
    Vec o = layers::output_forward<double>(st.W3.value, da.ctx, h);
    tr.step_attention.push_back(std::move(da.d));
    if (masked) o += mask_vec(g, node);
    std::size_t sym = argmax(o);
    if (sym == kStop || tr.plan.behaviors.size() >= cap) break;
    const Behavior b = behavior_at(sym);
    tr.plan.behaviors.push_back(b);
    if (!tr.tracking_lost) {
      const int next = g.next_index(node, b);
      if (next < 0) tr.tracking_lost = true;
      else node = static_cast<std::size_t>(next);
    }
    prev = sym;
  }
  return tr;
}

DecodeTrace predict(const ModelState& st, const BehavioralGraph& g, NodeId start, std::string_view instruction) {
  return predict(st, prepare_input(st, g, start, instruction));
}

RepairOutcome baseline_predict(const ModelState& st, const BehavioralGraph& g, NodeId start,
                               std::string_view instruction) {
  if (st.config.variant != Variant::baseline)
    throw VariantMismatch("baseline_predict on variant " + std::string(to_string(st.config.variant)));
  auto tr = predict(st, g, start, instruction);
  return dfs_repair(g, start, tr.plan.behaviors, 3);
}

std::vector<Behavior> translate(const ModelState& st, const BehavioralGraph& g, NodeId start,
                                std::string_view instruction) {
  if (st.config.variant == Variant::baseline) {
    auto out = baseline_predict(st, g, start, instruction);
    if (auto* r = std::get_if<Repaired>(&out)) return r->plan.behaviors;
    return std::get<Unrepairable>(out).original.behaviors;
  }
  return predict(st, g, start, instruction).plan.behaviors;
}

double sample_loss(ModelState& st, const PreparedInput& in, const std::vector<Behavior>& gold,
                   const LossOptions& opts, Rng& rng) {
  const BehavioralGraph& g = *in.graph;
  ContextPass p;
  run_context(st, in, opts.train_mode, rng, p);

  const bool masked = uses_mask(st.config.variant);
  std::vector<std::size_t> nodes{in.start_index};
  if (masked) {
    for (Behavior b : gold) {
      const int next = g.next_index(nodes.back(), b);
      if (next < 0) throw InvalidPlan(nodes.size(), {});
      nodes.push_back(static_cast<std::size_t>(next));
    }
  }

  const std::size_t steps = gold.size() + 1;
  const Mat P = st.W2.value * p.C;
  num::GruRun<double> run(st.dec);
  std::vector<layers::DecoderAttention<double>> atts;
  std::vector<Vec> dlogits;
  atts.reserve(steps);
  dlogits.reserve(steps);
  double loss = 0.0;
  std::size_t prev = kStartSymbol;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t target = t < gold.size() ? symbol_index(gold[t]) : kStop;
    const Vec& h = run.push(decoder_input(prev, in.start.type));
    atts.push_back(layers::decoder_attend_forward<double>(st.W1.value, st.va.value, h, p.C, P));
    Vec o = layers::output_forward<double>(st.W3.value, atts.back().ctx, h);
    Vec m = masked ? mask_vec(g, nodes[t]) : Vec();
    auto ce = num::cross_entropy<double>(o, target, m);
    loss += ce.loss;
    dlogits.push_back(std::move(ce.dlogits));
    if (t < gold.size()) {
      prev = target;
      if (opts.teacher_forcing < 1.0 && !bernoulli(rng, opts.teacher_forcing))
        prev = argmax(masked ? Vec(o + m) : o);
    }
  }
  if (!opts.backward) return loss;

  const Eigen::Index H = st.hidden();
  Mat dH(static_cast<Eigen::Index>(steps), H);
  Mat dC = Mat::Zero(p.C.rows(), p.C.cols());
  Mat dP = Mat::Zero(P.rows(), P.cols());
  Vec dctx, dh;
  for (std::size_t t = 0; t < steps; ++t) {
    const Vec& h = run.hidden(static_cast<Eigen::Index>(t));
    layers::output_backward<double>(st.W3.value, atts[t].ctx, h, dlogits[t], st.W3.grad, dctx, dh);
    dh += layers::decoder_attend_backward<double>(st.W1.value, st.va.value, p.C, atts[t], dctx, h, st.W1.grad,
                                                  st.va.grad, dC, dP);
    dH.row(static_cast<Eigen::Index>(t)) = dh.transpose();
  }
  run.backward(dH, st.dec);
  st.W2.grad.noalias() += dP * p.C.transpose();
  dC.noalias() += st.W2.value.transpose() * dP;
  context_backward(st, in, p, dC);
  return loss;
}

}  // namespace bnav
