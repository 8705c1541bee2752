#pragma once

// Instruction-to-plan translation: encoders, graph-to-instruction attention,
// FC compression, an attentive GRU decoder with optional graph masking, the
// ablation variants and the repair baseline.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bnav/checkpoint.hpp"
#include "bnav/embedding.hpp"
#include "bnav/layers.hpp"
#include "bnav/nav_graph.hpp"
#include "bnav/numerics.hpp"
#include "bnav/world_gen.hpp"

namespace bnav {

enum class Variant { full, full_no_mask, ablation, ablation_mask, baseline };

std::string_view to_string(Variant v);
/// "full", "full-no-mask", "ablation", "ablation-mask", "baseline".
std::optional<Variant> parse_variant(std::string_view name);

/// Output is masked with the graph at decode time (and in the loss).
bool uses_mask(Variant v);
/// Graph encoder, attention and FC layers are present.
bool uses_graph_encoder(Variant v);

struct ModelConfig {
  Variant variant = Variant::full;
  int hidden_size = 128;
  int embed_dim = 100;
  double dropout = 0.5;
  int batch_size = 256;
  int max_triplets = 300;
  int max_words = 150;
  double validation_fraction = 0.125;
  bool ordered_triplets = true;
  bool scheduled_sampling = true;  ///< ignored (always off) for the baseline
  double tf_start = 1.0;           ///< teacher-forcing probability at the first epoch
  double tf_end = 0.5;             ///< ... and at the last
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;          ///< global gradient norm; 0 disables
  int epochs = 50;
  std::uint64_t seed = 1;
  std::string embeddings;          ///< pretrained vector file; empty = hashed random init
  bool train_embeddings = true;
};

/// Throws ValidationError.
void validate(const ModelConfig& cfg);

std::map<std::string, std::string> config_to_map(const ModelConfig& cfg);
/// Unknown keys are rejected; missing keys keep their defaults.
ModelConfig config_from_map(const std::map<std::string, std::string>& kv);

/// Decoder input: one-hot over the 12 output symbols plus START, followed by
/// a one-hot of the start node's location type.
inline constexpr std::size_t kStartSymbol = kNumSymbols;
inline constexpr Eigen::Index kDecoderInputWidth = static_cast<Eigen::Index>(kNumSymbols + 1 + kNumLocationTypes);

class ModelState {
 public:
  using Param = num::Param<double>;
  using Gru = num::GruCell<double>;

  ModelState(const ModelConfig& cfg, Vocabulary vocab);

  ModelConfig config;
  Vocabulary vocab;

  Param emb;               ///< V x embed_dim
  Param proj_W, proj_b;    ///< triplet features -> embed_dim
  Gru enc_i_fwd, enc_i_bwd;
  Gru enc_g_fwd, enc_g_bwd;
  Param att_W;             ///< 2H x 2H
  Param fc_W, fc_b;        ///< H x 4H, H
  Param abl_W, abl_b;      ///< H x 2H, H
  Gru dec;
  Param W1, W2, va;        ///< decoder attention
  Param W3;                ///< 12 x 2H

  Eigen::Index hidden() const { return config.hidden_size; }

  /// Parameters used by the configured variant, in a fixed order.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void zero_grad();

  /// Glorot weights, zero biases; the embedding table is copied in.
  void initialize(const EmbeddingTable& table);
};

/// Vocabulary from the normalized training instructions, embeddings from
/// config.embeddings (or hashed), then random initialization from config.seed.
ModelState build_model(const ModelConfig& cfg, const std::vector<Sample>& corpus);

Checkpoint to_checkpoint(const ModelState& state);
/// Throws ShapeMismatch when a tensor disagrees with the stored config.
ModelState model_from_checkpoint(const Checkpoint& ckpt);

/// Inputs of one translation request after normalization and truncation.
struct PreparedInput {
  const BehavioralGraph* graph = nullptr;
  NodeId start;
  std::size_t start_index = 0;
  std::vector<std::string> words;
  std::vector<std::size_t> tokens;
  std::vector<Triplet> triplets;  ///< encoder order (BFS-ordered or canonical)
  std::vector<std::vector<std::size_t>> features;
};

/// Throws EmptyInstruction, EmptyGraph, UnknownNode.
PreparedInput prepare_input(const ModelState& state, const BehavioralGraph& g, NodeId start,
                            std::string_view instruction);

struct Encoded {
  Eigen::MatrixXd I;  ///< T x 2H
  Eigen::MatrixXd G;  ///< L x 2H (empty without a graph encoder)
};

/// Inference-mode encoders.
Encoded encode(const ModelState& state, const PreparedInput& in);

layers::Attention<double> attend_graph_to_instruction(const ModelState& state, const Eigen::MatrixXd& I,
                                                      const Eigen::MatrixXd& G);
/// C = tanh(F Wfc^T + b)^T, H x L.
Eigen::MatrixXd compress_context(const ModelState& state, const Eigen::MatrixXd& F);
/// Projected instruction encodings as context, H x T. Throws VariantMismatch
/// for variants with a graph encoder.
Eigen::MatrixXd ablation_forward(const ModelState& state, const Eigen::MatrixXd& I);

struct DecoderStep {
  Eigen::VectorXd h;       ///< H
  Eigen::VectorXd logits;  ///< 12, before masking
  Eigen::VectorXd d;       ///< attention over context columns
};

/// One decoder step. prev_symbol is a symbol index or kStartSymbol.
DecoderStep decode_step(const ModelState& state, const Eigen::VectorXd& h_prev, std::size_t prev_symbol,
                        LocationType start_type, const Eigen::MatrixXd& C);

Eigen::VectorXd decoder_input(std::size_t prev_symbol, LocationType start_type);

struct DecodeTrace {
  NavPlan plan;
  std::vector<std::string> words;
  std::vector<Triplet> triplets;             ///< rows of the attention maps (graph variants)
  std::vector<Eigen::VectorXd> step_attention;  ///< d_t per emitted symbol, stop included
  Eigen::MatrixXd encoder_attention;         ///< L x T (graph variants only)
  bool tracking_lost = false;                ///< an unmasked decode left the graph
};

/// Greedy decoding, masked by the graph for masking variants. Stops on stop
/// or after 2 * diameter + 5 behaviors.
DecodeTrace predict(const ModelState& state, const BehavioralGraph& g, NodeId start, std::string_view instruction);
DecodeTrace predict(const ModelState& state, const PreparedInput& in);

std::size_t step_cap(const BehavioralGraph& g);

/// Unmasked decode followed by dfs_repair with 3 edits. Throws VariantMismatch
/// unless the variant is baseline.
RepairOutcome baseline_predict(const ModelState& state, const BehavioralGraph& g, NodeId start,
                               std::string_view instruction);

/// Behavior sequence the variant commits to: the repaired plan for the
/// baseline (or its raw output when unrepairable), the greedy plan otherwise.
std::vector<Behavior> translate(const ModelState& state, const BehavioralGraph& g, NodeId start,
                                std::string_view instruction);

struct LossOptions {
  bool train_mode = false;     ///< enables dropout
  double teacher_forcing = 1.0;
  bool backward = true;        ///< accumulate gradients into the params
};

/// Summed cross-entropy of gold plan + stop. Masking variants mask each step
/// with the gold node's mask. With teacher_forcing < 1 the fed symbol is the
/// model's own argmax with probability 1 - teacher_forcing.
double sample_loss(ModelState& state, const PreparedInput& in, const std::vector<Behavior>& gold,
                   const LossOptions& opts, Rng& rng);

}  // namespace bnav
