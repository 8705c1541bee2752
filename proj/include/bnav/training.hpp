#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "bnav/translator.hpp"
#include "bnav/world_gen.hpp"

namespace bnav {

struct EpochRecord {
  int epoch = 0;
  double teacher_forcing = 1.0;
  double loss = 0.0;                 ///< summed over the fit samples
  std::vector<double> batch_losses;
  double val_em = -1.0;              ///< -1 without a validation set
  double val_gm = -1.0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  std::size_t n_fit = 0, n_val = 0;

  /// `epoch,teacher_forcing,loss,val_em,val_gm` rows.
  std::string to_csv() const;
};

struct TrainOptions {
  std::string checkpoint_dir;        ///< writes last.ckpt and best.ckpt when set
  bool resume = false;               ///< continue from checkpoint_dir/last.ckpt if present
  int max_epochs_this_run = -1;      ///< stop early (the checkpoint stays resumable)
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Linear from tf_start at the first epoch to tf_end at the last; always 1
/// for the baseline or when scheduled sampling is off.
double teacher_forcing_at(const ModelConfig& cfg, int epoch);

struct ValidationSplit {
  std::vector<std::size_t> fit, val;
};

/// round(fraction * n) samples held out, chosen by a seeded shuffle; both
/// lists come back sorted.
ValidationSplit split_validation(std::size_t n, double fraction, std::uint64_t seed);

/// Adam on summed cross-entropy, one step per batch. On return the state holds
/// the parameters of the best validation epoch (GM, then EM), or the final
/// ones without a validation set. Throws EmptyDataset.
TrainingReport train(ModelState& state, const DatasetSplit& split, const TrainOptions& opts = {});

}  // namespace bnav
