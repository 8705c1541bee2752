#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "bnav/run_config.hpp"
#include "bnav/translator.hpp"

namespace bnav {

/// Each command writes into out_dir (created if needed) and finishes with
/// out_dir/run.manifest. Errors are thrown; run_cli maps them to exit codes.
void cmd_gen(const RunConfig& rc, const std::string& out_dir, std::ostream& log);
void cmd_train(const RunConfig& rc, const std::string& out_dir, std::ostream& log);
void cmd_eval(const RunConfig& rc, const std::string& out_dir, std::ostream& log);
void cmd_predict(const RunConfig& rc, const std::string& out_dir, std::ostream& log);

/// Loads the checkpoint named by rc and rejects explicitly configured
/// architecture keys that disagree with it.
ModelState load_model_for(const RunConfig& rc);

/// Rows are trace.triplets (or words for the ablation variants), columns are
/// decode steps.
std::string attention_csv(const DecodeTrace& trace);
/// Binary PGM, each column scaled to [0, 1] by its maximum; `cell` pixels per
/// entry.
std::string attention_pgm(const DecodeTrace& trace, int cell = 8);

/// Manifest with the command, config hash, seed and FNV-1a checksums of the
/// given files (paths relative to out_dir).
void write_run_manifest(const std::string& out_dir, const std::string& command, const RunConfig& rc,
                        const std::vector<std::string>& artifacts);

/// Exit codes: 0 success, 1 validation error, 2 IO error.
int run_cli(int argc, char** argv);

}  // namespace bnav
