#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcf/config.hpp"
#include "hcf/model_io.hpp"
#include "hcf/simulator.hpp"

namespace hcf {

struct CommandContext {
  ExperimentConfig config;
  std::string model_path;   // written by train, read by the others
  std::string out_dir;      // reports land here
  std::uint64_t seed = 0;   // entropy jitter + training seed override
  bool seed_overridden = false;
  int jobs = 0;             // 0 = hardware concurrency
};

// Named corpus images, sorted by filename.
struct EvalCorpus {
  std::vector<std::string> ids;
  std::vector<ImagePlane> images;
};
EvalCorpus load_eval_corpus(const std::string& dir);

// Runs fn over [0, count) on a bounded worker pool; results keep index order.
void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& fn);

struct SweepRow {
  int nq = 0;
  int target_level = 0;
  std::string policy;
  bool is_edge = false;
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim_db = 0.0;
  double eta_psnr = 0.0;
  double eta_msssim = 0.0;
  bool rqsi_min_psnr = false;
  bool rqsi_min_msssim = false;
};

struct AdaptRow {
  int shorter_source = 0;
  int longer_source = 0;
  int target_level = 0;
  double bd_rate_psnr = 0.0;
  double bd_rate_msssim = 0.0;
};

struct AblateRow {
  std::string variant;
  int level = 0;
  RDPoint rd;
};

struct EntropyRow {
  int nq = 0;
  int target_level = 0;
  std::string policy;
  int level = 0;
  bool quantization_point = false;
  double pre_bits = 0.0;
  double post_bits = 0.0;   // valid only at quantization points
  double increment = 0.0;   // valid only at quantization points
};

struct BdRow {
  int target_level = 0;
  std::string framework;  // compared against hcf
  double bd_rate_psnr = 0.0;
  double bd_rate_msssim = 0.0;
  double bd_psnr = 0.0;
  double bd_msssim = 0.0;
};

// train: fit the model, write the HCF1 container and the residual report.
TrainingReport cmd_train(const CommandContext& ctx);

// sweep: every policy in the configured spaces, Table-1-shaped output.
std::vector<SweepRow> cmd_sweep(const CommandContext& ctx);

struct CompareOutput {
  FrameworkComparison comparison;
  std::vector<BdRow> bd_rows;
};
CompareOutput cmd_compare(const CommandContext& ctx);

std::vector<AdaptRow> cmd_adapt(const CommandContext& ctx);

struct AblateOutput {
  std::vector<AblateRow> rows;
  // complete-vs-variant domination counts on the PSNR axis
  struct Summary {
    std::string variant;
    int points = 0;
    int dominated_or_tied = 0;
  };
  std::vector<Summary> summaries;
};
AblateOutput cmd_ablate(const CommandContext& ctx);

std::vector<EntropyRow> cmd_entropy(const CommandContext& ctx);

}  // namespace hcf
