#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcf/cascade.hpp"
#include "hcf/codec.hpp"

namespace hcf {

// Patch matrices of the training images, in the deterministic (seed-shuffled)
// order that fixes floating-point accumulation.
struct TrainingCorpus {
  std::vector<std::string> ids;          // image identifiers, shuffled order
  std::vector<PatchMatrix> patches;      // aligned with ids
  std::uint64_t seed = 0;

  std::int64_t total_rows() const;

  // Loads every .pgm/.ppm file under a directory (sorted by name, then
  // shuffled by seed) and patchifies with the given patch size. Requires at
  // least 10*M patch rows for well-posed regressions.
  static TrainingCorpus from_directory(const std::string& dir, int patch_size,
                                       int latent_dim, std::uint64_t seed);
  static TrainingCorpus from_images(std::vector<std::string> ids,
                                    const std::vector<ImagePlane>& images,
                                    int patch_size, int latent_dim,
                                    std::uint64_t seed);
};

struct RidgeConfig {
  double alpha = 1e-4;       // penalty on the weight matrix only, not the bias
  double tolerance = 1e-12;  // relative eigenvalue floor before erroring
};

// Schedules for building a fresh family: quant_step shrinks geometrically as
// the level rises, lambda grows geometrically.
struct CodecConfig {
  int patch_size = 8;
  int latent_dim = 16;
  int level_min = 1;
  int level_max = 6;
  double delta_base = 0.48;   // quant step at level_min
  double delta_ratio = 0.5;   // per +1 level
  double lambda_base = 0.01;
  double lambda_ratio = 4.0;  // lambda_k = lambda_base * lambda_ratio^k
};

// PCA-initialized family: analysis rows are the top-M principal directions of
// the training patches, scaled per level by diagonal gains
// g_i = 1/(1 + i*(s-k)/M) so adjacent-level latent spaces genuinely differ;
// synthesis starts as the exact inverse on the retained subspace.
CodecFamily init_family(const CodecConfig& config, const TrainingCorpus& corpus,
                        const std::string& version);

// Ridge regression of an affine module mapping the level-k cascade state to
// the level-(k-1) analysis target. The cascade state is produced with the
// frozen bank under the given policy context; intra modules see the
// unquantized state, inter modules its quantized form.
TransformModule fit_intra_module(const CodecFamily& family,
                                 const ModuleBank& bank, int k,
                                 const TrainingCorpus& corpus,
                                 const PolicyVector& policy_context,
                                 const RidgeConfig& cfg);
TransformModule fit_inter_module(const CodecFamily& family,
                                 const ModuleBank& bank, int k,
                                 const TrainingCorpus& corpus,
                                 const PolicyVector& policy_context,
                                 const RidgeConfig& cfg);

// Least-squares refit of the level-k synthesis transform on the quantized
// cascade outputs. The rate term does not depend on the synthesis weights, so
// the rate-distortion objective reduces to plain distortion here.
LevelModel finetune_synthesis(const CodecFamily& family, const ModuleBank& bank,
                              int k, const TrainingCorpus& corpus,
                              const PolicyVector& policy,
                              const RidgeConfig& cfg);

// Mean squared pixel error of the level-k synthesis on the corpus under the
// cascade context; used by reports and tests.
double corpus_synthesis_mse(const CodecFamily& family, const ModuleBank& bank,
                            int k, const TrainingCorpus& corpus,
                            const PolicyVector& policy);

struct TrainingReport {
  struct LevelRow {
    int level = 0;
    double intra_residual = 0.0;    // mean squared regression residual
    double inter_residual = 0.0;
    double mse_before_refit = 0.0;  // corpus pixel MSE at this level
    double mse_after_refit = 0.0;
  };
  std::vector<LevelRow> rows;  // descending level
};

// Two sequential phases: fit both module kinds for k = s..d+1, then refit
// synthesis for k = s..d. Deterministic given the corpus order.
TrainingReport train_all(CodecFamily& family, ModuleBank& bank,
                         const TrainingCorpus& corpus,
                         const PolicyVector& policy, const RidgeConfig& cfg);

// Cascade state at level k for one patch matrix under the frozen bank
// (training-time view; no coder in the loop).
Latent cascade_state(const CodecFamily& family, const ModuleBank& bank, int k,
                     const PatchMatrix& patches, const PolicyVector& policy);

}  // namespace hcf
