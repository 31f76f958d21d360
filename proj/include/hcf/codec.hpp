#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcf/image.hpp"

namespace hcf {

// Affine analysis/synthesis pair plus quantization step for one quality
// level. Higher levels carry larger lambda and finer quant_step.
struct LevelModel {
  int level = 0;
  double lambda = 0.0;
  double quant_step = 0.0;
  Eigen::MatrixXd analysis_weight;   // M x B^2
  Eigen::VectorXd analysis_bias;     // B^2
  Eigen::MatrixXd synthesis_weight;  // B^2 x M
  Eigen::VectorXd synthesis_bias;    // B^2
};

// Contiguous bank of per-level codecs sharing patch size B and latent dim M.
struct CodecFamily {
  int patch_size = 0;   // B
  int latent_dim = 0;   // M
  int level_min = 0;
  int level_max = 0;
  std::string version;
  std::vector<LevelModel> levels;  // index: level - level_min

  const LevelModel& level(int k) const;
  LevelModel& level(int k);
  bool has_level(int k) const { return k >= level_min && k <= level_max; }

  // Checks dimensions, finiteness, lambda strictly increasing with level and
  // quant_step strictly decreasing with level. Called on load.
  void validate() const;
};

// Latent representation at one level: one M-vector per patch row. Quantized
// latents carry the step they were quantized with.
struct Latent {
  int level = 0;
  bool quantized = false;
  double quant_step = 0.0;  // > 0 iff quantized
  Eigen::MatrixXd data;     // total_rows x M
  PatchGeometry geom;
};

// y = A_k (p - a_k) per patch row; result unquantized at level k.
Latent analysis(const CodecFamily& family, int k, const PatchMatrix& patches);

// p = S_k y + s_k per latent row. No clamping here; assembly clamps.
PatchMatrix synthesis(const CodecFamily& family, int k, const Latent& latent);

// v -> step * round(v/step) with ties away from zero. Idempotent.
Latent quantize(const CodecFamily& family, int k, const Latent& latent);

// True when every entry is an integer multiple of the level step (1e-9 abs).
bool latent_on_grid(const CodecFamily& family, const Latent& latent);

// Analytic operation counts: 2*M*B^2 multiply-adds per patch plus B^2 bias
// adds, times the number of patch rows.
std::uint64_t flops_analysis(const CodecFamily& family, int k,
                             std::int64_t num_patches);
std::uint64_t flops_synthesis(const CodecFamily& family, int k,
                              std::int64_t num_patches);

// 3 ops per latent element (scale, round, rescale).
std::uint64_t flops_quantize(const CodecFamily& family,
                             std::int64_t num_patches);

}  // namespace hcf
