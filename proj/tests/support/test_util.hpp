#pragma once

#include <vector>

#include "hcf/cascade.hpp"
#include "hcf/codec.hpp"
#include "hcf/image.hpp"
#include "hcf/rng.hpp"

namespace hcf::test {

// Family with explicit transforms at every level: analysis rows are scaled
// unit rows, synthesis the matching inverse, so analysis/synthesis are exact
// inverses on the retained subspace.
inline CodecFamily make_family(int patch_size, int latent_dim, int level_min,
                               int level_max, double delta_base = 0.48,
                               double delta_ratio = 0.5,
                               const std::string& version = "test") {
  CodecFamily family;
  family.patch_size = patch_size;
  family.latent_dim = latent_dim;
  family.level_min = level_min;
  family.level_max = level_max;
  family.version = version;
  const int b2 = patch_size * patch_size;
  for (int k = level_min; k <= level_max; ++k) {
    LevelModel m;
    m.level = k;
    m.lambda = 0.01 * std::pow(4.0, k);
    m.quant_step = delta_base * std::pow(delta_ratio, k - level_min);
    m.analysis_weight = Eigen::MatrixXd::Zero(latent_dim, b2);
    for (int i = 0; i < latent_dim; ++i) m.analysis_weight(i, i % b2) = 1.0;
    m.analysis_bias = Eigen::VectorXd::Zero(b2);
    m.synthesis_weight = m.analysis_weight.transpose();
    m.synthesis_bias = Eigen::VectorXd::Zero(b2);
    family.levels.push_back(std::move(m));
  }
  return family;
}

// Identity modules of both kinds for every level pair in the family.
inline ModuleBank identity_bank(const CodecFamily& family) {
  ModuleBank bank;
  for (int k = family.level_min + 1; k <= family.level_max; ++k) {
    for (auto kind :
         {TransformModule::Kind::kInter, TransformModule::Kind::kIntra}) {
      TransformModule m;
      m.kind = kind;
      m.from_level = k;
      m.to_level = k - 1;
      m.weight = Eigen::MatrixXd::Identity(family.latent_dim, family.latent_dim);
      m.bias = Eigen::VectorXd::Zero(family.latent_dim);
      bank.put(std::move(m));
    }
  }
  return bank;
}

inline ImagePlane random_plane(int width, int height, int channels,
                               std::uint64_t seed) {
  ImagePlane p = ImagePlane::filled(width, height, channels, 0.0);
  Rng rng(seed);
  for (double& v : p.samples) v = rng.next_double();
  return p;
}

inline Latent make_latent(int level, double step, const Eigen::MatrixXd& data,
                          bool quantized) {
  Latent latent;
  latent.level = level;
  latent.quantized = quantized;
  latent.quant_step = quantized ? step : 0.0;
  latent.data = data;
  latent.geom.width = static_cast<int>(data.rows());
  latent.geom.height = 1;
  latent.geom.channels = 1;
  latent.geom.patch_size = 1;
  latent.geom.padded_width = static_cast<int>(data.rows());
  latent.geom.padded_height = 1;
  return latent;
}

}  // namespace hcf::test
