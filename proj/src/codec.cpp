#include "hcf/codec.hpp"

#include <cmath>

#include "hcf/errors.hpp"

namespace hcf {

const LevelModel& CodecFamily::level(int k) const {
  if (!has_level(k))
    throw DataError("level " + std::to_string(k) + " outside family range [" +
                    std::to_string(level_min) + "," +
                    std::to_string(level_max) + "]");
  return levels[static_cast<std::size_t>(k - level_min)];
}

LevelModel& CodecFamily::level(int k) {
  return const_cast<LevelModel&>(
      static_cast<const CodecFamily*>(this)->level(k));
}

void CodecFamily::validate() const {
  if (patch_size < 1 || latent_dim < 1)
    throw DataError("codec family: bad dimensions");
  if (level_max < level_min ||
      levels.size() != static_cast<std::size_t>(level_max - level_min + 1))
    throw DataError("codec family: level range not contiguous");
  const int b2 = patch_size * patch_size;
  for (const LevelModel& m : levels) {
    if (m.analysis_weight.rows() != latent_dim ||
        m.analysis_weight.cols() != b2 || m.analysis_bias.size() != b2 ||
        m.synthesis_weight.rows() != b2 ||
        m.synthesis_weight.cols() != latent_dim ||
        m.synthesis_bias.size() != b2)
      throw DataError("codec family: matrix shapes do not match B/M at level " +
                      std::to_string(m.level));
    if (!(m.quant_step > 0.0) || !std::isfinite(m.quant_step) ||
        !(m.lambda > 0.0) || !std::isfinite(m.lambda))
      throw DataError("codec family: non-positive lambda or quant step");
    if (!m.analysis_weight.allFinite() || !m.analysis_bias.allFinite() ||
        !m.synthesis_weight.allFinite() || !m.synthesis_bias.allFinite())
      throw DataError("codec family: non-finite transform entries");
  }
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i].lambda > levels[i - 1].lambda))
      throw DataError("codec family: lambda must strictly increase with level");
    if (!(levels[i].quant_step < levels[i - 1].quant_step))
      throw DataError(
          "codec family: quant step must strictly decrease with level");
  }
}

Latent analysis(const CodecFamily& family, int k, const PatchMatrix& patches) {
  const LevelModel& m = family.level(k);
  Latent latent;
  latent.level = k;
  latent.quantized = false;
  latent.geom = patches.geom;
  latent.data = (patches.rows.rowwise() - m.analysis_bias.transpose()) *
                m.analysis_weight.transpose();
  return latent;
}

PatchMatrix synthesis(const CodecFamily& family, int k, const Latent& latent) {
  if (latent.level != k)
    throw DataError("synthesis: latent level " + std::to_string(latent.level) +
                    " does not match requested level " + std::to_string(k));
  const LevelModel& m = family.level(k);
  PatchMatrix patches;
  patches.geom = latent.geom;
  patches.rows = latent.data * m.synthesis_weight.transpose();
  patches.rows.rowwise() += m.synthesis_bias.transpose();
  return patches;
}

Latent quantize(const CodecFamily& family, int k, const Latent& latent) {
  if (latent.level != k)
    throw DataError("quantize: latent level mismatch");
  const double step = family.level(k).quant_step;
  Latent out = latent;
  out.quantized = true;
  out.quant_step = step;
  double* p = out.data.data();
  const std::ptrdiff_t n = out.data.size();
  for (std::ptrdiff_t i = 0; i < n; ++i)
    p[i] = step * std::round(p[i] / step);  // round halves away from zero
  return out;
}

bool latent_on_grid(const CodecFamily& family, const Latent& latent) {
  const double step = family.level(latent.level).quant_step;
  const double* p = latent.data.data();
  for (std::ptrdiff_t i = 0; i < latent.data.size(); ++i)
    if (std::abs(p[i] - step * std::round(p[i] / step)) > 1e-9) return false;
  return true;
}

std::uint64_t flops_analysis(const CodecFamily& family, int k,
                             std::int64_t num_patches) {
  family.level(k);  // range check
  const std::uint64_t b2 =
      static_cast<std::uint64_t>(family.patch_size) * family.patch_size;
  return static_cast<std::uint64_t>(num_patches) *
         (2ull * family.latent_dim * b2 + b2);
}

std::uint64_t flops_synthesis(const CodecFamily& family, int k,
                              std::int64_t num_patches) {
  return flops_analysis(family, k, num_patches);
}

std::uint64_t flops_quantize(const CodecFamily& family,
                             std::int64_t num_patches) {
  return static_cast<std::uint64_t>(num_patches) * 3ull * family.latent_dim;
}

}  // namespace hcf
