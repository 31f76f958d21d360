#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hcf/cascade.hpp"
#include "hcf/image.hpp"

namespace hcf {

// One evaluation point: bits per pixel against quality. MS-SSIM is carried in
// dB form, -10*log10(1 - value).
struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim_db = 0.0;
};

enum class MetricAxis { kPsnr, kMsssimDb };

// Rate-distortion curve with strictly increasing bpp.
struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;

  // Sorts by bpp and checks strict monotonicity.
  static RDCurve make(std::string label, std::vector<RDPoint> points);
};

// Per-level differential entropy trajectory of one policy.
struct EntropyTraceEntry {
  int level = 0;
  bool quantization_point = false;
  double pre_bits = 0.0;
  std::optional<double> post_bits;   // only at quantization points
  std::optional<double> increment;   // post - pre
};

struct EntropyTrace {
  std::string policy;
  std::vector<EntropyTraceEntry> entries;  // descending level
};

// 10*log10(1/MSE) on [0,1] samples, capped at 100 dB. Symmetric in its
// arguments.
double psnr(const ImagePlane& reference, const ImagePlane& test);

// 5-scale MS-SSIM (weights 0.0448/0.2856/0.3001/0.2363/0.1333, 11x11
// Gaussian window, sigma 1.5), reduced scale count on small images, reported
// as -10*log10(1-value) capped at 100 dB. Not symmetric; pass the reference
// first. Channels are averaged in the linear domain.
double msssim_db(const ImagePlane& reference, const ImagePlane& test);
double msssim_linear(const ImagePlane& reference, const ImagePlane& test);

// Quality/rate states feeding one RQSI evaluation: the policy under test at
// the destination level, the two reference policies at the level above it.
struct RqsiInputs {
  double metric_at_d = 0.0;        // M(x, x_hat^d) under the tested policy
  double rate_at_d = 0.0;          // R(y_hat^d), bits
  double metric_minimal_d1 = 0.0;  // references at level d+1
  double rate_minimal_d1 = 0.0;
  double metric_maximal_d1 = 0.0;
  double rate_maximal_d1 = 0.0;
};

// Rate-quality sensitivity index: the average of the two reference slopes.
// Lower is better.
double rqsi(const RqsiInputs& in, double epsilon = 1e-6);

// Probe-record convenience: extracts the states from cascade probes. The
// probes of the tested policy must contain its destination level; both
// reference probe sets must contain the level above (or the destination
// itself in the degenerate single-level case).
double rqsi_from_probes(MetricAxis metric, const ImagePlane& original,
                        const std::vector<ProbeRecord>& policy_probes,
                        const std::vector<ProbeRecord>& minimal_probes,
                        const std::vector<ProbeRecord>& maximal_probes,
                        int dest_level, double epsilon = 1e-6);

// Classic Bjontegaard delta rate: polynomial fit of log10(bpp) over the
// metric, integrated over the overlapping metric range; returns percent.
// Curves need at least 3 points (quadratic fit); 4+ use the cubic fit.
double bd_rate(const RDCurve& reference, const RDCurve& test, MetricAxis axis);

// Dual form: metric over log10(bpp); returns the mean quality difference.
double bd_quality(const RDCurve& reference, const RDCurve& test,
                  MetricAxis axis);

// Kozachenko-Leonenko k-nearest-neighbor differential entropy in bits.
// Optional uniform jitter U(-amplitude, amplitude) breaks exact ties
// (quantized inputs); the seed makes it reproducible.
double kl_entropy(const std::vector<double>& samples, int k,
                  double jitter_amplitude = 0.0, std::uint64_t seed = 0);
double kl_entropy(const Eigen::MatrixXd& samples, int k,
                  double jitter_amplitude = 0.0, std::uint64_t seed = 0);

// Per-level entropy of latent snapshots: per-channel scalar estimates summed
// over channels, k=3, jitter amplitude step/2 * 1e-3 at each level. Probes
// must cover every level of the policy span.
EntropyTrace entropy_trace(const std::vector<ProbeRecord>& probes,
                           const PolicyVector& policy, std::uint64_t seed = 0);

double digamma(double x);

}  // namespace hcf
