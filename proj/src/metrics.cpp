#include "hcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hcf/errors.hpp"
#include "hcf/rng.hpp"

namespace hcf {

namespace {

constexpr double kDbCap = 100.0;

double capped_db_from_mse(double mse) {
  if (mse <= 0.0) return kDbCap;
  return std::min(kDbCap, 10.0 * std::log10(1.0 / mse));
}

// ---- MS-SSIM machinery ----------------------------------------------------

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;
constexpr int kMaxScales = 5;
constexpr double kScaleWeights[kMaxScales] = {0.0448, 0.2856, 0.3001, 0.2363,
                                              0.1333};

struct Channel {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
};

Channel extract_channel(const ImagePlane& plane, int c) {
  Channel ch;
  ch.width = plane.width;
  ch.height = plane.height;
  ch.v.resize(static_cast<std::size_t>(plane.width) * plane.height);
  for (int y = 0; y < plane.height; ++y)
    for (int x = 0; x < plane.width; ++x) ch.at(x, y) = plane.at(x, y, c);
  return ch;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& x : k) x /= sum;
  return k;
}

// Separable valid-mode Gaussian filter; output is (w-10) x (h-10).
Channel filter_valid(const Channel& in, const std::vector<double>& kernel) {
  Channel horiz;
  horiz.width = in.width - kWindow + 1;
  horiz.height = in.height;
  horiz.v.resize(static_cast<std::size_t>(horiz.width) * horiz.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < horiz.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i)
        acc += kernel[static_cast<std::size_t>(i)] * in.at(x + i, y);
      horiz.at(x, y) = acc;
    }
  }
  Channel out;
  out.width = horiz.width;
  out.height = in.height - kWindow + 1;
  out.v.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i)
        acc += kernel[static_cast<std::size_t>(i)] * horiz.at(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// 2x2 block mean then stride-2 subsample; odd edges use the available pixels,
// so the output dimension is ceil(n/2).
Channel downsample2(const Channel& in) {
  Channel out;
  out.width = (in.width + 1) / 2;
  out.height = (in.height + 1) / 2;
  out.v.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx < in.width && sy < in.height) {
            acc += in.at(sx, sy);
            ++n;
          }
        }
      }
      out.at(x, y) = acc / n;
    }
  }
  return out;
}

// Mean luminance*cs and mean cs terms of the SSIM map at one scale.
void ssim_terms(const Channel& a, const Channel& b, double* mean_lcs,
                double* mean_cs) {
  static const std::vector<double> kernel = gaussian_kernel();
  const Channel mu_a = filter_valid(a, kernel);
  const Channel mu_b = filter_valid(b, kernel);

  Channel aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Channel m_aa = filter_valid(aa, kernel);
  const Channel m_bb = filter_valid(bb, kernel);
  const Channel m_ab = filter_valid(ab, kernel);

  double lcs_acc = 0.0;
  double cs_acc = 0.0;
  const std::size_t n = mu_a.v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a.v[i];
    const double mb = mu_b.v[i];
    const double var_a = m_aa.v[i] - ma * ma;
    const double var_b = m_bb.v[i] - mb * mb;
    const double cov = m_ab.v[i] - ma * mb;
    const double l = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
    const double cs = (2.0 * cov + kC2) / (var_a + var_b + kC2);
    lcs_acc += l * cs;
    cs_acc += cs;
  }
  *mean_lcs = lcs_acc / static_cast<double>(n);
  *mean_cs = cs_acc / static_cast<double>(n);
}

int usable_scales(int width, int height) {
  int scales = 0;
  int w = width;
  int h = height;
  while (scales < kMaxScales && std::min(w, h) >= kWindow) {
    ++scales;
    w = (w + 1) / 2;
    h = (h + 1) / 2;
  }
  return scales;
}

double msssim_channel(Channel a, Channel b) {
  const int scales = usable_scales(a.width, a.height);
  if (scales == 0)
    throw DataError("msssim: image smaller than the 11x11 analysis window");
  double weight_sum = 0.0;
  for (int j = 0; j < scales; ++j) weight_sum += kScaleWeights[j];

  double value = 1.0;
  for (int j = 0; j < scales; ++j) {
    double mean_lcs = 0.0;
    double mean_cs = 0.0;
    ssim_terms(a, b, &mean_lcs, &mean_cs);
    const double w = kScaleWeights[j] / weight_sum;
    const double term = j == scales - 1 ? mean_lcs : mean_cs;
    value *= std::pow(std::max(term, 0.0), w);
    if (j + 1 < scales) {
      a = downsample2(a);
      b = downsample2(b);
    }
  }
  return value;
}

void require_same_geometry(const ImagePlane& a, const ImagePlane& b,
                           const char* op) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw DataError(std::string(op) + ": image geometry mismatch");
}

// ---- Bjontegaard fitting --------------------------------------------------

struct PolyFit {
  double shift = 0.0;              // abscissa offset used for conditioning
  std::vector<double> coeff;       // c0 + c1 t + c2 t^2 (+ c3 t^3), t = x-shift

  double integral(double lo, double hi) const {
    // antiderivative in t evaluated at the shifted bounds
    const double a = lo - shift;
    const double b = hi - shift;
    double acc = 0.0;
    for (std::size_t p = 0; p < coeff.size(); ++p) {
      const double e = static_cast<double>(p) + 1.0;
      acc += coeff[p] / e * (std::pow(b, e) - std::pow(a, e));
    }
    return acc;
  }
};

PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  const int order = n >= 4 ? 3 : 2;  // cubic; quadratic fallback at 3 points
  PolyFit fit;
  fit.shift = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), order + 1);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = x[i] - fit.shift;
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      design(static_cast<Eigen::Index>(i), j) = p;
      p *= t;
    }
    rhs(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::VectorXd c =
      design.colPivHouseholderQr().solve(rhs);
  fit.coeff.assign(c.data(), c.data() + c.size());
  return fit;
}

double axis_value(const RDPoint& p, MetricAxis axis) {
  return axis == MetricAxis::kPsnr ? p.psnr : p.msssim_db;
}

void check_curve(const RDCurve& curve) {
  if (curve.points.size() < 3)
    throw DataError("bd metrics: curve '" + curve.label +
                    "' needs at least 3 points");
}

struct BdSeries {
  std::vector<double> metric;
  std::vector<double> log_rate;
};

BdSeries series_of(const RDCurve& curve, MetricAxis axis) {
  BdSeries s;
  for (const RDPoint& p : curve.points) {
    if (!(p.bpp > 0.0))
      throw DataError("bd metrics: non-positive bpp in curve " + curve.label);
    s.metric.push_back(axis_value(p, axis));
    s.log_rate.push_back(std::log10(p.bpp));
  }
  return s;
}

// ---- entropy estimation ---------------------------------------------------

double log_unit_ball_volume(int dim) {
  // V_d = pi^(d/2) / Gamma(d/2 + 1)
  return 0.5 * dim * std::log(M_PI) - std::lgamma(0.5 * dim + 1.0);
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0)) throw NumericError("digamma: requires x > 0");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli series through 1/x^10; error < 1e-13 for x >= 10
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 -
                 inv2 * (1.0 / 120.0 -
                         inv2 * (1.0 / 252.0 -
                                 inv2 * (1.0 / 240.0 - inv2 / 132.0))));
}

RDCurve RDCurve::make(std::string label, std::vector<RDPoint> points) {
  std::sort(points.begin(), points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].bpp > points[i - 1].bpp))
      throw DataError("rd curve '" + label + "': bpp not strictly increasing");
  RDCurve c;
  c.label = std::move(label);
  c.points = std::move(points);
  return c;
}

double psnr(const ImagePlane& reference, const ImagePlane& test) {
  require_same_geometry(reference, test, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double d = reference.samples[i] - test.samples[i];
    acc += d * d;
  }
  return capped_db_from_mse(acc / static_cast<double>(reference.samples.size()));
}

double msssim_linear(const ImagePlane& reference, const ImagePlane& test) {
  require_same_geometry(reference, test, "msssim");
  double acc = 0.0;
  for (int c = 0; c < reference.channels; ++c)
    acc += msssim_channel(extract_channel(reference, c),
                          extract_channel(test, c));
  return acc / reference.channels;
}

double msssim_db(const ImagePlane& reference, const ImagePlane& test) {
  const double v = msssim_linear(reference, test);
  if (v >= 1.0) return kDbCap;
  return std::min(kDbCap, -10.0 * std::log10(1.0 - v));
}

double rqsi(const RqsiInputs& in, double epsilon) {
  const auto rqs = [&](double metric_ref, double rate_ref) {
    const double num = std::abs(metric_ref - in.metric_at_d);
    const double den = std::max(std::abs(rate_ref - in.rate_at_d), epsilon);
    return num / den;
  };
  return 0.5 * (rqs(in.metric_minimal_d1, in.rate_minimal_d1) +
                rqs(in.metric_maximal_d1, in.rate_maximal_d1));
}

namespace {

const ProbeRecord& probe_at(const std::vector<ProbeRecord>& probes, int level,
                            const char* who) {
  for (const ProbeRecord& p : probes)
    if (p.level == level) return p;
  throw DataError(std::string("rqsi: missing probe at level ") +
                  std::to_string(level) + " for " + who);
}

}  // namespace

double rqsi_from_probes(MetricAxis metric, const ImagePlane& original,
                        const std::vector<ProbeRecord>& policy_probes,
                        const std::vector<ProbeRecord>& minimal_probes,
                        const std::vector<ProbeRecord>& maximal_probes,
                        int dest_level, double epsilon) {
  const auto eval = [&](const ImagePlane& recon) {
    return metric == MetricAxis::kPsnr ? psnr(original, recon)
                                       : msssim_db(original, recon);
  };
  // In the degenerate single-level cascade the level above the destination
  // does not exist and the references coincide with the destination state.
  const ProbeRecord& at_d = probe_at(policy_probes, dest_level, "policy");
  const int ref_level = [&] {
    for (const ProbeRecord& p : minimal_probes)
      if (p.level == dest_level + 1) return dest_level + 1;
    return dest_level;
  }();
  const ProbeRecord& ref_min = probe_at(minimal_probes, ref_level, "pi_min");
  const ProbeRecord& ref_max = probe_at(maximal_probes, ref_level, "pi_max");

  RqsiInputs in;
  in.metric_at_d = eval(at_d.reconstruction);
  in.rate_at_d = at_d.rate_bits;
  in.metric_minimal_d1 = eval(ref_min.reconstruction);
  in.rate_minimal_d1 = ref_min.rate_bits;
  in.metric_maximal_d1 = eval(ref_max.reconstruction);
  in.rate_maximal_d1 = ref_max.rate_bits;
  return rqsi(in, epsilon);
}

double bd_rate(const RDCurve& reference, const RDCurve& test,
               MetricAxis axis) {
  check_curve(reference);
  check_curve(test);
  const BdSeries ref = series_of(reference, axis);
  const BdSeries tst = series_of(test, axis);
  const double lo =
      std::max(*std::min_element(ref.metric.begin(), ref.metric.end()),
               *std::min_element(tst.metric.begin(), tst.metric.end()));
  const double hi =
      std::min(*std::max_element(ref.metric.begin(), ref.metric.end()),
               *std::max_element(tst.metric.begin(), tst.metric.end()));
  if (!(hi > lo))
    throw DataError("bd_rate: curves do not overlap in the metric range");
  const PolyFit fit_ref = polyfit(ref.metric, ref.log_rate);
  const PolyFit fit_tst = polyfit(tst.metric, tst.log_rate);
  const double delta =
      (fit_tst.integral(lo, hi) - fit_ref.integral(lo, hi)) / (hi - lo);
  return 100.0 * (std::pow(10.0, delta) - 1.0);
}

double bd_quality(const RDCurve& reference, const RDCurve& test,
                  MetricAxis axis) {
  check_curve(reference);
  check_curve(test);
  const BdSeries ref = series_of(reference, axis);
  const BdSeries tst = series_of(test, axis);
  const double lo =
      std::max(*std::min_element(ref.log_rate.begin(), ref.log_rate.end()),
               *std::min_element(tst.log_rate.begin(), tst.log_rate.end()));
  const double hi =
      std::min(*std::max_element(ref.log_rate.begin(), ref.log_rate.end()),
               *std::max_element(tst.log_rate.begin(), tst.log_rate.end()));
  if (!(hi > lo))
    throw DataError("bd_quality: curves do not overlap in the rate range");
  const PolyFit fit_ref = polyfit(ref.log_rate, ref.metric);
  const PolyFit fit_tst = polyfit(tst.log_rate, tst.metric);
  return (fit_tst.integral(lo, hi) - fit_ref.integral(lo, hi)) / (hi - lo);
}

double kl_entropy(const std::vector<double>& samples, int k,
                  double jitter_amplitude, std::uint64_t seed) {
  const int n = static_cast<int>(samples.size());
  if (n < k + 1)
    throw DataError("kl_entropy: needs at least k+1 samples");
  std::vector<double> x = samples;
  if (jitter_amplitude > 0.0) {
    Rng rng(seed);
    for (double& v : x) v += rng.uniform(-jitter_amplitude, jitter_amplitude);
  }
  std::sort(x.begin(), x.end());

  // k-th nearest neighbor on a line: candidates live in the sorted window
  // around each sample.
  double log_acc = 0.0;
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(2 * k));
  for (int i = 0; i < n; ++i) {
    dist.clear();
    for (int j = std::max(0, i - k); j <= std::min(n - 1, i + k); ++j)
      if (j != i) dist.push_back(std::abs(x[j] - x[i]));
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    const double eps = dist[static_cast<std::size_t>(k - 1)];
    if (!(eps > 0.0))
      throw NumericError(
          "kl_entropy: tied samples produce a zero neighbor distance; "
          "use a jitter amplitude > 0");
    log_acc += std::log(eps);
  }
  const double nats = digamma(n) - digamma(k) + std::log(2.0) +
                      log_acc / static_cast<double>(n);
  return nats / std::log(2.0);
}

double kl_entropy(const Eigen::MatrixXd& samples, int k,
                  double jitter_amplitude, std::uint64_t seed) {
  const int n = static_cast<int>(samples.rows());
  const int dim = static_cast<int>(samples.cols());
  if (n < k + 1)
    throw DataError("kl_entropy: needs at least k+1 samples");
  if (dim == 1) {
    std::vector<double> x(samples.data(), samples.data() + n);
    return kl_entropy(x, k, jitter_amplitude, seed);
  }
  Eigen::MatrixXd x = samples;
  if (jitter_amplitude > 0.0) {
    Rng rng(seed);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x.data()[i] += rng.uniform(-jitter_amplitude, jitter_amplitude);
  }
  double log_acc = 0.0;
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      d2[static_cast<std::size_t>(j)] =
          j == i ? std::numeric_limits<double>::infinity()
                 : (x.row(i) - x.row(j)).squaredNorm();
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    const double eps = std::sqrt(d2[static_cast<std::size_t>(k - 1)]);
    if (!(eps > 0.0))
      throw NumericError(
          "kl_entropy: tied samples produce a zero neighbor distance; "
          "use a jitter amplitude > 0");
    log_acc += std::log(eps);
  }
  const double nats = digamma(n) - digamma(k) + log_unit_ball_volume(dim) +
                      dim * log_acc / static_cast<double>(n);
  return nats / std::log(2.0);
}

EntropyTrace entropy_trace(const std::vector<ProbeRecord>& probes,
                           const PolicyVector& policy, std::uint64_t seed) {
  constexpr int kNeighbors = 3;
  EntropyTrace trace;
  trace.policy = policy.to_string();
  for (int level = policy.source_level; level >= policy.dest_level; --level) {
    const ProbeRecord* probe = nullptr;
    for (const ProbeRecord& p : probes)
      if (p.level == level) probe = &p;
    if (probe == nullptr)
      throw DataError("entropy_trace: probes must cover level " +
                      std::to_string(level));

    // Jitter breaks exact ties; the same amplitude is applied to the
    // continuous snapshot so the increment compares like against like.
    const double amp = probe->post.quant_step * 0.5 * 1e-3;
    const auto channel_sum = [&](const Latent& latent) {
      double bits = 0.0;
      for (Eigen::Index c = 0; c < latent.data.cols(); ++c) {
        std::vector<double> col(latent.data.rows());
        for (Eigen::Index r = 0; r < latent.data.rows(); ++r)
          col[static_cast<std::size_t>(r)] = latent.data(r, c);
        bits += kl_entropy(col, kNeighbors, amp,
                           seed + static_cast<std::uint64_t>(c) * 7919u +
                               static_cast<std::uint64_t>(level) * 104729u);
      }
      return bits;
    };

    EntropyTraceEntry entry;
    entry.level = level;
    entry.quantization_point = policy.quantizes_at(level);
    entry.pre_bits = channel_sum(probe->pre);
    if (entry.quantization_point) {
      entry.post_bits = channel_sum(probe->post);
      entry.increment = *entry.post_bits - entry.pre_bits;
    }
    trace.entries.push_back(entry);
  }
  return trace;
}

}  // namespace hcf
