#include "hcf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hcf/rng.hpp"

namespace hcf {

namespace {

// Bilinear value noise on a coarse random grid.
struct NoiseGrid {
  int cells;
  std::vector<double> values;  // (cells+1)^2

  NoiseGrid(int cells, Rng& rng) : cells(cells) {
    values.resize(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (double& v : values) v = rng.next_double();
  }

  double sample(double u, double v) const {
    const double gx = u * cells;
    const double gy = v * cells;
    const int x0 = std::min(static_cast<int>(gx), cells - 1);
    const int y0 = std::min(static_cast<int>(gy), cells - 1);
    const double fx = gx - x0;
    const double fy = gy - y0;
    const auto at = [&](int x, int y) {
      return values[static_cast<std::size_t>(y) * (cells + 1) + x];
    };
    const double a = at(x0, y0) * (1 - fx) + at(x0 + 1, y0) * fx;
    const double b = at(x0, y0 + 1) * (1 - fx) + at(x0 + 1, y0 + 1) * fx;
    return a * (1 - fy) + b * fy;
  }
};

}  // namespace

ImagePlane synth_image(int width, int height, std::uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x5851f42d4c957f2dull);

  // smooth background: tilted plane plus two low-frequency cosines
  const double tilt_x = rng.uniform(-0.3, 0.3);
  const double tilt_y = rng.uniform(-0.3, 0.3);
  const double phase_x = rng.uniform(0.0, 6.28318);
  const double phase_y = rng.uniform(0.0, 6.28318);
  const double freq_x = rng.uniform(1.0, 3.0);
  const double freq_y = rng.uniform(1.0, 3.0);

  const NoiseGrid octave1(6, rng);
  const NoiseGrid octave2(13, rng);
  const NoiseGrid octave3(29, rng);

  struct Blob {
    double cx, cy, rx, ry, amp;
  };
  std::vector<Blob> blobs;
  const int n_blobs = 3 + static_cast<int>(rng.next_below(4));
  for (int i = 0; i < n_blobs; ++i)
    blobs.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                     rng.uniform(0.05, 0.25), rng.uniform(0.05, 0.25),
                     rng.uniform(-0.35, 0.35)});

  struct Rect {
    double x0, y0, x1, y1, amp;
  };
  std::vector<Rect> rects;
  const int n_rects = 2 + static_cast<int>(rng.next_below(3));
  for (int i = 0; i < n_rects; ++i) {
    const double x0 = rng.uniform(0.05, 0.75);
    const double y0 = rng.uniform(0.05, 0.75);
    rects.push_back({x0, y0, x0 + rng.uniform(0.08, 0.25),
                     y0 + rng.uniform(0.08, 0.25), rng.uniform(-0.3, 0.3)});
  }

  ImagePlane plane = ImagePlane::filled(width, height, 1, 0.0);
  for (int y = 0; y < height; ++y) {
    const double v = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      double value = 0.5 + tilt_x * (u - 0.5) + tilt_y * (v - 0.5) +
                     0.10 * std::cos(freq_x * 6.28318 * u + phase_x) +
                     0.10 * std::cos(freq_y * 6.28318 * v + phase_y);
      value += 0.16 * (octave1.sample(u, v) - 0.5) +
               0.08 * (octave2.sample(u, v) - 0.5) +
               0.04 * (octave3.sample(u, v) - 0.5);
      for (const Blob& b : blobs) {
        const double dx = (u - b.cx) / b.rx;
        const double dy = (v - b.cy) / b.ry;
        value += b.amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
      for (const Rect& r : rects)
        if (u >= r.x0 && u <= r.x1 && v >= r.y0 && v <= r.y1) value += r.amp;
      plane.at(x, y, 0) = std::clamp(value, 0.0, 1.0);
    }
  }
  return plane;
}

}  // namespace hcf
