#pragma once

#include <cstdint>

#include "hcf/image.hpp"

namespace hcf {

// Deterministic synthetic grayscale test image: smooth gradients, soft blobs,
// a few hard-edged rectangles and multi-octave value noise. Spatially
// correlated enough to behave like natural content under transform coding.
ImagePlane synth_image(int width, int height, std::uint64_t seed);

}  // namespace hcf
