#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hcf {

// Image held as real samples in [0,1], row-major, channel-interleaved.
// On disk this is binary PGM (P5, 1 channel) or PPM (P6, 3 channels) with
// maxval 255; samples are scaled by 1/255 on load.
struct ImagePlane {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> samples;  // width*height*channels

  double& at(int x, int y, int c) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  static ImagePlane filled(int width, int height, int channels, double value);

  // Checks dimensions, sample count and the [0,1] range.
  void validate() const;
};

// Geometry needed to reassemble an image from patch rows.
struct PatchGeometry {
  int width = 0;
  int height = 0;
  int channels = 1;
  int patch_size = 0;
  int padded_width = 0;
  int padded_height = 0;

  int patches_x() const { return padded_width / patch_size; }
  int patches_y() const { return padded_height / patch_size; }
  int patches_per_channel() const { return patches_x() * patches_y(); }
  int total_rows() const { return patches_per_channel() * channels; }

  bool operator==(const PatchGeometry&) const = default;
};

// Non-overlapping BxB blocks, each flattened row-major into one row.
// Channels are processed independently and concatenated in channel order.
struct PatchMatrix {
  PatchGeometry geom;
  Eigen::MatrixXd rows;  // total_rows x patch_size^2
};

// Decode a binary PGM/PPM payload. Throws ParseError naming the byte offset
// on malformed headers, unsupported maxval, or truncated payloads.
ImagePlane decode_netpbm(const std::vector<std::uint8_t>& bytes);

// Canonical encoding: "P5\n<w> <h>\n255\n" + payload, samples stored as
// round(255*clamp(v,0,1)) with round-half-up.
std::vector<std::uint8_t> encode_netpbm(const ImagePlane& plane);

ImagePlane load_image(const std::string& path);
void save_image(const ImagePlane& plane, const std::string& path);

// Edge-replicate pads the plane to multiples of the patch size, then splits
// it into flattened blocks. Exact inverse pair with unpatchify.
PatchMatrix patchify(const ImagePlane& plane, int patch_size);

// Inverse of patchify; crops padding back to the original geometry and clamps
// samples to [0,1] (final image assembly).
ImagePlane unpatchify(const PatchMatrix& patches);

}  // namespace hcf
