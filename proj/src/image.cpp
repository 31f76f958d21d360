#include "hcf/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hcf/errors.hpp"

namespace hcf {

namespace {

bool is_pnm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Whitespace/comment-aware tokenizer for the PNM header.
class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, std::size_t start)
      : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }

  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (is_pnm_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        return;
      }
    }
  }

  long read_number(const char* what) {
    skip_separators();
    const std::size_t start = pos_;
    long value = 0;
    bool any = false;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1000000000L)
        throw ParseError(std::string("PNM header: ") + what + " out of range",
                         start);
      ++pos_;
      any = true;
    }
    if (!any)
      throw ParseError(std::string("PNM header: expected ") + what, pos_);
    return value;
  }

  // Exactly one whitespace byte separates the maxval token from the payload.
  void consume_single_separator() {
    if (pos_ >= bytes_.size() || !is_pnm_space(bytes_[pos_]))
      throw ParseError("PNM header: missing separator before payload", pos_);
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
};

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  // round-half-up on the nonnegative range
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

}  // namespace

ImagePlane ImagePlane::filled(int width, int height, int channels,
                              double value) {
  ImagePlane p;
  p.width = width;
  p.height = height;
  p.channels = channels;
  p.samples.assign(static_cast<std::size_t>(width) * height * channels, value);
  return p;
}

void ImagePlane::validate() const {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
    throw DataError("image plane: bad dimensions");
  if (samples.size() != static_cast<std::size_t>(width) * height * channels)
    throw DataError("image plane: sample count does not match geometry");
  for (double v : samples)
    if (!(v >= 0.0 && v <= 1.0))
      throw DataError("image plane: sample outside [0,1]");
}

ImagePlane decode_netpbm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' ||
      (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("PNM header: not a binary PGM/PPM magic", 0);
  const int channels = bytes[1] == '5' ? 1 : 3;

  HeaderReader reader(bytes, 2);
  const long width = reader.read_number("width");
  const long height = reader.read_number("height");
  if (width <= 0 || height <= 0)
    throw ParseError("PNM header: non-positive dimensions", reader.pos());
  const std::size_t maxval_at = reader.pos();
  const long maxval = reader.read_number("maxval");
  if (maxval != 255)
    throw ParseError("PNM header: unsupported maxval " +
                         std::to_string(maxval),
                     maxval_at);
  reader.consume_single_separator();

  const std::size_t payload_at = reader.pos();
  const std::size_t expected =
      static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - payload_at < expected)
    throw ParseError("PNM payload truncated: expected " +
                         std::to_string(expected) + " bytes, have " +
                         std::to_string(bytes.size() - payload_at),
                     bytes.size());

  ImagePlane plane;
  plane.width = static_cast<int>(width);
  plane.height = static_cast<int>(height);
  plane.channels = channels;
  plane.samples.resize(expected);
  for (std::size_t i = 0; i < expected; ++i)
    plane.samples[i] = bytes[payload_at + i] / 255.0;
  return plane;
}

std::vector<std::uint8_t> encode_netpbm(const ImagePlane& plane) {
  // Geometry must hold; out-of-range samples are clamped on write.
  if (plane.width <= 0 || plane.height <= 0 ||
      (plane.channels != 1 && plane.channels != 3) ||
      plane.samples.size() !=
          static_cast<std::size_t>(plane.width) * plane.height * plane.channels)
    throw DataError("save image: bad plane geometry");
  const std::string header = std::string(plane.channels == 1 ? "P5" : "P6") +
                             "\n" + std::to_string(plane.width) + " " +
                             std::to_string(plane.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + plane.samples.size());
  for (double v : plane.samples) out.push_back(to_byte(v));
  return out;
}

ImagePlane load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

void save_image(const ImagePlane& plane, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_netpbm(plane);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

PatchMatrix patchify(const ImagePlane& plane, int patch_size) {
  if (patch_size < 1) throw DataError("patchify: patch size must be >= 1");
  const int b = patch_size;
  PatchGeometry geom;
  geom.width = plane.width;
  geom.height = plane.height;
  geom.channels = plane.channels;
  geom.patch_size = b;
  geom.padded_width = ((plane.width + b - 1) / b) * b;
  geom.padded_height = ((plane.height + b - 1) / b) * b;

  PatchMatrix patches;
  patches.geom = geom;
  patches.rows.resize(geom.total_rows(), b * b);
  for (int c = 0; c < geom.channels; ++c) {
    for (int py = 0; py < geom.patches_y(); ++py) {
      for (int px = 0; px < geom.patches_x(); ++px) {
        const int row =
            c * geom.patches_per_channel() + py * geom.patches_x() + px;
        for (int dy = 0; dy < b; ++dy) {
          // edge-replicate padding
          const int y = std::min(py * b + dy, plane.height - 1);
          for (int dx = 0; dx < b; ++dx) {
            const int x = std::min(px * b + dx, plane.width - 1);
            patches.rows(row, dy * b + dx) = plane.at(x, y, c);
          }
        }
      }
    }
  }
  return patches;
}

ImagePlane unpatchify(const PatchMatrix& patches) {
  const PatchGeometry& geom = patches.geom;
  const int b = geom.patch_size;
  if (b < 1 || geom.padded_width % b != 0 || geom.padded_height % b != 0 ||
      geom.padded_width < geom.width || geom.padded_height < geom.height)
    throw DataError("unpatchify: inconsistent geometry");
  if (patches.rows.rows() != geom.total_rows() ||
      patches.rows.cols() != b * b)
    throw DataError("unpatchify: patch count does not match geometry");

  ImagePlane plane = ImagePlane::filled(geom.width, geom.height,
                                        geom.channels, 0.0);
  for (int c = 0; c < geom.channels; ++c) {
    for (int py = 0; py < geom.patches_y(); ++py) {
      for (int px = 0; px < geom.patches_x(); ++px) {
        const int row =
            c * geom.patches_per_channel() + py * geom.patches_x() + px;
        for (int dy = 0; dy < b; ++dy) {
          const int y = py * b + dy;
          if (y >= geom.height) continue;
          for (int dx = 0; dx < b; ++dx) {
            const int x = px * b + dx;
            if (x >= geom.width) continue;
            plane.at(x, y, c) =
                std::clamp(patches.rows(row, dy * b + dx), 0.0, 1.0);
          }
        }
      }
    }
  }
  return plane;
}

}  // namespace hcf
