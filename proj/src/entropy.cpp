#include "hcf/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "hcf/errors.hpp"

namespace hcf {

namespace {

using json = nlohmann::json;

// Carry-less 64-bit range coder (Subbotin style): renormalization either
// shifts out a settled top byte or clamps the range at the bottom threshold,
// so no carry propagation is ever needed.
constexpr std::uint64_t kTop = 1ull << 56;
constexpr std::uint64_t kBottom = 1ull << 48;

class RangeEncoder {
 public:
  explicit RangeEncoder(std::vector<std::uint8_t>& out) : out_(out) {}

  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    range_ /= total;
    low_ += static_cast<std::uint64_t>(cum) * range_;
    range_ *= freq;
    normalize();
  }

  void finish() {
    for (int i = 0; i < 8; ++i) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
      low_ <<= 8;
    }
  }

 private:
  void normalize() {
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBottom && ((range_ = -low_ & (kBottom - 1)), true))) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  std::vector<std::uint8_t>& out_;
  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~0ull;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const std::vector<std::uint8_t>& in) : in_(in) {
    for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
  }

  std::uint32_t decode_freq(std::uint32_t total) {
    range_ /= total;
    const std::uint64_t value = (code_ - low_) / range_;
    if (value >= total)
      throw CorruptPayloadError("range coder state violation");
    return static_cast<std::uint32_t>(value);
  }

  void decode_update(std::uint32_t cum, std::uint32_t freq) {
    low_ += static_cast<std::uint64_t>(cum) * range_;
    range_ *= freq;
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBottom && ((range_ = -low_ & (kBottom - 1)), true))) {
      code_ = (code_ << 8) | next_byte();
      low_ <<= 8;
      range_ <<= 8;
    }
  }

 private:
  std::uint8_t next_byte() {
    if (pos_ >= in_.size())
      throw CorruptPayloadError("range coder ran past end of payload");
    return in_[pos_++];
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~0ull;
  std::uint64_t code_ = 0;
};

void require_quantized(const Latent& latent, const char* op) {
  if (!latent.quantized)
    throw DataError(std::string(op) + ": latent is not quantized");
}

std::string format_scale(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64_le(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

constexpr std::uint64_t kEscapeRawBits = 32;

}  // namespace

ChannelProbModel::Table ChannelProbModel::build_table(double scale,
                                                      double step) {
  // Laplace(0, b) mass of the quantization bin around index i. Bin boundaries
  // at (i +- 1/2)*step; both tails beyond kMaxIndex feed the escape symbol.
  const auto upper_tail = [&](double x) { return 0.5 * std::exp(-x / scale); };
  std::vector<double> pmf(kAlphabetSize, 0.0);
  pmf[symbol_of_index(0)] = 1.0 - 2.0 * upper_tail(0.5 * step);
  for (int i = 1; i <= kMaxIndex; ++i) {
    const double mass =
        upper_tail((i - 0.5) * step) - upper_tail((i + 0.5) * step);
    pmf[symbol_of_index(i)] = mass;
    pmf[symbol_of_index(-i)] = mass;
  }
  pmf[kEscapeSymbol] = 2.0 * upper_tail((kMaxIndex + 0.5) * step);

  // Fixed-point conversion: floor(p * (total - alphabet)) + 1 guarantees
  // every symbol at least one count; the slack goes to the center symbol.
  Table t;
  t.freq.resize(kAlphabetSize);
  const double span = static_cast<double>(kTotalFreq - kAlphabetSize);
  std::uint32_t total = 0;
  for (int s = 0; s < kAlphabetSize; ++s) {
    t.freq[s] = static_cast<std::uint32_t>(std::floor(pmf[s] * span)) + 1;
    total += t.freq[s];
  }
  t.freq[symbol_of_index(0)] += kTotalFreq - total;
  t.cum.resize(kAlphabetSize + 1, 0);
  for (int s = 0; s < kAlphabetSize; ++s) t.cum[s + 1] = t.cum[s] + t.freq[s];
  return t;
}

ChannelProbModel ChannelProbModel::from_frequencies(
    double quant_step, std::vector<double> scales,
    std::vector<std::vector<std::uint32_t>> freqs) {
  ChannelProbModel model;
  model.quant_step = quant_step;
  model.scales = std::move(scales);
  for (auto& f : freqs) {
    if (f.size() != kAlphabetSize)
      throw DataError("prob model: frequency table has wrong size");
    Table t;
    t.freq = std::move(f);
    t.cum.resize(kAlphabetSize + 1, 0);
    std::uint32_t total = 0;
    for (int s = 0; s < kAlphabetSize; ++s) {
      if (t.freq[s] == 0) throw DataError("prob model: zero-frequency symbol");
      t.cum[s + 1] = t.cum[s] + t.freq[s];
      total += t.freq[s];
    }
    if (total != kTotalFreq)
      throw DataError("prob model: frequencies must sum to 2^16");
    model.tables.push_back(std::move(t));
  }
  return model;
}

double ChannelProbModel::bits_of_symbol(int channel, int sym) const {
  const Table& t = tables[static_cast<std::size_t>(channel)];
  return std::log2(static_cast<double>(kTotalFreq) / t.freq[sym]);
}

namespace {

void build_tables(ChannelProbModel& model) {
  model.tables.clear();
  model.tables.reserve(model.scales.size());
  for (double b : model.scales)
    model.tables.push_back(ChannelProbModel::build_table(b, model.quant_step));
}

}  // namespace

ChannelProbModel fit_prob_model(const Latent& latent) {
  require_quantized(latent, "fit_prob_model");
  ChannelProbModel model;
  model.quant_step = latent.quant_step > 0.0 ? latent.quant_step : 1.0;
  const Eigen::Index channels = latent.data.cols();
  model.scales.resize(static_cast<std::size_t>(channels));
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double mean_abs =
        latent.data.rows() == 0 ? 0.0 : latent.data.col(c).cwiseAbs().mean();
    model.scales[static_cast<std::size_t>(c)] = std::max(mean_abs, 1e-6);
  }
  build_tables(model);
  return model;
}

Bitstream encode(const Latent& latent, const ChannelProbModel& model,
                 const std::string& version) {
  require_quantized(latent, "encode");
  ChannelProbModel local = model;
  // The decoder reconstructs scales from their decimal-string form; run the
  // encoder from the identical parsed values so both sides build the same
  // tables. %.17g round-trips doubles exactly, making this a no-op today.
  for (double& b : local.scales) b = std::strtod(format_scale(b).c_str(), nullptr);
  build_tables(local);

  Bitstream stream;
  stream.level = latent.level;
  stream.version = version;
  stream.geom = latent.geom;
  stream.scales = local.scales;

  if (latent.data.rows() == 0) return stream;  // header-only stream

  RangeEncoder coder(stream.payload);
  const double quant = local.quant_step;
  for (Eigen::Index r = 0; r < latent.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < latent.data.cols(); ++c) {
      const ChannelProbModel::Table& t =
          local.tables[static_cast<std::size_t>(c)];
      const long idx = std::lround(latent.data(r, c) / quant);
      if (std::labs(idx) <= ChannelProbModel::kMaxIndex) {
        const int sym = ChannelProbModel::symbol_of_index(idx);
        coder.encode(t.cum[sym], t.freq[sym], ChannelProbModel::kTotalFreq);
      } else {
        const int esc = ChannelProbModel::kEscapeSymbol;
        coder.encode(t.cum[esc], t.freq[esc], ChannelProbModel::kTotalFreq);
        const std::uint32_t raw =
            static_cast<std::uint32_t>(static_cast<std::int32_t>(idx));
        for (int byte = 0; byte < 4; ++byte)
          coder.encode((raw >> (8 * byte)) & 0xff, 1, 256);
      }
    }
  }
  coder.finish();
  return stream;
}

Latent decode(const Bitstream& stream, const CodecFamily& family) {
  if (stream.version != family.version)
    throw VersionMismatchError("bitstream version '" + stream.version +
                               "' does not match family version '" +
                               family.version + "'");
  const double quant = family.level(stream.level).quant_step;
  if (static_cast<int>(stream.scales.size()) != family.latent_dim)
    throw CorruptPayloadError("bitstream scale count does not match family");

  Latent latent;
  latent.level = stream.level;
  latent.quantized = true;
  latent.quant_step = quant;
  latent.geom = stream.geom;
  latent.data.resize(stream.geom.total_rows(), family.latent_dim);
  if (latent.data.rows() == 0) return latent;

  ChannelProbModel model;
  model.quant_step = quant;
  model.scales = stream.scales;
  build_tables(model);

  RangeDecoder coder(stream.payload);
  for (Eigen::Index r = 0; r < latent.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < latent.data.cols(); ++c) {
      const ChannelProbModel::Table& t =
          model.tables[static_cast<std::size_t>(c)];
      const std::uint32_t f = coder.decode_freq(ChannelProbModel::kTotalFreq);
      const int sym = static_cast<int>(
          std::upper_bound(t.cum.begin(), t.cum.end(), f) - t.cum.begin() - 1);
      coder.decode_update(t.cum[sym], t.freq[sym]);
      long idx;
      if (sym == ChannelProbModel::kEscapeSymbol) {
        std::uint32_t raw = 0;
        for (int byte = 0; byte < 4; ++byte) {
          const std::uint32_t v = coder.decode_freq(256);
          coder.decode_update(v, 1);
          raw |= v << (8 * byte);
        }
        idx = static_cast<std::int32_t>(raw);
      } else {
        idx = ChannelProbModel::index_of_symbol(sym);
      }
      latent.data(r, c) = quant * static_cast<double>(idx);
    }
  }
  return latent;
}

double estimate_rate(const Latent& latent, const ChannelProbModel& model) {
  require_quantized(latent, "estimate_rate");
  if (latent.data.rows() == 0) return 0.0;
  double bits = 0.0;
  for (Eigen::Index c = 0; c < latent.data.cols(); ++c) {
    const ChannelProbModel::Table& t =
        model.tables[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < latent.data.rows(); ++r) {
      const long idx = std::lround(latent.data(r, c) / model.quant_step);
      if (std::labs(idx) <= ChannelProbModel::kMaxIndex) {
        const int sym = ChannelProbModel::symbol_of_index(idx);
        bits += std::log2(static_cast<double>(ChannelProbModel::kTotalFreq) /
                          t.freq[sym]);
      } else {
        bits += std::log2(static_cast<double>(ChannelProbModel::kTotalFreq) /
                          t.freq[ChannelProbModel::kEscapeSymbol]) +
                kEscapeRawBits;
      }
    }
  }
  return bits;
}

std::vector<std::uint8_t> Bitstream::serialize() const {
  json header;
  header["level"] = level;
  header["version"] = version;
  header["geometry"] = {{"width", geom.width},
                        {"height", geom.height},
                        {"channels", geom.channels},
                        {"patch_size", geom.patch_size},
                        {"padded_width", geom.padded_width},
                        {"padded_height", geom.padded_height}};
  json scale_strings = json::array();
  for (double b : scales) scale_strings.push_back(format_scale(b));
  header["scales"] = scale_strings;
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> out = {'H', 'C', 'B', '1'};
  append_u64_le(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  append_u64_le(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Bitstream Bitstream::parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "HCB1", 4) != 0)
    throw ParseError("bitstream: bad magic", 0);
  const std::uint64_t header_len = read_u64_le(bytes, 4);
  if (12 + header_len > bytes.size())
    throw ParseError("bitstream: truncated header", bytes.size());
  json header;
  try {
    header = json::parse(bytes.begin() + 12,
                         bytes.begin() + 12 + static_cast<std::size_t>(header_len));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bitstream: header JSON: ") + e.what(), 12);
  }

  Bitstream stream;
  try {
    stream.level = header.at("level").get<int>();
    stream.version = header.at("version").get<std::string>();
    const json& g = header.at("geometry");
    stream.geom.width = g.at("width").get<int>();
    stream.geom.height = g.at("height").get<int>();
    stream.geom.channels = g.at("channels").get<int>();
    stream.geom.patch_size = g.at("patch_size").get<int>();
    stream.geom.padded_width = g.at("padded_width").get<int>();
    stream.geom.padded_height = g.at("padded_height").get<int>();
    for (const json& s : header.at("scales"))
      stream.scales.push_back(std::strtod(s.get<std::string>().c_str(), nullptr));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bitstream: header fields: ") + e.what(), 12);
  }

  const std::size_t payload_at = 12 + static_cast<std::size_t>(header_len);
  if (payload_at + 8 > bytes.size())
    throw ParseError("bitstream: missing payload length", bytes.size());
  const std::uint64_t payload_len = read_u64_le(bytes, payload_at);
  if (payload_at + 8 + payload_len > bytes.size())
    throw CorruptPayloadError("bitstream payload truncated");
  stream.payload.assign(bytes.begin() + payload_at + 8,
                        bytes.begin() + payload_at + 8 +
                            static_cast<std::size_t>(payload_len));
  return stream;
}

std::uint64_t flops_fit_model(const CodecFamily& family,
                              std::int64_t num_patches) {
  // mean|v| pass (2 per element) plus table construction (4 per entry).
  return static_cast<std::uint64_t>(num_patches) * 2ull * family.latent_dim +
         4ull * ChannelProbModel::kAlphabetSize * family.latent_dim;
}

std::uint64_t flops_encode(const CodecFamily& family,
                           std::int64_t num_patches) {
  return static_cast<std::uint64_t>(num_patches) * 8ull * family.latent_dim;
}

std::uint64_t flops_decode(const CodecFamily& family,
                           std::int64_t num_patches) {
  // symbol decode plus table rebuild from header scales
  return static_cast<std::uint64_t>(num_patches) * 8ull * family.latent_dim +
         4ull * ChannelProbModel::kAlphabetSize * family.latent_dim;
}

}  // namespace hcf
