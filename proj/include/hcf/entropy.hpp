#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcf/codec.hpp"

namespace hcf {

// Factorized Laplacian probability model over quantization indices, one scale
// per latent channel. Probabilities are carried as 32-bit fixed-point
// frequencies summing to 2^16 exactly, so every symbol has probability
// >= 2^-16 and pmf construction rounds identically everywhere.
struct ChannelProbModel {
  static constexpr int kMaxIndex = 255;              // indices -255..255
  static constexpr int kEscapeSymbol = 2 * kMaxIndex + 1;  // 511
  static constexpr int kAlphabetSize = kEscapeSymbol + 1;  // 512
  static constexpr std::uint32_t kTotalFreq = 1u << 16;

  double quant_step = 0.0;
  std::vector<double> scales;  // Laplacian scale b_c per channel

  struct Table {
    std::vector<std::uint32_t> freq;  // kAlphabetSize entries, sum kTotalFreq
    std::vector<std::uint32_t> cum;   // kAlphabetSize+1 prefix sums
  };
  std::vector<Table> tables;  // one per channel

  static int symbol_of_index(long idx) { return static_cast<int>(idx) + kMaxIndex; }
  static long index_of_symbol(int sym) { return sym - kMaxIndex; }

  // Deterministic frequency table for one channel given (scale, step).
  static Table build_table(double scale, double step);

  // Model with explicitly provided per-channel tables (tests, custom models).
  static ChannelProbModel from_frequencies(
      double quant_step, std::vector<double> scales,
      std::vector<std::vector<std::uint32_t>> freqs);

  // -log2 probability of symbol sym in channel c.
  double bits_of_symbol(int channel, int sym) const;
};

// Self-describing coded latent. serialize() layout: magic "HCB1", 8-byte LE
// JSON header length, JSON header (level, version, geometry, scales as
// decimal strings), 8-byte LE payload length, payload bytes.
struct Bitstream {
  int level = 0;
  std::string version;
  PatchGeometry geom;
  std::vector<double> scales;
  std::vector<std::uint8_t> payload;

  std::vector<std::uint8_t> serialize() const;
  static Bitstream parse(const std::vector<std::uint8_t>& bytes);

  std::size_t serialized_bits() const { return serialize().size() * 8; }
};

// Fits per-channel Laplacian scales b_c = max(mean |v|, 1e-6) on a quantized
// latent and builds the frequency tables.
ChannelProbModel fit_prob_model(const Latent& latent);

// Range-codes a quantized latent. Indices beyond kMaxIndex are sent as an
// escape symbol followed by the raw 32-bit index.
Bitstream encode(const Latent& latent, const ChannelProbModel& model,
                 const std::string& version);

// Exact inverse of encode. Throws VersionMismatchError when the header names
// a different family version, CorruptPayloadError on coder state violations.
Latent decode(const Bitstream& stream, const CodecFamily& family);

// Analytic code length in bits: sum of -log2 pmf(index) over entries
// (escapes add 32 raw bits). Used as the rate term R(y) everywhere.
double estimate_rate(const Latent& latent, const ChannelProbModel& model);

// Analytic op counts for the cost model.
std::uint64_t flops_fit_model(const CodecFamily& family,
                              std::int64_t num_patches);
std::uint64_t flops_encode(const CodecFamily& family,
                           std::int64_t num_patches);
std::uint64_t flops_decode(const CodecFamily& family,
                           std::int64_t num_patches);

}  // namespace hcf
