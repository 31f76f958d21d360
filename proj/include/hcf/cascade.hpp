#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hcf/entropy.hpp"
#include "hcf/image.hpp"

namespace hcf {

// Binary quantization-placement vector over levels s..d, ordered source to
// destination. The destination bit is always 1: the last level must quantize
// and transmit. Literal form is a bit string such as "10001".
struct PolicyVector {
  int source_level = 0;  // s
  int dest_level = 0;    // d
  std::vector<std::uint8_t> bits;  // bits[0] is level s, bits.back() level d

  int span() const { return source_level - dest_level + 1; }
  int nq() const;
  bool quantizes_at(int level) const;

  std::string to_string() const;
  static PolicyVector from_bits(int source_level,
                                std::vector<std::uint8_t> bits);
  static PolicyVector parse(const std::string& literal, int source_level);

  void validate() const;
  bool operator==(const PolicyVector&) const = default;
};

// All members of the policy space with exactly nq quantizations (destination
// bit fixed at 1), in descending lexicographic order of the bit string.
std::vector<PolicyVector> enumerate_policies(int s, int d, int nq);

// [1^(nq-1), 0^(span-nq), 1]: quantization at the cascade edges.
PolicyVector edge_policy(int s, int d, int nq);

// Minimal quantization [0,...,0,1].
PolicyVector minimal_policy(int s, int d);

// Maximal quantization [1,...,1].
PolicyVector maximal_policy(int s, int d);

// Learned affine map from the level-k latent space to level k-1. Inter
// modules expect quantized input, intra modules unquantized input.
struct TransformModule {
  enum class Kind { kInter, kIntra };
  Kind kind = Kind::kIntra;
  int from_level = 0;
  int to_level = 0;
  Eigen::MatrixXd weight;  // M x M
  Eigen::VectorXd bias;    // M
};

const char* to_string(TransformModule::Kind kind);

// Complete module map over (kind, from_level) for from_level in (d, s].
struct ModuleBank {
  std::vector<TransformModule> modules;

  bool has(TransformModule::Kind kind, int from_level) const;
  const TransformModule& module(TransformModule::Kind kind,
                                int from_level) const;
  void put(TransformModule module);  // replaces an existing slot
};

// rows y -> W y + b; level decremented, quantized flag cleared. Enforces the
// kind/quantization contract of the two module families.
Latent apply_module(const TransformModule& module, const Latent& latent);

// One probe: a snapshot of the cascade state at one level, with a side-branch
// quantization, rate estimate and reconstruction that leave the main path
// untouched. "pre" is the arriving (unquantized) state, "post" the
// side-branch quantized state.
struct ProbeRecord {
  int level = 0;
  bool quantized_on_path = false;  // policy bit at this level
  Latent pre;
  Latent post;
  double rate_bits = 0.0;   // estimate_rate on post
  ImagePlane reconstruction;  // g_s of post, assembled
};

struct CascadePlan {
  int source_level = 0;
  int dest_level = 0;
  PolicyVector policy;
};

struct CascadeOptions {
  std::set<int> probe_levels;
  // Run the real entropy coder at every quantization point. Off by default:
  // lossless coding makes plain quantization bit-identical and cheaper.
  bool coder_at_boundaries = false;
};

struct CascadeResult {
  Latent final_latent;  // quantized, at the destination level
  std::vector<ProbeRecord> probes;       // descending level order
  std::vector<Bitstream> link_streams;   // one per executed boundary
};

// One level step: quantize (+ optional real coder roundtrip) then the inter
// module when the policy bit is set, otherwise the intra module. At the
// destination level no module is applied; the process ends with quantization.
Latent level_process(const CodecFamily& family, const ModuleBank& bank, int k,
                     bool quantize_here, bool is_destination,
                     const Latent& latent, bool coder_in_loop = false,
                     Bitstream* out_stream = nullptr);

// Full cascade: analysis at s, level processes down the chain, final
// quantization at d. Probes capture per-level snapshots for entropy and
// sensitivity analysis.
CascadeResult run_cascade(const CodecFamily& family, const ModuleBank& bank,
                          const CascadePlan& plan, const ImagePlane& image,
                          const CascadeOptions& options = {});

// M x M affine map: 2M^2 multiply-adds plus M bias adds per patch row.
std::uint64_t flops_apply_module(const CodecFamily& family,
                                 std::int64_t num_patches);

}  // namespace hcf
