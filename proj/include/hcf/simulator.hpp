#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hcf/cascade.hpp"
#include "hcf/metrics.hpp"

namespace hcf {

// One executed operation, attributed to the node that performed it.
struct OpRecord {
  int node = 0;
  std::string op;
  int level = 0;
  std::uint64_t flops = 0;
  std::uint64_t live_elements = 0;  // real values alive during the op
};

struct NodeCost {
  std::uint64_t flops = 0;
  std::uint64_t bytes_tx = 0;       // serialized bytes on the outgoing link
  std::uint64_t peak_buffer = 0;    // max live real values over the node's ops
  double wall_seconds = 0.0;
};

// Per-node cost accounting for one pipeline execution. The destination is the
// last node. Payload bytes are not counted in peak_buffer (real values only).
struct CostReport {
  std::vector<NodeCost> nodes;
  std::vector<OpRecord> op_trace;

  std::uint64_t total_flops() const;
  std::uint64_t total_bytes_tx() const;
  double total_wall_seconds() const;
};

struct StageResult {
  ImagePlane reconstruction;
  RDPoint rd;  // bpp from the real final-link bitstream
  CostReport cost;
  std::vector<ProbeRecord> probes;
  std::vector<Bitstream> link_streams;
};

// Chain shape: one compute node per maximal run of levels ending at a
// quantization point; the destination only decodes.
struct NodeChain {
  struct Node {
    int high_level = 0;  // first level the node processes
    int low_level = 0;   // its quantization/transmission level
  };
  std::vector<Node> nodes;

  static NodeChain from_policy(const PolicyVector& policy);
  static NodeChain recompression_chain(int s, int d);  // one node per level
};

// Full cascade with the real coder at every policy boundary; costs attributed
// per node. Optional probe levels add evaluation side-branches (not costed).
StageResult run_hcf(const CodecFamily& family, const ModuleBank& bank,
                    const PolicyVector& policy, const ImagePlane& image,
                    const std::set<int>& probe_levels = {});

// Pixel-domain recompression baseline: every hop fully decodes to pixels and
// re-encodes one level lower.
StageResult run_drf(const CodecFamily& family, int s, int d,
                    const ImagePlane& image);

// Single-stage bound: direct encode/decode at one level.
StageResult run_ssf(const CodecFamily& family, int k, const ImagePlane& image);

struct FrameworkComparison {
  struct RdRow {
    std::string framework;  // "hcf", "drf", "ssf"
    int level = 0;          // target level of this point
    RDPoint rd;             // corpus means
  };
  std::vector<RdRow> rd_rows;

  // Node-aligned HCF (maximal policy, one level per node) vs DRF costs,
  // summed over the corpus. reduction = 100*(1 - hcf/drf).
  struct CostRow {
    int node = 0;
    double flops_reduction_pct = 0.0;
    double bytes_reduction_pct = 0.0;
    double buffer_reduction_pct = 0.0;
    double time_reduction_pct = 0.0;
  };
  std::vector<CostRow> cost_rows;
  CostReport hcf_cost;  // corpus-summed, timing by median of repeats
  CostReport drf_cost;
};

// RD points for HCF/DRF/SSF at every target level in [d, s] (HCF under the
// edge policy with nq clamped to the span) plus the per-node cost comparison.
FrameworkComparison compare_frameworks(const CodecFamily& family,
                                       const ModuleBank& bank, int s, int d,
                                       int nq,
                                       const std::vector<ImagePlane>& corpus,
                                       int timing_repeats = 5);

}  // namespace hcf
