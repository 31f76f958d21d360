#include "hcf/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

#include "hcf/errors.hpp"

namespace hcf {

namespace {

using Clock = std::chrono::steady_clock;

// Executes pipeline primitives while attributing flops, live buffer elements
// and wall time to the node currently running.
class Executor {
 public:
  explicit Executor(const CodecFamily& family) : family_(family) {}

  void begin_node() {
    node_ = static_cast<int>(report_.nodes.size());
    report_.nodes.emplace_back();
  }

  template <typename Fn>
  auto op(const char* name, int level, std::uint64_t flops,
          std::uint64_t live_elements, Fn&& fn) {
    OpRecord record;
    record.node = node_;
    record.op = name;
    record.level = level;
    record.flops = flops;
    record.live_elements = live_elements;
    NodeCost& node = report_.nodes[static_cast<std::size_t>(node_)];
    node.flops += flops;
    node.peak_buffer = std::max(node.peak_buffer, live_elements);
    report_.op_trace.push_back(std::move(record));

    const Clock::time_point t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      node.wall_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto result = fn();
      node.wall_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
      return result;
    }
  }

  void transmitted(std::uint64_t bytes) {
    report_.nodes[static_cast<std::size_t>(node_)].bytes_tx += bytes;
  }

  const CodecFamily& family() const { return family_; }
  CostReport take_report() { return std::move(report_); }

 private:
  const CodecFamily& family_;
  CostReport report_;
  int node_ = -1;
};

std::uint64_t rows_of(const PatchMatrix& p) {
  return static_cast<std::uint64_t>(p.rows.rows());
}
std::uint64_t rows_of(const Latent& l) {
  return static_cast<std::uint64_t>(l.data.rows());
}

// Per-op live element estimates: inputs plus outputs of the functional step.
// Only real-valued buffers count (latents, patches, pixels); the integer
// frequency tables and byte payloads are excluded.
struct Live {
  static std::uint64_t transform(const CodecFamily& f, std::uint64_t rows) {
    return rows * (static_cast<std::uint64_t>(f.patch_size) * f.patch_size +
                   f.latent_dim);
  }
  static std::uint64_t latent_pair(const CodecFamily& f, std::uint64_t rows) {
    return rows * 2ull * f.latent_dim;
  }
  static std::uint64_t latent_only(const CodecFamily& f, std::uint64_t rows) {
    return rows * f.latent_dim;
  }
  static std::uint64_t assembly(const CodecFamily& f, std::uint64_t rows,
                                const PatchGeometry& geom) {
    return rows * static_cast<std::uint64_t>(f.patch_size) * f.patch_size +
           static_cast<std::uint64_t>(geom.width) * geom.height * geom.channels;
  }
};

struct EncodedLink {
  Bitstream stream;
  std::vector<std::uint8_t> wire;  // serialized form, sized for bpp/bytes
};

// quantize + model fit + encode at the node's boundary level.
EncodedLink encode_and_send(Executor& ex, Latent& state, int level) {
  const CodecFamily& family = ex.family();
  const std::uint64_t rows = rows_of(state);
  state = ex.op("quantize", level, flops_quantize(family, rows),
                Live::latent_pair(family, rows),
                [&] { return quantize(family, level, state); });
  const ChannelProbModel model =
      ex.op("fit_model", level, flops_fit_model(family, rows),
            Live::latent_only(family, rows),
            [&] { return fit_prob_model(state); });
  EncodedLink link;
  link.stream = ex.op("encode", level, flops_encode(family, rows),
                      Live::latent_only(family, rows),
                      [&] { return encode(state, model, family.version); });
  link.wire = link.stream.serialize();
  ex.transmitted(link.wire.size());
  return link;
}

Latent receive_and_decode(Executor& ex, const EncodedLink& link) {
  const CodecFamily& family = ex.family();
  const std::uint64_t rows =
      static_cast<std::uint64_t>(link.stream.geom.total_rows());
  return ex.op("decode", link.stream.level, flops_decode(family, rows),
               Live::latent_only(family, rows),
               [&] { return decode(link.stream, family); });
}

// Evaluation side-branch; deliberately not routed through the executor so
// probes never show up in cost accounting.
ProbeRecord make_probe(const CodecFamily& family, int level,
                       bool quantized_on_path, const Latent& state) {
  ProbeRecord probe;
  probe.level = level;
  probe.quantized_on_path = quantized_on_path;
  probe.pre = state;
  probe.post = quantize(family, level, state);
  probe.rate_bits = estimate_rate(probe.post, fit_prob_model(probe.post));
  probe.reconstruction = unpatchify(synthesis(family, level, probe.post));
  return probe;
}

ImagePlane finish_at_destination(Executor& ex, const EncodedLink& final_link,
                                 StageResult* result) {
  const CodecFamily& family = ex.family();
  ex.begin_node();
  Latent latent = receive_and_decode(ex, final_link);
  const std::uint64_t rows = rows_of(latent);
  const PatchMatrix recon_patches =
      ex.op("synthesis", latent.level, flops_synthesis(family, latent.level, rows),
            Live::transform(family, rows),
            [&] { return synthesis(family, latent.level, latent); });
  ImagePlane recon = ex.op("assemble", latent.level, 0ull,
                           Live::assembly(family, rows, latent.geom),
                           [&] { return unpatchify(recon_patches); });
  result->rd.bpp =
      static_cast<double>(final_link.wire.size() * 8) /
      (static_cast<double>(latent.geom.width) * latent.geom.height *
       latent.geom.channels);
  return recon;
}

void fill_quality(const ImagePlane& original, StageResult* result) {
  result->rd.psnr = psnr(original, result->reconstruction);
  result->rd.msssim_db = msssim_db(original, result->reconstruction);
}

#ifdef __linux__
// Best-effort pinning for the timing runs; restores the previous mask.
class ScopedAffinity {
 public:
  ScopedAffinity() {
    if (pthread_getaffinity_np(pthread_self(), sizeof(saved_), &saved_) != 0)
      return;
    cpu_set_t pinned;
    CPU_ZERO(&pinned);
    CPU_SET(0, &pinned);
    restore_ = pthread_setaffinity_np(pthread_self(), sizeof(pinned), &pinned) == 0;
  }
  ~ScopedAffinity() {
    if (restore_)
      pthread_setaffinity_np(pthread_self(), sizeof(saved_), &saved_);
  }

 private:
  cpu_set_t saved_;
  bool restore_ = false;
};
#else
class ScopedAffinity {};
#endif

}  // namespace

std::uint64_t CostReport::total_flops() const {
  std::uint64_t acc = 0;
  for (const NodeCost& n : nodes) acc += n.flops;
  return acc;
}

std::uint64_t CostReport::total_bytes_tx() const {
  std::uint64_t acc = 0;
  for (const NodeCost& n : nodes) acc += n.bytes_tx;
  return acc;
}

double CostReport::total_wall_seconds() const {
  double acc = 0.0;
  for (const NodeCost& n : nodes) acc += n.wall_seconds;
  return acc;
}

NodeChain NodeChain::from_policy(const PolicyVector& policy) {
  policy.validate();
  NodeChain chain;
  int high = policy.source_level;
  for (int k = policy.source_level; k >= policy.dest_level; --k) {
    if (policy.quantizes_at(k)) {
      chain.nodes.push_back({high, k});
      high = k - 1;
    }
  }
  return chain;
}

NodeChain NodeChain::recompression_chain(int s, int d) {
  if (s < d) throw DataError("node chain: source below destination");
  NodeChain chain;
  for (int k = s; k >= d; --k) chain.nodes.push_back({k, k});
  return chain;
}

StageResult run_hcf(const CodecFamily& family, const ModuleBank& bank,
                    const PolicyVector& policy, const ImagePlane& image,
                    const std::set<int>& probe_levels) {
  const NodeChain chain = NodeChain::from_policy(policy);
  StageResult result;
  Executor ex(family);

  EncodedLink link;
  Latent state;
  for (std::size_t j = 0; j < chain.nodes.size(); ++j) {
    const NodeChain::Node& node = chain.nodes[j];
    ex.begin_node();
    if (j == 0) {
      const PatchMatrix patches = patchify(image, family.patch_size);
      const std::uint64_t rows = rows_of(patches);
      state = ex.op("analysis", node.high_level,
                    flops_analysis(family, node.high_level, rows),
                    Live::transform(family, rows),
                    [&] { return analysis(family, node.high_level, patches); });
    } else {
      state = receive_and_decode(ex, link);
      const std::uint64_t rows = rows_of(state);
      state = ex.op("module_inter", state.level,
                    flops_apply_module(family, rows),
                    Live::latent_pair(family, rows), [&] {
                      return apply_module(
                          bank.module(TransformModule::Kind::kInter,
                                      state.level),
                          state);
                    });
    }
    // state is now the unquantized latent at this node's first free level
    for (int k = state.level; k >= node.low_level; --k) {
      if (probe_levels.count(k))
        result.probes.push_back(make_probe(family, k, policy.quantizes_at(k), state));
      if (k == node.low_level) break;
      const std::uint64_t rows = rows_of(state);
      state = ex.op("module_intra", k, flops_apply_module(family, rows),
                    Live::latent_pair(family, rows), [&] {
                      return apply_module(
                          bank.module(TransformModule::Kind::kIntra, k), state);
                    });
    }
    link = encode_and_send(ex, state, node.low_level);
    result.link_streams.push_back(link.stream);
  }

  result.reconstruction = finish_at_destination(ex, link, &result);
  result.cost = ex.take_report();
  fill_quality(image, &result);
  return result;
}

StageResult run_drf(const CodecFamily& family, int s, int d,
                    const ImagePlane& image) {
  const NodeChain chain = NodeChain::recompression_chain(s, d);
  StageResult result;
  Executor ex(family);

  EncodedLink link;
  for (std::size_t j = 0; j < chain.nodes.size(); ++j) {
    const int level = chain.nodes[j].low_level;
    ex.begin_node();
    ImagePlane working;
    if (j == 0) {
      working = image;
    } else {
      // full decompression to pixels, then recompression one level lower
      Latent received = receive_and_decode(ex, link);
      const std::uint64_t rows = rows_of(received);
      const PatchMatrix recon_patches =
          ex.op("synthesis", received.level,
                flops_synthesis(family, received.level, rows),
                Live::transform(family, rows),
                [&] { return synthesis(family, received.level, received); });
      working = ex.op("assemble", received.level, 0ull,
                      Live::assembly(family, rows, received.geom),
                      [&] { return unpatchify(recon_patches); });
    }
    const PatchMatrix patches = patchify(working, family.patch_size);
    const std::uint64_t rows = rows_of(patches);
    Latent state = ex.op("analysis", level, flops_analysis(family, level, rows),
                         Live::transform(family, rows),
                         [&] { return analysis(family, level, patches); });
    link = encode_and_send(ex, state, level);
    result.link_streams.push_back(link.stream);
  }

  result.reconstruction = finish_at_destination(ex, link, &result);
  result.cost = ex.take_report();
  fill_quality(image, &result);
  return result;
}

StageResult run_ssf(const CodecFamily& family, int k, const ImagePlane& image) {
  return run_hcf(family, ModuleBank{}, edge_policy(k, k, 1), image);
}

FrameworkComparison compare_frameworks(const CodecFamily& family,
                                       const ModuleBank& bank, int s, int d,
                                       int nq,
                                       const std::vector<ImagePlane>& corpus,
                                       int timing_repeats) {
  if (corpus.empty()) throw DataError("compare_frameworks: empty corpus");
  FrameworkComparison cmp;

  // RD points per framework and target level, corpus means.
  for (int k = d; k <= s; ++k) {
    RDPoint hcf_mean, drf_mean, ssf_mean;
    const int span = s - k + 1;
    const PolicyVector policy = edge_policy(s, k, std::min(nq, span));
    for (const ImagePlane& image : corpus) {
      const StageResult hcf = run_hcf(family, bank, policy, image);
      const StageResult drf = run_drf(family, s, k, image);
      const StageResult ssf = run_ssf(family, k, image);
      hcf_mean.bpp += hcf.rd.bpp;
      hcf_mean.psnr += hcf.rd.psnr;
      hcf_mean.msssim_db += hcf.rd.msssim_db;
      drf_mean.bpp += drf.rd.bpp;
      drf_mean.psnr += drf.rd.psnr;
      drf_mean.msssim_db += drf.rd.msssim_db;
      ssf_mean.bpp += ssf.rd.bpp;
      ssf_mean.psnr += ssf.rd.psnr;
      ssf_mean.msssim_db += ssf.rd.msssim_db;
    }
    const double n = static_cast<double>(corpus.size());
    for (RDPoint* p : {&hcf_mean, &drf_mean, &ssf_mean}) {
      p->bpp /= n;
      p->psnr /= n;
      p->msssim_db /= n;
    }
    cmp.rd_rows.push_back({"hcf", k, hcf_mean});
    cmp.rd_rows.push_back({"drf", k, drf_mean});
    cmp.rd_rows.push_back({"ssf", k, ssf_mean});
  }

  // Cost table: the maximal policy gives HCF the same chain shape as DRF
  // (one level per node), so per-node comparison is well defined.
  const PolicyVector max_policy = maximal_policy(s, d);
  const auto corpus_cost = [&](auto&& run_one) {
    CostReport summed;
    for (const ImagePlane& image : corpus) {
      const CostReport one = run_one(image);
      if (summed.nodes.empty()) summed.nodes.resize(one.nodes.size());
      for (std::size_t i = 0; i < one.nodes.size(); ++i) {
        summed.nodes[i].flops += one.nodes[i].flops;
        summed.nodes[i].bytes_tx += one.nodes[i].bytes_tx;
        summed.nodes[i].peak_buffer =
            std::max(summed.nodes[i].peak_buffer, one.nodes[i].peak_buffer);
      }
      summed.op_trace.insert(summed.op_trace.end(), one.op_trace.begin(),
                             one.op_trace.end());
    }
    return summed;
  };
  const auto run_hcf_cost = [&](const ImagePlane& image) {
    return run_hcf(family, bank, max_policy, image).cost;
  };
  const auto run_drf_cost = [&](const ImagePlane& image) {
    return run_drf(family, s, d, image).cost;
  };

  cmp.hcf_cost = corpus_cost(run_hcf_cost);
  cmp.drf_cost = corpus_cost(run_drf_cost);

  // Wall time: warm-up run discarded, median over timing_repeats, measured on
  // one (best-effort pinned) thread.
  {
    ScopedAffinity pin;
    const std::size_t hcf_nodes = cmp.hcf_cost.nodes.size();
    const std::size_t drf_nodes = cmp.drf_cost.nodes.size();
    std::vector<std::vector<double>> hcf_samples(hcf_nodes);
    std::vector<std::vector<double>> drf_samples(drf_nodes);
    const auto collect = [&](auto&& run_one, std::vector<std::vector<double>>& out) {
      for (int r = -1; r < timing_repeats; ++r) {
        std::vector<double> per_node(out.size(), 0.0);
        for (const ImagePlane& image : corpus) {
          const CostReport one = run_one(image);
          for (std::size_t i = 0; i < out.size(); ++i)
            per_node[i] += one.nodes[i].wall_seconds;
        }
        if (r >= 0)
          for (std::size_t i = 0; i < out.size(); ++i)
            out[i].push_back(per_node[i]);
      }
    };
    collect(run_hcf_cost, hcf_samples);
    collect(run_drf_cost, drf_samples);
    const auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    for (std::size_t i = 0; i < hcf_nodes; ++i)
      cmp.hcf_cost.nodes[i].wall_seconds = median(hcf_samples[i]);
    for (std::size_t i = 0; i < drf_nodes; ++i)
      cmp.drf_cost.nodes[i].wall_seconds = median(drf_samples[i]);
  }

  const std::size_t node_count =
      std::min(cmp.hcf_cost.nodes.size(), cmp.drf_cost.nodes.size());
  const auto reduction = [](double hcf, double drf) {
    return drf > 0.0 ? 100.0 * (1.0 - hcf / drf) : 0.0;
  };
  for (std::size_t i = 0; i < node_count; ++i) {
    const NodeCost& h = cmp.hcf_cost.nodes[i];
    const NodeCost& r = cmp.drf_cost.nodes[i];
    FrameworkComparison::CostRow row;
    row.node = static_cast<int>(i);
    row.flops_reduction_pct =
        reduction(static_cast<double>(h.flops), static_cast<double>(r.flops));
    row.bytes_reduction_pct = reduction(static_cast<double>(h.bytes_tx),
                                        static_cast<double>(r.bytes_tx));
    row.buffer_reduction_pct = reduction(static_cast<double>(h.peak_buffer),
                                         static_cast<double>(r.peak_buffer));
    row.time_reduction_pct = reduction(h.wall_seconds, r.wall_seconds);
    cmp.cost_rows.push_back(row);
  }
  return cmp;
}

}  // namespace hcf
