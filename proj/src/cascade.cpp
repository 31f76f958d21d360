#include "hcf/cascade.hpp"

#include <algorithm>

#include "hcf/errors.hpp"

namespace hcf {

int PolicyVector::nq() const {
  int n = 0;
  for (std::uint8_t b : bits) n += b;
  return n;
}

bool PolicyVector::quantizes_at(int level) const {
  if (level > source_level || level < dest_level)
    throw DataError("policy: level " + std::to_string(level) +
                    " outside span");
  return bits[static_cast<std::size_t>(source_level - level)] != 0;
}

std::string PolicyVector::to_string() const {
  std::string s;
  for (std::uint8_t b : bits) s += b ? '1' : '0';
  return s;
}

PolicyVector PolicyVector::from_bits(int source_level,
                                     std::vector<std::uint8_t> bits) {
  PolicyVector p;
  p.source_level = source_level;
  p.dest_level = source_level - static_cast<int>(bits.size()) + 1;
  p.bits = std::move(bits);
  p.validate();
  return p;
}

PolicyVector PolicyVector::parse(const std::string& literal,
                                 int source_level) {
  std::vector<std::uint8_t> bits;
  for (char c : literal) {
    if (c != '0' && c != '1')
      throw ConfigError("policy literal must be a bit string: " + literal);
    bits.push_back(c == '1' ? 1 : 0);
  }
  return from_bits(source_level, std::move(bits));
}

void PolicyVector::validate() const {
  if (bits.empty() || source_level < dest_level ||
      static_cast<int>(bits.size()) != span())
    throw DataError("policy: length does not match level span");
  if (bits.back() != 1)
    throw DataError("policy: destination bit must be 1 (" + to_string() + ")");
}

std::vector<PolicyVector> enumerate_policies(int s, int d, int nq) {
  const int span = s - d + 1;
  if (s < d) throw DataError("policy space: source below destination");
  if (nq < 1 || nq > span)
    throw DataError("policy space: infeasible quantization count " +
                    std::to_string(nq) + " for span " + std::to_string(span));
  // Free positions are the span-1 leading bits; choose nq-1 of them. Emitting
  // combinations of leftmost positions first yields descending lexicographic
  // order of the bit strings.
  std::vector<PolicyVector> out;
  std::vector<int> choose(static_cast<std::size_t>(nq - 1));
  for (int i = 0; i < nq - 1; ++i) choose[static_cast<std::size_t>(i)] = i;
  const int free_slots = span - 1;
  const int picks = nq - 1;
  while (true) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(span), 0);
    bits.back() = 1;
    for (int pos : choose) bits[static_cast<std::size_t>(pos)] = 1;
    out.push_back(PolicyVector::from_bits(s, std::move(bits)));
    if (picks == 0) break;
    int i = picks - 1;
    while (i >= 0 && choose[static_cast<std::size_t>(i)] ==
                         free_slots - picks + i)
      --i;
    if (i < 0) break;
    ++choose[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < picks; ++j)
      choose[static_cast<std::size_t>(j)] =
          choose[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

PolicyVector edge_policy(int s, int d, int nq) {
  const int span = s - d + 1;
  if (s < d || nq < 1 || nq > span)
    throw DataError("edge policy: infeasible parameters");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(span), 0);
  for (int i = 0; i < nq - 1; ++i) bits[static_cast<std::size_t>(i)] = 1;
  bits.back() = 1;
  return PolicyVector::from_bits(s, std::move(bits));
}

PolicyVector minimal_policy(int s, int d) { return edge_policy(s, d, 1); }

PolicyVector maximal_policy(int s, int d) {
  return edge_policy(s, d, s - d + 1);
}

const char* to_string(TransformModule::Kind kind) {
  return kind == TransformModule::Kind::kInter ? "inter" : "intra";
}

bool ModuleBank::has(TransformModule::Kind kind, int from_level) const {
  for (const TransformModule& m : modules)
    if (m.kind == kind && m.from_level == from_level) return true;
  return false;
}

const TransformModule& ModuleBank::module(TransformModule::Kind kind,
                                          int from_level) const {
  for (const TransformModule& m : modules)
    if (m.kind == kind && m.from_level == from_level) return m;
  throw DataError(std::string("module bank: missing ") + to_string(kind) +
                  " module at level " + std::to_string(from_level));
}

void ModuleBank::put(TransformModule module) {
  for (TransformModule& m : modules) {
    if (m.kind == module.kind && m.from_level == module.from_level) {
      m = std::move(module);
      return;
    }
  }
  modules.push_back(std::move(module));
}

Latent apply_module(const TransformModule& module, const Latent& latent) {
  if (latent.level != module.from_level)
    throw DataError("apply_module: latent level " +
                    std::to_string(latent.level) + " does not match module " +
                    std::to_string(module.from_level));
  if (module.kind == TransformModule::Kind::kInter && !latent.quantized)
    throw DataError("apply_module: inter module requires quantized input");
  if (module.kind == TransformModule::Kind::kIntra && latent.quantized)
    throw DataError("apply_module: intra module requires unquantized input");
  Latent out;
  out.level = module.to_level;
  out.quantized = false;
  out.quant_step = 0.0;
  out.geom = latent.geom;
  out.data = latent.data * module.weight.transpose();
  out.data.rowwise() += module.bias.transpose();
  return out;
}

Latent level_process(const CodecFamily& family, const ModuleBank& bank, int k,
                     bool quantize_here, bool is_destination,
                     const Latent& latent, bool coder_in_loop,
                     Bitstream* out_stream) {
  if (latent.level != k || latent.quantized)
    throw DataError("level_process: expects unquantized latent at level " +
                    std::to_string(k));
  if (is_destination && !quantize_here)
    throw DataError("level_process: destination level must quantize");
  if (!quantize_here)
    return apply_module(bank.module(TransformModule::Kind::kIntra, k), latent);

  Latent state = quantize(family, k, latent);
  if (coder_in_loop) {
    Bitstream stream = encode(state, fit_prob_model(state), family.version);
    state = decode(stream, family);
    if (out_stream) *out_stream = std::move(stream);
  }
  if (is_destination) return state;  // ends with quantization, no module
  return apply_module(bank.module(TransformModule::Kind::kInter, k), state);
}

CascadeResult run_cascade(const CodecFamily& family, const ModuleBank& bank,
                          const CascadePlan& plan, const ImagePlane& image,
                          const CascadeOptions& options) {
  plan.policy.validate();
  if (plan.policy.source_level != plan.source_level ||
      plan.policy.dest_level != plan.dest_level)
    throw DataError("cascade: policy span does not match plan");
  if (!family.has_level(plan.source_level) ||
      !family.has_level(plan.dest_level))
    throw DataError("cascade: plan levels outside family range");

  CascadeResult result;
  const PatchMatrix patches = patchify(image, family.patch_size);
  Latent state = analysis(family, plan.source_level, patches);

  for (int k = plan.source_level; k >= plan.dest_level; --k) {
    if (options.probe_levels.count(k)) {
      ProbeRecord probe;
      probe.level = k;
      probe.quantized_on_path = plan.policy.quantizes_at(k);
      probe.pre = state;
      probe.post = quantize(family, k, state);
      probe.rate_bits = estimate_rate(probe.post, fit_prob_model(probe.post));
      probe.reconstruction = unpatchify(synthesis(family, k, probe.post));
      result.probes.push_back(std::move(probe));
    }
    const bool quantize_here = plan.policy.quantizes_at(k);
    Bitstream stream;
    state = level_process(family, bank, k, quantize_here,
                          /*is_destination=*/k == plan.dest_level, state,
                          options.coder_at_boundaries,
                          options.coder_at_boundaries ? &stream : nullptr);
    if (options.coder_at_boundaries && quantize_here)
      result.link_streams.push_back(std::move(stream));
  }
  result.final_latent = std::move(state);
  return result;
}

std::uint64_t flops_apply_module(const CodecFamily& family,
                                 std::int64_t num_patches) {
  const std::uint64_t m = static_cast<std::uint64_t>(family.latent_dim);
  return static_cast<std::uint64_t>(num_patches) * (2ull * m * m + m);
}

}  // namespace hcf
