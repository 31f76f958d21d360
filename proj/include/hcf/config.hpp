#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hcf/training.hpp"

namespace hcf {

// Experiment configuration, parsed from an INI-style file with [codec],
// [training], [evaluation] and [output] sections. Unknown sections or keys
// are rejected so experiments cannot silently drift.
struct ExperimentConfig {
  CodecConfig codec;

  struct Training {
    std::string corpus;
    std::uint64_t seed = 7;
    double alpha = 1e-4;
    std::string policy = "edge";  // "edge" or an explicit bit string
    int nq = 2;
  } training;

  struct Evaluation {
    std::string corpus;
    int source_level = 6;
    std::vector<int> target_levels = {1, 2, 3};
    std::vector<int> nq_list = {2};
    std::vector<std::string> policies = {"all"};  // "all" or explicit literals
    std::vector<std::string> frameworks = {"hcf", "drf", "ssf"};
    std::vector<std::string> metrics = {"psnr", "msssim"};
    std::string probe_levels = "auto";  // "auto" or comma-separated levels
  } evaluation;

  struct Output {
    std::string directory = "out";
    std::vector<std::string> formats = {"csv", "json"};
  } output;

  // Canonical text form; parse(serialize()) reproduces the config exactly.
  std::string serialize() const;

  // FNV-1a hash of the canonical form, hex-encoded; stamped into reports.
  std::string hash() const;

  static ExperimentConfig parse_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  // Resolves the training policy over the family's level span.
  PolicyVector training_policy() const;

  // Existence checks for referenced paths (corpus directories).
  void check_paths(bool need_training, bool need_evaluation) const;
};

}  // namespace hcf
