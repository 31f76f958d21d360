#include <doctest.h>

#include "hcf/config.hpp"
#include "hcf/errors.hpp"

using namespace hcf;

TEST_SUITE_BEGIN("config");

namespace {

const char* kSample = R"(# demo experiment
[codec]
patch_size = 8
latent_dim = 16
level_min = 1
level_max = 6
delta_base = 0.48
delta_ratio = 0.5
lambda_base = 0.01
lambda_ratio = 4.0

[training]
corpus = data/train
seed = 7
alpha = 1e-4
policy = edge
n_q = 2

[evaluation]
corpus = data/eval
source_level = 6
target_levels = 1,2,3
n_q = 2
policies = all
frameworks = hcf,drf,ssf
metrics = psnr,msssim
probe_levels = auto

[output]
directory = out
formats = csv,json
)";

}  // namespace

TEST_CASE("sections and typed values parse") {
  const ExperimentConfig cfg = ExperimentConfig::parse_text(kSample);
  CHECK(cfg.codec.patch_size == 8);
  CHECK(cfg.codec.latent_dim == 16);
  CHECK(cfg.codec.delta_base == 0.48);
  CHECK(cfg.training.seed == 7);
  CHECK(cfg.training.alpha == 1e-4);
  CHECK(cfg.evaluation.target_levels == std::vector<int>{1, 2, 3});
  CHECK(cfg.evaluation.frameworks ==
        std::vector<std::string>{"hcf", "drf", "ssf"});
  CHECK(cfg.output.formats == std::vector<std::string>{"csv", "json"});
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::parse_text("[codec]\npatch_sizes = 8\n"),
      doctest::Contains("unknown key"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("[coddec]\n"),
                       doctest::Contains("unknown section"), ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::parse_text("[codec]\npatch_size = eight\n"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::parse_text("[codec]\npatch_size = 8\npatch_size = 8\n"),
      ConfigError);
}

TEST_CASE("policy literals are validated at load time") {
  std::string text = kSample;
  const auto replace = [&](const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
  };
  replace("policies = all", "policies = 10010");  // destination bit unset
  CHECK_THROWS_AS(ExperimentConfig::parse_text(text), DataError);
}

TEST_CASE("training policy resolves over the family span") {
  ExperimentConfig cfg = ExperimentConfig::parse_text(kSample);
  CHECK(cfg.training_policy().to_string() == "100001");
  cfg.training.policy = "110001";
  CHECK(cfg.training_policy().to_string() == "110001");
  cfg.training.policy = "11001";  // span does not reach level_min
  CHECK_THROWS_AS(cfg.training_policy(), ConfigError);
}

TEST_CASE("round-trip serialization is exact") {
  const ExperimentConfig cfg = ExperimentConfig::parse_text(kSample);
  const std::string canonical = cfg.serialize();
  const ExperimentConfig back = ExperimentConfig::parse_text(canonical);
  CHECK(back.serialize() == canonical);
  CHECK(back.hash() == cfg.hash());
}

TEST_CASE("hash is stable and value sensitive") {
  const ExperimentConfig a = ExperimentConfig::parse_text(kSample);
  ExperimentConfig b = a;
  CHECK(a.hash() == b.hash());
  b.training.seed = 8;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("missing corpus directories are named in the error") {
  const ExperimentConfig cfg = ExperimentConfig::parse_text(kSample);
  CHECK_THROWS_WITH_AS(cfg.check_paths(true, false),
                       doctest::Contains("training.corpus"), ConfigError);
  CHECK_THROWS_WITH_AS(cfg.check_paths(false, true),
                       doctest::Contains("evaluation.corpus"), ConfigError);
}

TEST_CASE("schedule sanity is enforced") {
  std::string text = kSample;
  const auto replace = [&](const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
  };
  replace("delta_ratio = 0.5", "delta_ratio = 1.5");
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text(text),
                       doctest::Contains("delta"), ConfigError);
}

TEST_SUITE_END();
