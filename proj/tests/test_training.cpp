#include <doctest.h>

#include <cmath>

#include "hcf/errors.hpp"
#include "hcf/model_io.hpp"
#include "hcf/synth.hpp"
#include "hcf/training.hpp"
#include "support/test_util.hpp"

using namespace hcf;

TEST_SUITE_BEGIN("training");

namespace {

TrainingCorpus synth_corpus(int images, int size, std::uint64_t seed,
                            int patch_size = 8, int latent_dim = 16) {
  std::vector<ImagePlane> planes;
  std::vector<std::string> ids;
  for (int i = 0; i < images; ++i) {
    planes.push_back(synth_image(size, size, seed + 100 * i));
    ids.push_back("img" + std::to_string(i));
  }
  return TrainingCorpus::from_images(ids, planes, patch_size, latent_dim,
                                     seed);
}

CodecConfig small_config(int level_max = 3) {
  CodecConfig cfg;
  cfg.patch_size = 8;
  cfg.latent_dim = 16;
  cfg.level_min = 1;
  cfg.level_max = level_max;
  return cfg;
}

double module_objective(const TransformModule& module,
                        const Eigen::MatrixXd& inputs,
                        const Eigen::MatrixXd& targets, double alpha) {
  const Eigen::MatrixXd pred =
      (inputs * module.weight.transpose()).rowwise() + module.bias.transpose();
  return (pred - targets).squaredNorm() + alpha * module.weight.squaredNorm();
}

}  // namespace

TEST_CASE("self-regression recovers the identity") {
  // target equals input at the top level when both sides use the same
  // analysis; with alpha = 0 the ridge solution is W=I, b=0
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 3);
  CodecFamily family = init_family(cfg, corpus, "t");
  family.level(1).analysis_weight = family.level(2).analysis_weight;
  family.level(1).analysis_bias = family.level(2).analysis_bias;
  ModuleBank bank;
  RidgeConfig ridge;
  ridge.alpha = 0.0;
  const TransformModule m =
      fit_intra_module(family, bank, 2, corpus, edge_policy(2, 1, 2), ridge);
  CHECK((m.weight - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() <
        1e-8);
  CHECK(m.bias.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("infinite regularization collapses to the target mean") {
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 5);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;
  ridge.alpha = 1e15;
  const TransformModule m =
      fit_intra_module(family, bank, 2, corpus, edge_policy(2, 1, 2), ridge);
  CHECK(m.weight.cwiseAbs().maxCoeff() < 1e-5);

  // b -> mean of the analysis targets
  Eigen::RowVectorXd target_mean = Eigen::RowVectorXd::Zero(16);
  std::int64_t rows = 0;
  for (const PatchMatrix& p : corpus.patches) {
    const Latent t = analysis(family, 1, p);
    target_mean += t.data.colwise().sum();
    rows += t.data.rows();
  }
  target_mean /= static_cast<double>(rows);
  CHECK((m.bias.transpose() - target_mean).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("plant-and-recover: a known affine map is identified") {
  // make the level-1 analysis an exact affine function of the level-2 one:
  // A1 = G*A2 and a1 = a2, so target = G*input exactly
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 7);
  CodecFamily family = init_family(cfg, corpus, "t");
  Eigen::VectorXd gains(16);
  Rng rng(12);
  for (int i = 0; i < 16; ++i) gains(i) = rng.uniform(0.5, 1.5);
  family.level(1).analysis_weight =
      gains.asDiagonal() * family.level(2).analysis_weight;
  family.level(1).analysis_bias = family.level(2).analysis_bias;

  ModuleBank bank;
  RidgeConfig ridge;
  ridge.alpha = 0.0;
  const TransformModule m =
      fit_intra_module(family, bank, 2, corpus, edge_policy(2, 1, 2), ridge);
  CHECK((m.weight - Eigen::MatrixXd(gains.asDiagonal())).cwiseAbs().maxCoeff() <
        1e-6);
  CHECK(m.bias.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("inter fit converges to the intra fit as the step vanishes") {
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 9);
  CodecFamily family = init_family(cfg, corpus, "t");
  family.level(2).quant_step = 1e-9;  // keeps ordering against level 1
  ModuleBank bank;
  RidgeConfig ridge;
  const PolicyVector ctx = edge_policy(2, 1, 2);
  const TransformModule intra =
      fit_intra_module(family, bank, 2, corpus, ctx, ridge);
  const TransformModule inter =
      fit_inter_module(family, bank, 2, corpus, ctx, ridge);
  CHECK((intra.weight - inter.weight).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((intra.bias - inter.bias).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("coarse quantization recovery stays within the noise level") {
  // the planted map must still be recovered from quantized inputs, up to an
  // error bounded by the quantization noise scale; only strong channels are
  // retained so the noise-to-signal ratio stays small everywhere
  CodecConfig cfg = small_config(2);
  cfg.latent_dim = 4;
  const TrainingCorpus corpus = synth_corpus(6, 64, 11, 8, 4);
  CodecFamily family = init_family(cfg, corpus, "t");
  Eigen::VectorXd gains(4);
  Rng rng(13);
  for (int i = 0; i < 4; ++i) gains(i) = rng.uniform(0.8, 1.2);
  family.level(1).analysis_weight =
      gains.asDiagonal() * family.level(2).analysis_weight;
  family.level(1).analysis_bias = family.level(2).analysis_bias;
  family.level(2).quant_step = 0.05;

  ModuleBank bank;
  RidgeConfig ridge;
  ridge.alpha = 0.0;
  const PolicyVector ctx = edge_policy(2, 1, 2);
  const TransformModule inter =
      fit_inter_module(family, bank, 2, corpus, ctx, ridge);

  // oracle: the same regression run on the dequantized (continuous) inputs
  const TransformModule oracle =
      fit_intra_module(family, bank, 2, corpus, ctx, ridge);
  CHECK((inter.weight - oracle.weight).cwiseAbs().maxCoeff() < 0.05);
  CHECK((inter.bias - oracle.bias).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("all-zero quantized inputs produce the mean map") {
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 15);
  CodecFamily family = init_family(cfg, corpus, "t");
  family.level(2).quant_step = 1e5;  // everything quantizes to zero
  family.level(1).quant_step = 1e6;
  ModuleBank bank;
  RidgeConfig ridge;
  const TransformModule inter = fit_inter_module(family, bank, 2, corpus,
                                                 edge_policy(2, 1, 2), ridge);
  CHECK(inter.weight.cwiseAbs().maxCoeff() < 1e-9);
  // with zero inputs the bias carries the whole prediction: the target mean
  Eigen::RowVectorXd target_mean = Eigen::RowVectorXd::Zero(16);
  std::int64_t rows = 0;
  for (const PatchMatrix& p : corpus.patches) {
    const Latent t = analysis(family, 1, p);
    target_mean += t.data.colwise().sum();
    rows += t.data.rows();
  }
  target_mean /= static_cast<double>(rows);
  CHECK((inter.bias.transpose() - target_mean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("training order violations are rejected") {
  CodecConfig cfg = small_config(3);
  const TrainingCorpus corpus = synth_corpus(4, 64, 17);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;
  CHECK_THROWS_WITH_AS(
      fit_intra_module(family, bank, 2, corpus, edge_policy(3, 1, 2), ridge),
      doctest::Contains("before"), DataError);
}

TEST_CASE("synthesis refit is optimal on the corpus") {
  CodecConfig cfg = small_config(3);
  const TrainingCorpus corpus = synth_corpus(6, 64, 19);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;
  const PolicyVector policy = edge_policy(3, 1, 2);

  SUBCASE("top-level refit never exceeds the pre-refit error") {
    const double before = corpus_synthesis_mse(family, bank, 3, corpus, policy);
    family.level(3) =
        finetune_synthesis(family, bank, 3, corpus, policy, ridge);
    const double after = corpus_synthesis_mse(family, bank, 3, corpus, policy);
    CHECK(after <= before + 1e-12);
  }

  SUBCASE("refit never increases the corpus MSE at any level") {
    for (int k = 3; k > 1; --k) {
      bank.put(fit_intra_module(family, bank, k, corpus, policy, ridge));
      bank.put(fit_inter_module(family, bank, k, corpus, policy, ridge));
    }
    for (int k = 3; k >= 1; --k) {
      const double before =
          corpus_synthesis_mse(family, bank, k, corpus, policy);
      family.level(k) =
          finetune_synthesis(family, bank, k, corpus, policy, ridge);
      const double after =
          corpus_synthesis_mse(family, bank, k, corpus, policy);
      CHECK(after <= before + 1e-12);
    }
  }
}

TEST_CASE("a rank-0 corpus is reproduced exactly by the refit") {
  // one repeated tiled patch: bias plus any weights can reproduce it exactly
  CodecConfig cfg = small_config(1);
  cfg.latent_dim = 4;
  ImagePlane constant = ImagePlane::filled(16, 16, 1, 0.0);
  const ImagePlane tile = test::random_plane(8, 8, 1, 33);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      constant.at(x, y, 0) = tile.at(x % 8, y % 8, 0);
  std::vector<ImagePlane> planes(11, constant);
  std::vector<std::string> ids;
  for (int i = 0; i < 11; ++i) ids.push_back("c" + std::to_string(i));
  const TrainingCorpus corpus =
      TrainingCorpus::from_images(ids, planes, 8, 4, 1);

  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;
  const PolicyVector policy = edge_policy(1, 1, 1);
  family.level(1) = finetune_synthesis(family, bank, 1, corpus, policy, ridge);
  CHECK(corpus_synthesis_mse(family, bank, 1, corpus, policy) < 1e-18);
}

TEST_CASE("train_all is deterministic and complete") {
  CodecConfig cfg = small_config(3);
  const TrainingCorpus corpus = synth_corpus(5, 64, 23);
  RidgeConfig ridge;

  const auto run = [&] {
    CodecFamily family = init_family(cfg, corpus, "t");
    ModuleBank bank;
    train_all(family, bank, corpus, edge_policy(3, 1, 2), ridge);
    return serialize_model({family, bank});
  };
  const auto bytes_a = run();
  const auto bytes_b = run();
  CHECK(bytes_a == bytes_b);  // bit-identical model files

  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  const TrainingReport report =
      train_all(family, bank, corpus, edge_policy(3, 1, 2), ridge);
  for (int k = 2; k <= 3; ++k) {
    CHECK(bank.has(TransformModule::Kind::kInter, k));
    CHECK(bank.has(TransformModule::Kind::kIntra, k));
  }
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows)
    CHECK(row.mse_after_refit <= row.mse_before_refit + 1e-12);
}

TEST_CASE("skipping the fine-tune phase leaves strictly higher error") {
  CodecConfig cfg = small_config(3);
  const TrainingCorpus corpus = synth_corpus(5, 64, 29);
  RidgeConfig ridge;
  const PolicyVector policy = edge_policy(3, 1, 2);

  CodecFamily tuned = init_family(cfg, corpus, "t");
  ModuleBank tuned_bank;
  train_all(tuned, tuned_bank, corpus, policy, ridge);

  CodecFamily raw = init_family(cfg, corpus, "t");
  for (int k = 1; k < 3; ++k) {
    const double with_refit =
        corpus_synthesis_mse(tuned, tuned_bank, k, corpus, policy);
    const double without_refit =
        corpus_synthesis_mse(raw, tuned_bank, k, corpus, policy);
    CHECK(with_refit < without_refit);
  }
}

TEST_CASE("frozen predecessors make refitting a no-op") {
  CodecConfig cfg = small_config(3);
  const TrainingCorpus corpus = synth_corpus(5, 64, 31);
  RidgeConfig ridge;
  const PolicyVector policy = edge_policy(3, 1, 2);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  const TransformModule intra3 =
      fit_intra_module(family, bank, 3, corpus, policy, ridge);
  const TransformModule inter3 =
      fit_inter_module(family, bank, 3, corpus, policy, ridge);
  bank.put(intra3);
  bank.put(inter3);
  bank.put(fit_intra_module(family, bank, 2, corpus, policy, ridge));
  bank.put(fit_inter_module(family, bank, 2, corpus, policy, ridge));

  // refitting level 3 sees unchanged inputs: bit-identical weights
  const TransformModule again =
      fit_intra_module(family, bank, 3, corpus, policy, ridge);
  CHECK(again.weight == intra3.weight);
  CHECK(again.bias == intra3.bias);
}

TEST_CASE("fit residuals beat the trivial zero and identity maps") {
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(5, 64, 37);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;
  const PolicyVector ctx = edge_policy(2, 1, 2);
  const TransformModule m =
      fit_intra_module(family, bank, 2, corpus, ctx, ridge);

  Eigen::MatrixXd inputs(corpus.total_rows(), 16);
  Eigen::MatrixXd targets(corpus.total_rows(), 16);
  Eigen::Index at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    inputs.middleRows(at, p.rows.rows()) =
        cascade_state(family, bank, 2, p, ctx).data;
    targets.middleRows(at, p.rows.rows()) = analysis(family, 1, p).data;
    at += p.rows.rows();
  }
  const double fitted = module_objective(m, inputs, targets, 0.0);
  CHECK(fitted <= targets.squaredNorm() + 1e-9);             // zero map
  CHECK(fitted <= (inputs - targets).squaredNorm() + 1e-9);  // identity map
}

TEST_CASE("the normal equations admit no descent direction") {
  CodecConfig cfg = small_config(2);
  const TrainingCorpus corpus = synth_corpus(4, 64, 41);
  CodecFamily family = init_family(cfg, corpus, "t");
  ModuleBank bank;
  RidgeConfig ridge;  // alpha = 1e-4
  const PolicyVector ctx = edge_policy(2, 1, 2);
  const TransformModule m =
      fit_intra_module(family, bank, 2, corpus, ctx, ridge);

  Eigen::MatrixXd inputs(corpus.total_rows(), 16);
  Eigen::MatrixXd targets(corpus.total_rows(), 16);
  Eigen::Index at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    inputs.middleRows(at, p.rows.rows()) =
        cascade_state(family, bank, 2, p, ctx).data;
    targets.middleRows(at, p.rows.rows()) = analysis(family, 1, p).data;
    at += p.rows.rows();
  }
  const double base = module_objective(m, inputs, targets, ridge.alpha);
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    TransformModule perturbed = m;
    for (Eigen::Index i = 0; i < perturbed.weight.size(); ++i)
      perturbed.weight.data()[i] +=
          1e-5 * (rng.next_u64() & 1 ? 1.0 : -1.0) * rng.next_double();
    const double value =
        module_objective(perturbed, inputs, targets, ridge.alpha);
    CHECK(value >= base - 1e-9);
  }
}

TEST_CASE("corpus well-posedness is enforced") {
  std::vector<ImagePlane> planes = {synth_image(8, 8, 1)};
  std::vector<std::string> ids = {"tiny"};
  CHECK_THROWS_WITH_AS(TrainingCorpus::from_images(ids, planes, 8, 16, 1),
                       doctest::Contains("10*M"), DataError);
}

TEST_SUITE_END();
