#include <doctest.h>

#include <cmath>

#include "hcf/codec.hpp"
#include "hcf/errors.hpp"
#include "hcf/model_io.hpp"
#include "hcf/synth.hpp"
#include "hcf/training.hpp"
#include "support/test_util.hpp"

using namespace hcf;

TEST_SUITE_BEGIN("codec");

namespace {

// Independent oracle: plain triple-loop affine map, no Eigen expressions.
Eigen::MatrixXd naive_affine(const Eigen::MatrixXd& rows,
                             const Eigen::MatrixXd& weight,
                             const Eigen::VectorXd& bias) {
  Eigen::MatrixXd out(rows.rows(), weight.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index i = 0; i < weight.rows(); ++i) {
      double acc = bias(i);
      for (Eigen::Index j = 0; j < weight.cols(); ++j)
        acc += weight(i, j) * rows(r, j);
      out(r, i) = acc;
    }
  }
  return out;
}

// Independent oracle: cyclic Jacobi eigensolver for symmetric matrices.
// Returns eigenvalues in descending order.
std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

}  // namespace

TEST_CASE("identity analysis reproduces the patches") {
  CodecFamily family = test::make_family(2, 4, 1, 2);
  const ImagePlane plane = test::random_plane(6, 4, 1, 17);
  const PatchMatrix patches = patchify(plane, 2);
  const Latent latent = analysis(family, 2, patches);
  CHECK(!latent.quantized);
  CHECK(latent.level == 2);
  CHECK((latent.data - patches.rows).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single averaging row produces the patch mean") {
  CodecFamily family = test::make_family(2, 1, 1, 1);
  family.level(1).analysis_weight =
      Eigen::MatrixXd::Constant(1, 4, 1.0 / 4.0);
  const ImagePlane plane = test::random_plane(4, 4, 1, 23);
  const PatchMatrix patches = patchify(plane, 2);
  const Latent latent = analysis(family, 1, patches);
  for (Eigen::Index r = 0; r < patches.rows.rows(); ++r)
    CHECK(latent.data(r, 0) ==
          doctest::Approx(patches.rows.row(r).mean()).epsilon(1e-14));
}

TEST_CASE("pca reconstruction error equals the discarded component energy") {
  // Train-corpus PCA at the top level (unit gains) against an independent
  // Jacobi eigendecomposition of the patch covariance.
  std::vector<ImagePlane> images;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) {
    images.push_back(synth_image(64, 64, 100 + i));
    ids.push_back("img" + std::to_string(i));
  }
  CodecConfig cfg;
  cfg.patch_size = 8;
  cfg.latent_dim = 16;
  cfg.level_min = 1;
  cfg.level_max = 3;
  const TrainingCorpus corpus =
      TrainingCorpus::from_images(ids, images, cfg.patch_size, cfg.latent_dim, 5);
  const CodecFamily family = init_family(cfg, corpus, "pca-test");

  // covariance with plain loops
  Eigen::MatrixXd all(corpus.total_rows(), 64);
  Eigen::Index at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    all.middleRows(at, p.rows.rows()) = p.rows;
    at += p.rows.rows();
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(64);
  for (Eigen::Index r = 0; r < all.rows(); ++r) mean += all.row(r).transpose();
  mean /= static_cast<double>(all.rows());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(64, 64);
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    const Eigen::VectorXd c = all.row(r).transpose() - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(all.rows());
  const std::vector<double> eig = jacobi_eigenvalues(cov);

  double discarded = 0.0;
  for (std::size_t i = 16; i < eig.size(); ++i) discarded += eig[i];

  // mean reconstruction error at the top level (gains are 1 there)
  double err = 0.0;
  for (const PatchMatrix& p : corpus.patches) {
    const Latent latent = analysis(family, 3, p);
    const PatchMatrix recon = synthesis(family, 3, latent);
    err += (recon.rows - p.rows).squaredNorm();
  }
  err /= static_cast<double>(all.rows());
  CHECK(err == doctest::Approx(discarded).epsilon(1e-8));
}

TEST_CASE("synthesis after analysis is an orthogonal projection") {
  CodecFamily family = test::make_family(2, 2, 1, 1);
  family.level(1).analysis_bias = Eigen::VectorXd::Constant(4, 0.25);
  family.level(1).synthesis_bias = family.level(1).analysis_bias;
  const ImagePlane plane = test::random_plane(8, 8, 1, 31);
  const PatchMatrix patches = patchify(plane, 2);
  const PatchMatrix once = synthesis(family, 1, analysis(family, 1, patches));
  const PatchMatrix twice = synthesis(family, 1, analysis(family, 1, once));
  CHECK((once.rows - twice.rows).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero latent synthesizes to the bias") {
  CodecFamily family = test::make_family(2, 4, 1, 1);
  family.level(1).synthesis_bias = Eigen::VectorXd::LinSpaced(4, 0.1, 0.4);
  const Latent zero =
      test::make_latent(1, 0.0, Eigen::MatrixXd::Zero(3, 4), false);
  const PatchMatrix out = synthesis(family, 1, zero);
  for (Eigen::Index r = 0; r < 3; ++r)
    CHECK((out.rows.row(r).transpose() - family.level(1).synthesis_bias)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("synthesis matches the naive affine oracle") {
  CodecFamily family = test::make_family(2, 3, 1, 1);
  Rng rng(77);
  auto& model = family.level(1);
  for (Eigen::Index i = 0; i < model.synthesis_weight.size(); ++i)
    model.synthesis_weight.data()[i] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < model.synthesis_bias.size(); ++i)
    model.synthesis_bias.data()[i] = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd data(5, 3);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    data.data()[i] = rng.uniform(-2.0, 2.0);
  const Latent latent = test::make_latent(1, 0.0, data, false);
  const PatchMatrix out = synthesis(family, 1, latent);
  const Eigen::MatrixXd expect =
      naive_affine(data, model.synthesis_weight, model.synthesis_bias);
  CHECK((out.rows - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("synthesis rejects a level mismatch") {
  CodecFamily family = test::make_family(2, 4, 1, 2);
  const Latent latent =
      test::make_latent(1, 0.0, Eigen::MatrixXd::Zero(1, 4), false);
  CHECK_THROWS_AS(synthesis(family, 2, latent), DataError);
}

TEST_CASE("quantize rounds to the step grid with ties away from zero") {
  CodecFamily family = test::make_family(1, 1, 1, 1, /*delta_base=*/1.0);
  Eigen::MatrixXd data(4, 1);
  data << 0.4, 0.5, -0.5, -1.49;
  const Latent latent = test::make_latent(1, 0.0, data, false);
  const Latent q = quantize(family, 1, latent);
  CHECK(q.quantized);
  CHECK(q.data(0, 0) == 0.0);
  CHECK(q.data(1, 0) == 1.0);   // tie away from zero
  CHECK(q.data(2, 0) == -1.0);  // tie away from zero
  CHECK(q.data(3, 0) == -1.0);
  const Latent qq = quantize(family, 1, q);
  CHECK(qq.data == q.data);  // idempotent
}

TEST_CASE("quantization error is bounded by half a step") {
  CodecFamily family = test::make_family(2, 4, 1, 3);
  Rng rng(5);
  Eigen::MatrixXd data(64, 4);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    data.data()[i] = rng.uniform(-3.0, 3.0);
  for (int k = 1; k <= 3; ++k) {
    const Latent latent = test::make_latent(k, 0.0, data, false);
    const Latent q = quantize(family, k, latent);
    const double step = family.level(k).quant_step;
    CHECK((q.data - data).cwiseAbs().maxCoeff() <= step / 2 + 1e-15);
    CHECK(latent_on_grid(family, q));
  }
}

TEST_CASE("flop counts follow the analytic formula") {
  CodecFamily family = test::make_family(8, 16, 1, 1);
  CHECK(flops_analysis(family, 1, 1) == 2112);  // 2*16*64 + 64
  CHECK(flops_synthesis(family, 1, 1) == 2112);
  CHECK(flops_analysis(family, 1, 0) == 0);
  CHECK(flops_analysis(family, 1, 10) == 2 * flops_analysis(family, 1, 5));
}

TEST_CASE("analysis and synthesis are exactly linear after bias removal") {
  CodecFamily family = test::make_family(2, 3, 1, 1);
  Rng rng(13);
  auto& model = family.level(1);
  for (Eigen::Index i = 0; i < model.analysis_weight.size(); ++i)
    model.analysis_weight.data()[i] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < model.analysis_bias.size(); ++i)
    model.analysis_bias.data()[i] = rng.uniform(-0.5, 0.5);

  Eigen::MatrixXd u(1, 4), v(1, 4), zero = Eigen::MatrixXd::Zero(1, 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    u(0, i) = rng.uniform(-1.0, 1.0);
    v(0, i) = rng.uniform(-1.0, 1.0);
  }
  const double alpha = 0.7;
  const double beta = -1.3;
  PatchMatrix pm;
  pm.geom = {1, 1, 1, 2, 2, 2};
  const auto run = [&](const Eigen::MatrixXd& rows) {
    PatchMatrix p = pm;
    p.rows = rows;
    return analysis(family, 1, p).data;
  };
  const Eigen::MatrixXd base = run(zero);
  const Eigen::MatrixXd lhs = run(alpha * u + beta * v) - base;
  const Eigen::MatrixXd rhs =
      alpha * (run(u) - base) + beta * (run(v) - base);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("family validation enforces the schedule monotonicity") {
  CodecFamily family = test::make_family(2, 4, 1, 3);
  CHECK_NOTHROW(family.validate());

  CodecFamily bad_lambda = family;
  bad_lambda.level(3).lambda = bad_lambda.level(2).lambda;
  CHECK_THROWS_WITH_AS(bad_lambda.validate(), doctest::Contains("lambda"),
                       DataError);

  CodecFamily bad_step = family;
  bad_step.level(3).quant_step = bad_step.level(2).quant_step;
  CHECK_THROWS_WITH_AS(bad_step.validate(), doctest::Contains("quant step"),
                       DataError);

  CHECK_THROWS_AS(family.level(4), DataError);
}

TEST_CASE("model container roundtrips byte-identically") {
  CodecFamily family = test::make_family(2, 4, 1, 3, 0.5, 0.5, "v-test");
  Rng rng(3);
  for (auto& level : family.levels)
    for (Eigen::Index i = 0; i < level.analysis_weight.size(); ++i)
      level.analysis_weight.data()[i] = rng.uniform(-1.0, 1.0);
  ModuleBank bank = test::identity_bank(family);
  bank.module(TransformModule::Kind::kInter, 2);

  const ModelContainer model{family, bank};
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  const ModelContainer back = parse_model(bytes);
  CHECK(serialize_model(back) == bytes);
  CHECK(back.family.version == "v-test");
  CHECK(back.family.level(2).analysis_weight ==
        family.level(2).analysis_weight);
  CHECK(back.bank.module(TransformModule::Kind::kIntra, 3).weight ==
        bank.module(TransformModule::Kind::kIntra, 3).weight);
}

TEST_SUITE_END();
