#include "hcf/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hcf/errors.hpp"
#include "hcf/rng.hpp"

namespace hcf {

namespace {

namespace fs = std::filesystem;

// Stacks the cascade states of every corpus image at level k into one
// regression input matrix.
Eigen::MatrixXd stacked_states(const CodecFamily& family,
                               const ModuleBank& bank, int k,
                               const TrainingCorpus& corpus,
                               const PolicyVector& policy, bool quantized) {
  std::int64_t rows = 0;
  for (const PatchMatrix& p : corpus.patches) rows += p.rows.rows();
  Eigen::MatrixXd out(rows, family.latent_dim);
  std::int64_t at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    Latent state = cascade_state(family, bank, k, p, policy);
    if (quantized) state = quantize(family, k, state);
    out.middleRows(at, state.data.rows()) = state.data;
    at += state.data.rows();
  }
  return out;
}

Eigen::MatrixXd stacked_analysis_targets(const CodecFamily& family, int k,
                                         const TrainingCorpus& corpus) {
  std::int64_t rows = 0;
  for (const PatchMatrix& p : corpus.patches) rows += p.rows.rows();
  Eigen::MatrixXd out(rows, family.latent_dim);
  std::int64_t at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    const Latent target = analysis(family, k, p);
    out.middleRows(at, target.data.rows()) = target.data;
    at += target.data.rows();
  }
  return out;
}

Eigen::MatrixXd stacked_patches(const TrainingCorpus& corpus) {
  std::int64_t rows = 0;
  for (const PatchMatrix& p : corpus.patches) rows += p.rows.rows();
  if (rows == 0) throw DataError("training corpus is empty");
  Eigen::MatrixXd out(rows, corpus.patches.front().rows.cols());
  std::int64_t at = 0;
  for (const PatchMatrix& p : corpus.patches) {
    out.middleRows(at, p.rows.rows()) = p.rows;
    at += p.rows.rows();
  }
  return out;
}

// Ridge regression with the penalty on the weights only: center both sides,
// solve the regularized normal equations, recover the bias afterwards.
// Returns weight (out_dim x in_dim) and bias (out_dim).
void ridge_solve(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                 double alpha, double tolerance, Eigen::MatrixXd* weight,
                 Eigen::VectorXd* bias) {
  const Eigen::RowVectorXd in_mean = inputs.colwise().mean();
  const Eigen::RowVectorXd out_mean = targets.colwise().mean();
  const Eigen::MatrixXd in_c = inputs.rowwise() - in_mean;
  const Eigen::MatrixXd out_c = targets.rowwise() - out_mean;

  Eigen::MatrixXd gram = in_c.transpose() * in_c;
  gram.diagonal().array() += alpha;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > tolerance * std::max(max_eig, 1.0)))
    throw NumericError(
        "ridge regression: rank-deficient system beyond the alpha rescue "
        "(condition number " +
        std::to_string(max_eig / std::max(min_eig, 1e-300)) + ")");

  const Eigen::MatrixXd wt = eig.eigenvectors() *
                             eig.eigenvalues().cwiseInverse().asDiagonal() *
                             eig.eigenvectors().transpose() *
                             (in_c.transpose() * out_c);
  *weight = wt.transpose();
  *bias = out_mean.transpose() - *weight * in_mean.transpose();
}

TransformModule fit_module(const CodecFamily& family, const ModuleBank& bank,
                           int k, const TrainingCorpus& corpus,
                           const PolicyVector& policy_context,
                           const RidgeConfig& cfg, TransformModule::Kind kind) {
  if (k <= family.level_min || k > family.level_max)
    throw DataError("module fit: level " + std::to_string(k) +
                    " has no successor in the family");
  // Sequential schedule: every level above k must already be in the bank for
  // the kinds the context policy needs.
  for (int j = k + 1; j <= policy_context.source_level; ++j) {
    const auto needed = policy_context.quantizes_at(j)
                            ? TransformModule::Kind::kInter
                            : TransformModule::Kind::kIntra;
    if (!bank.has(needed, j))
      throw DataError("module fit: level " + std::to_string(j) +
                      " must be fitted before level " + std::to_string(k));
  }
  const Eigen::MatrixXd inputs =
      stacked_states(family, bank, k, corpus, policy_context,
                     kind == TransformModule::Kind::kInter);
  const Eigen::MatrixXd targets = stacked_analysis_targets(family, k - 1, corpus);

  TransformModule module;
  module.kind = kind;
  module.from_level = k;
  module.to_level = k - 1;
  ridge_solve(inputs, targets, cfg.alpha, cfg.tolerance, &module.weight,
              &module.bias);
  return module;
}

double regression_residual(const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets,
                           const TransformModule& module) {
  const Eigen::MatrixXd pred =
      (inputs * module.weight.transpose()).rowwise() +
      module.bias.transpose();
  return (pred - targets).squaredNorm() /
         static_cast<double>(targets.rows());
}

}  // namespace

std::int64_t TrainingCorpus::total_rows() const {
  std::int64_t rows = 0;
  for (const PatchMatrix& p : patches) rows += p.rows.rows();
  return rows;
}

TrainingCorpus TrainingCorpus::from_images(
    std::vector<std::string> ids, const std::vector<ImagePlane>& images,
    int patch_size, int latent_dim, std::uint64_t seed) {
  if (ids.size() != images.size())
    throw DataError("training corpus: id/image count mismatch");
  // Deterministic shuffle of the image order fixes the floating-point
  // accumulation order for bit-identical reruns.
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);

  TrainingCorpus corpus;
  corpus.seed = seed;
  for (std::size_t i : order) {
    corpus.ids.push_back(ids[i]);
    corpus.patches.push_back(patchify(images[i], patch_size));
  }
  if (corpus.total_rows() < 10 * latent_dim)
    throw DataError("training corpus: needs at least 10*M patch rows, have " +
                    std::to_string(corpus.total_rows()));
  return corpus;
}

TrainingCorpus TrainingCorpus::from_directory(const std::string& dir,
                                              int patch_size, int latent_dim,
                                              std::uint64_t seed) {
  if (!fs::is_directory(dir))
    throw DataError("training corpus: not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") names.push_back(entry.path().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw DataError("training corpus: no .pgm/.ppm files in " + dir);
  std::vector<ImagePlane> images;
  std::vector<std::string> ids;
  for (const std::string& name : names) {
    images.push_back(load_image(name));
    ids.push_back(fs::path(name).filename().string());
  }
  return from_images(std::move(ids), images, patch_size, latent_dim, seed);
}

CodecFamily init_family(const CodecConfig& config,
                        const TrainingCorpus& corpus,
                        const std::string& version) {
  const int b2 = config.patch_size * config.patch_size;
  const int m = config.latent_dim;
  if (m > b2)
    throw ConfigError("codec config: latent dim must not exceed B^2");

  const Eigen::MatrixXd all = stacked_patches(corpus);
  if (all.cols() != b2)
    throw DataError("init_family: corpus patch size mismatch");
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::MatrixXd centered = all.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(all.rows());

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Top-M principal directions, eigenvalues descending, sign fixed so the
  // largest-magnitude component of each direction is positive.
  Eigen::MatrixXd basis(m, b2);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd v = eig.eigenvectors().col(b2 - 1 - i);
    Eigen::Index arg_max = 0;
    v.cwiseAbs().maxCoeff(&arg_max);
    if (v(arg_max) < 0.0) v = -v;
    basis.row(i) = v.transpose();
  }

  CodecFamily family;
  family.patch_size = config.patch_size;
  family.latent_dim = m;
  family.level_min = config.level_min;
  family.level_max = config.level_max;
  family.version = version;
  const int s = config.level_max;
  for (int k = config.level_min; k <= config.level_max; ++k) {
    LevelModel model;
    model.level = k;
    model.lambda = config.lambda_base * std::pow(config.lambda_ratio, k);
    model.quant_step =
        config.delta_base * std::pow(config.delta_ratio, k - config.level_min);
    Eigen::VectorXd gains(m);
    for (int i = 0; i < m; ++i)
      gains(i) = 1.0 / (1.0 + static_cast<double>(i) * (s - k) / m);
    model.analysis_weight = gains.asDiagonal() * basis;
    model.analysis_bias = mean.transpose();
    model.synthesis_weight =
        basis.transpose() * gains.cwiseInverse().asDiagonal();
    model.synthesis_bias = mean.transpose();
    family.levels.push_back(std::move(model));
  }
  family.validate();
  return family;
}

Latent cascade_state(const CodecFamily& family, const ModuleBank& bank, int k,
                     const PatchMatrix& patches, const PolicyVector& policy) {
  if (k > policy.source_level || k < policy.dest_level)
    throw DataError("cascade_state: level outside policy span");
  Latent state = analysis(family, policy.source_level, patches);
  for (int j = policy.source_level; j > k; --j) {
    if (policy.quantizes_at(j)) {
      state = quantize(family, j, state);
      state = apply_module(bank.module(TransformModule::Kind::kInter, j), state);
    } else {
      state = apply_module(bank.module(TransformModule::Kind::kIntra, j), state);
    }
  }
  return state;
}

TransformModule fit_intra_module(const CodecFamily& family,
                                 const ModuleBank& bank, int k,
                                 const TrainingCorpus& corpus,
                                 const PolicyVector& policy_context,
                                 const RidgeConfig& cfg) {
  return fit_module(family, bank, k, corpus, policy_context, cfg,
                    TransformModule::Kind::kIntra);
}

TransformModule fit_inter_module(const CodecFamily& family,
                                 const ModuleBank& bank, int k,
                                 const TrainingCorpus& corpus,
                                 const PolicyVector& policy_context,
                                 const RidgeConfig& cfg) {
  return fit_module(family, bank, k, corpus, policy_context, cfg,
                    TransformModule::Kind::kInter);
}

LevelModel finetune_synthesis(const CodecFamily& family,
                              const ModuleBank& bank, int k,
                              const TrainingCorpus& corpus,
                              const PolicyVector& policy,
                              const RidgeConfig& cfg) {
  (void)cfg;  // the distortion-only refit is solved exactly, no ridge term
  const Eigen::MatrixXd inputs =
      stacked_states(family, bank, k, corpus, policy, /*quantized=*/true);
  const Eigen::MatrixXd targets = stacked_patches(corpus);

  // Exact least squares via a complete orthogonal decomposition of the
  // bias-augmented design; minimum-norm on rank-deficient inputs, and never
  // worse than the incoming synthesis on the corpus.
  Eigen::MatrixXd design(inputs.rows(), inputs.cols() + 1);
  design.leftCols(inputs.cols()) = inputs;
  design.col(inputs.cols()).setOnes();
  const Eigen::MatrixXd sol =
      design.completeOrthogonalDecomposition().solve(targets);

  LevelModel model = family.level(k);
  model.synthesis_weight = sol.topRows(inputs.cols()).transpose();
  model.synthesis_bias = sol.row(inputs.cols()).transpose();
  return model;
}

double corpus_synthesis_mse(const CodecFamily& family, const ModuleBank& bank,
                            int k, const TrainingCorpus& corpus,
                            const PolicyVector& policy) {
  double acc = 0.0;
  std::int64_t count = 0;
  for (const PatchMatrix& p : corpus.patches) {
    Latent state = cascade_state(family, bank, k, p, policy);
    state = quantize(family, k, state);
    const PatchMatrix recon = synthesis(family, k, state);
    acc += (recon.rows - p.rows).squaredNorm();
    count += p.rows.size();
  }
  return acc / static_cast<double>(count);
}

TrainingReport train_all(CodecFamily& family, ModuleBank& bank,
                         const TrainingCorpus& corpus,
                         const PolicyVector& policy, const RidgeConfig& cfg) {
  if (policy.source_level != family.level_max ||
      policy.dest_level != family.level_min)
    throw DataError("train_all: policy span must cover the family range");

  TrainingReport report;
  const int s = family.level_max;
  const int d = family.level_min;

  for (int k = s; k > d; --k) {
    TrainingReport::LevelRow row;
    row.level = k;
    const TransformModule intra =
        fit_intra_module(family, bank, k, corpus, policy, cfg);
    const TransformModule inter =
        fit_inter_module(family, bank, k, corpus, policy, cfg);
    const Eigen::MatrixXd targets =
        stacked_analysis_targets(family, k - 1, corpus);
    row.intra_residual = regression_residual(
        stacked_states(family, bank, k, corpus, policy, false), targets, intra);
    row.inter_residual = regression_residual(
        stacked_states(family, bank, k, corpus, policy, true), targets, inter);
    bank.put(intra);
    bank.put(inter);
    report.rows.push_back(row);
  }

  std::size_t row_at = 0;
  for (int k = s; k >= d; --k) {
    const double before = corpus_synthesis_mse(family, bank, k, corpus, policy);
    family.level(k) = finetune_synthesis(family, bank, k, corpus, policy, cfg);
    const double after = corpus_synthesis_mse(family, bank, k, corpus, policy);
    if (k > d) {
      report.rows[row_at].mse_before_refit = before;
      report.rows[row_at].mse_after_refit = after;
      ++row_at;
    } else {
      TrainingReport::LevelRow row;
      row.level = k;
      row.mse_before_refit = before;
      row.mse_after_refit = after;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace hcf
