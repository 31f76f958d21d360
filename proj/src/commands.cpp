#include "hcf/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "hcf/errors.hpp"

namespace hcf {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

std::string provenance_line(const CommandContext& ctx,
                            const std::string& version) {
  return "# model_version=" + version + " config_hash=" + ctx.config.hash() +
         " seed=" + std::to_string(ctx.seed) + "\n";
}

std::uint64_t effective_seed(const CommandContext& ctx) {
  return ctx.seed_overridden ? ctx.seed : ctx.config.training.seed;
}

std::string model_version_tag(const CommandContext& ctx, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const std::string text = ctx.config.hash() + ":" + std::to_string(seed);
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "hcf1-%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ModelContainer load_model_checked(const CommandContext& ctx) {
  if (ctx.model_path.empty())
    throw ConfigError("this command needs --model pointing at a trained model");
  return load_model(ctx.model_path);
}

RDPoint mean_rd(const std::vector<RDPoint>& points) {
  RDPoint mean;
  for (const RDPoint& p : points) {
    mean.bpp += p.bpp;
    mean.psnr += p.psnr;
    mean.msssim_db += p.msssim_db;
  }
  const double n = static_cast<double>(points.size());
  mean.bpp /= n;
  mean.psnr /= n;
  mean.msssim_db /= n;
  return mean;
}

// Corpus-mean RD points of HCF runs from `source` down to each target level;
// element i holds target level lowest_target + i. The edge policy's nq is
// clamped to the span.
std::vector<RDPoint> hcf_level_points(const CodecFamily& family,
                                      const ModuleBank& bank, int source,
                                      int lowest_target, int nq,
                                      const EvalCorpus& corpus, int jobs) {
  struct Cell {
    std::vector<RDPoint> per_image;
  };
  std::vector<Cell> cells(static_cast<std::size_t>(source - lowest_target + 1));
  for (auto& c : cells) c.per_image.resize(corpus.images.size());
  parallel_for(corpus.images.size(), jobs, [&](std::size_t i) {
    for (int k = lowest_target; k <= source; ++k) {
      const PolicyVector policy =
          edge_policy(source, k, std::min(nq, source - k + 1));
      cells[static_cast<std::size_t>(k - lowest_target)].per_image[i] =
          run_hcf(family, bank, policy, corpus.images[i]).rd;
    }
  });
  std::vector<RDPoint> points;
  for (const Cell& c : cells) points.push_back(mean_rd(c.per_image));
  return points;
}

RDCurve hcf_level_curve(const CodecFamily& family, const ModuleBank& bank,
                        int source, int lowest_target, int nq,
                        const EvalCorpus& corpus, const std::string& label,
                        int jobs) {
  return RDCurve::make(label, hcf_level_points(family, bank, source,
                                               lowest_target, nq, corpus, jobs));
}

// Quality of a per-level point set at an arbitrary rate: piecewise-linear
// interpolation over (bpp, psnr), boundary segments extrapolated.
double psnr_at_rate(const std::vector<RDPoint>& points, double bpp) {
  std::vector<RDPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  std::size_t hi = 1;
  while (hi + 1 < sorted.size() && sorted[hi].bpp < bpp) ++hi;
  const RDPoint& a = sorted[hi - 1];
  const RDPoint& b = sorted[hi];
  const double t = (bpp - a.bpp) / (b.bpp - a.bpp);
  return a.psnr + t * (b.psnr - a.psnr);
}

ModuleBank override_bank(const ModuleBank& bank, TransformModule::Kind keep) {
  // Single-module variant: both slots carry the kept kind's weights; the slot
  // kind stays as declared so the cascade's kind checks still pass.
  ModuleBank out;
  for (const TransformModule& m : bank.modules) {
    if (m.kind == keep) {
      out.put(m);
      TransformModule other = m;
      other.kind = keep == TransformModule::Kind::kInter
                       ? TransformModule::Kind::kIntra
                       : TransformModule::Kind::kInter;
      out.put(other);
    }
  }
  return out;
}

}  // namespace

EvalCorpus load_eval_corpus(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw DataError("evaluation corpus: not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") names.push_back(entry.path().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw DataError("evaluation corpus: no .pgm/.ppm files in " + dir);
  EvalCorpus corpus;
  for (const std::string& name : names) {
    corpus.ids.push_back(fs::path(name).filename().string());
    corpus.images.push_back(load_image(name));
  }
  return corpus;
}

void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  int workers = jobs > 0 ? jobs
                         : static_cast<int>(std::max(
                               1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

TrainingReport cmd_train(const CommandContext& ctx) {
  ctx.config.check_paths(/*need_training=*/true, /*need_evaluation=*/false);
  const std::uint64_t seed = effective_seed(ctx);
  const CodecConfig& cc = ctx.config.codec;
  const TrainingCorpus corpus = TrainingCorpus::from_directory(
      ctx.config.training.corpus, cc.patch_size, cc.latent_dim, seed);
  const std::string version = model_version_tag(ctx, seed);

  CodecFamily family = init_family(cc, corpus, version);
  ModuleBank bank;
  RidgeConfig ridge;
  ridge.alpha = ctx.config.training.alpha;
  const TrainingReport report =
      train_all(family, bank, corpus, ctx.config.training_policy(), ridge);

  const std::string model_path =
      ctx.model_path.empty() ? ctx.out_dir + "/model.hcf" : ctx.model_path;
  fs::create_directories(fs::path(model_path).parent_path());
  save_model({family, bank}, model_path);

  std::string csv = provenance_line(ctx, version);
  csv +=
      "level,intra_residual,inter_residual,mse_before_refit,mse_after_refit,"
      "refit_improved\n";
  for (const auto& row : report.rows) {
    csv += std::to_string(row.level) + "," + fmt(row.intra_residual) + "," +
           fmt(row.inter_residual) + "," + fmt(row.mse_before_refit) + "," +
           fmt(row.mse_after_refit) + "," +
           (row.mse_after_refit <= row.mse_before_refit + 1e-15 ? "1" : "0") +
           "\n";
  }
  write_text(ctx.out_dir + "/train_report.csv", csv);

  std::cout << "trained model " << version << " -> " << model_path << "\n";
  for (const auto& row : report.rows)
    std::cout << "  level " << row.level << ": intra residual "
              << fmt(row.intra_residual) << ", inter residual "
              << fmt(row.inter_residual) << ", refit MSE "
              << fmt(row.mse_before_refit) << " -> "
              << fmt(row.mse_after_refit) << "\n";
  return report;
}

std::vector<SweepRow> cmd_sweep(const CommandContext& ctx) {
  ctx.config.check_paths(false, /*need_evaluation=*/true);
  const ModelContainer model = load_model_checked(ctx);
  const EvalCorpus corpus = load_eval_corpus(ctx.config.evaluation.corpus);
  const int s = ctx.config.evaluation.source_level;

  std::vector<SweepRow> rows;
  for (int nq : ctx.config.evaluation.nq_list) {
    for (int d : ctx.config.evaluation.target_levels) {
      std::vector<PolicyVector> policies;
      if (ctx.config.evaluation.policies.size() == 1 &&
          ctx.config.evaluation.policies[0] == "all") {
        policies = enumerate_policies(s, d, nq);
      } else {
        for (const std::string& lit : ctx.config.evaluation.policies) {
          PolicyVector p = PolicyVector::parse(lit, s);
          if (p.dest_level != d) continue;  // literals bind to one span
          policies.push_back(std::move(p));
        }
        if (policies.empty()) continue;
      }
      const PolicyVector edge = edge_policy(s, d, nq);
      const PolicyVector pi_min = minimal_policy(s, d);
      const PolicyVector pi_max = maximal_policy(s, d);
      const std::set<int> ref_probe_levels = {d, std::min(d + 1, s)};

      struct PerImage {
        std::vector<RDPoint> rd;        // per policy
        std::vector<double> eta_psnr;   // per policy
        std::vector<double> eta_msssim;
      };
      std::vector<PerImage> per_image(corpus.images.size());
      parallel_for(corpus.images.size(), ctx.jobs, [&](std::size_t i) {
        const ImagePlane& image = corpus.images[i];
        const StageResult min_run =
            run_hcf(model.family, model.bank, pi_min, image, ref_probe_levels);
        const StageResult max_run =
            run_hcf(model.family, model.bank, pi_max, image, ref_probe_levels);
        PerImage& out = per_image[i];
        for (const PolicyVector& policy : policies) {
          const StageResult run =
              run_hcf(model.family, model.bank, policy, image, {d});
          out.rd.push_back(run.rd);
          out.eta_psnr.push_back(rqsi_from_probes(
              MetricAxis::kPsnr, image, run.probes, min_run.probes,
              max_run.probes, d));
          out.eta_msssim.push_back(rqsi_from_probes(
              MetricAxis::kMsssimDb, image, run.probes, min_run.probes,
              max_run.probes, d));
        }
      });

      const std::size_t first_row = rows.size();
      for (std::size_t p = 0; p < policies.size(); ++p) {
        SweepRow row;
        row.nq = nq;
        row.target_level = d;
        row.policy = policies[p].to_string();
        row.is_edge = policies[p] == edge;
        std::vector<RDPoint> rd;
        for (const PerImage& img : per_image) {
          rd.push_back(img.rd[p]);
          row.eta_psnr += img.eta_psnr[p];
          row.eta_msssim += img.eta_msssim[p];
        }
        const RDPoint mean = mean_rd(rd);
        row.bpp = mean.bpp;
        row.psnr = mean.psnr;
        row.msssim_db = mean.msssim_db;
        row.eta_psnr /= static_cast<double>(per_image.size());
        row.eta_msssim /= static_cast<double>(per_image.size());
        rows.push_back(std::move(row));
      }
      // mark the per-(nq, d) RQSI minimizers
      std::size_t min_p = first_row;
      std::size_t min_m = first_row;
      for (std::size_t r = first_row; r < rows.size(); ++r) {
        if (rows[r].eta_psnr < rows[min_p].eta_psnr) min_p = r;
        if (rows[r].eta_msssim < rows[min_m].eta_msssim) min_m = r;
      }
      rows[min_p].rqsi_min_psnr = true;
      rows[min_m].rqsi_min_msssim = true;
    }
  }

  std::string csv = provenance_line(ctx, model.family.version);
  csv +=
      "n_q,target_level,policy,is_edge,bpp,psnr,msssim_db,eta_psnr,"
      "eta_msssim,rqsi_min_psnr,rqsi_min_msssim\n";
  for (const SweepRow& r : rows) {
    csv += std::to_string(r.nq) + "," + std::to_string(r.target_level) + "," +
           r.policy + "," + (r.is_edge ? "1" : "0") + "," + fmt(r.bpp) + "," +
           fmt(r.psnr) + "," + fmt(r.msssim_db) + "," + fmt(r.eta_psnr) + "," +
           fmt(r.eta_msssim) + "," + (r.rqsi_min_psnr ? "1" : "0") + "," +
           (r.rqsi_min_msssim ? "1" : "0") + "\n";
  }
  write_text(ctx.out_dir + "/sweep.csv", csv);

  json report;
  report["model_version"] = model.family.version;
  report["config_hash"] = ctx.config.hash();
  json out_rows = json::array();
  for (const SweepRow& r : rows)
    out_rows.push_back({{"n_q", r.nq},
                        {"target_level", r.target_level},
                        {"policy", r.policy},
                        {"is_edge", r.is_edge},
                        {"bpp", r.bpp},
                        {"psnr", r.psnr},
                        {"msssim_db", r.msssim_db},
                        {"eta_psnr", r.eta_psnr},
                        {"eta_msssim", r.eta_msssim},
                        {"rqsi_min_psnr", r.rqsi_min_psnr},
                        {"rqsi_min_msssim", r.rqsi_min_msssim}});
  report["rows"] = out_rows;
  write_text(ctx.out_dir + "/sweep.json", report.dump(2) + "\n");

  std::cout << "sweep: " << rows.size() << " policy rows -> " << ctx.out_dir
            << "/sweep.csv\n";
  return rows;
}

CompareOutput cmd_compare(const CommandContext& ctx) {
  ctx.config.check_paths(false, true);
  const ModelContainer model = load_model_checked(ctx);
  const EvalCorpus corpus = load_eval_corpus(ctx.config.evaluation.corpus);
  const int s = ctx.config.evaluation.source_level;
  const int d_low = *std::min_element(ctx.config.evaluation.target_levels.begin(),
                                      ctx.config.evaluation.target_levels.end());
  const int nq = ctx.config.evaluation.nq_list.front();

  CompareOutput out;
  out.comparison = compare_frameworks(model.family, model.bank, s, d_low, nq,
                                      corpus.images);

  const auto curve_of = [&](const std::string& framework, int d) {
    std::vector<RDPoint> points;
    for (const auto& row : out.comparison.rd_rows)
      if (row.framework == framework && row.level >= d)
        points.push_back(row.rd);
    return RDCurve::make(framework, std::move(points));
  };
  for (int d : ctx.config.evaluation.target_levels) {
    const RDCurve hcf = curve_of("hcf", d);
    for (const std::string& framework : ctx.config.evaluation.frameworks) {
      if (framework == "hcf") continue;
      const RDCurve other = curve_of(framework, d);
      BdRow row;
      row.target_level = d;
      row.framework = framework;
      row.bd_rate_psnr = bd_rate(hcf, other, MetricAxis::kPsnr);
      row.bd_rate_msssim = bd_rate(hcf, other, MetricAxis::kMsssimDb);
      row.bd_psnr = bd_quality(hcf, other, MetricAxis::kPsnr);
      row.bd_msssim = bd_quality(hcf, other, MetricAxis::kMsssimDb);
      out.bd_rows.push_back(row);
    }
  }

  std::string rd_csv = provenance_line(ctx, model.family.version);
  rd_csv += "framework,level,bpp,psnr,msssim_db\n";
  for (const auto& row : out.comparison.rd_rows)
    rd_csv += row.framework + "," + std::to_string(row.level) + "," +
              fmt(row.rd.bpp) + "," + fmt(row.rd.psnr) + "," +
              fmt(row.rd.msssim_db) + "\n";
  write_text(ctx.out_dir + "/rd_points.csv", rd_csv);

  std::string bd_csv = provenance_line(ctx, model.family.version);
  bd_csv +=
      "target_level,framework_vs_hcf,bd_rate_psnr_pct,bd_rate_msssim_pct,"
      "bd_psnr_db,bd_msssim_db\n";
  for (const BdRow& row : out.bd_rows)
    bd_csv += std::to_string(row.target_level) + "," + row.framework + "," +
              fmt(row.bd_rate_psnr) + "," + fmt(row.bd_rate_msssim) + "," +
              fmt(row.bd_psnr) + "," + fmt(row.bd_msssim) + "\n";
  write_text(ctx.out_dir + "/bd_metrics.csv", bd_csv);

  std::string cost_csv = provenance_line(ctx, model.family.version);
  cost_csv += "# paper-scale context (not expected at this scale): ";
  cost_csv += "97.8% flops, 96.5% memory, 90.0% time reductions\n";
  cost_csv +=
      "node,flops_reduction_pct,bytes_reduction_pct,buffer_reduction_pct,"
      "time_reduction_pct\n";
  for (const auto& row : out.comparison.cost_rows)
    cost_csv += std::to_string(row.node) + "," +
                fmt(row.flops_reduction_pct) + "," +
                fmt(row.bytes_reduction_pct) + "," +
                fmt(row.buffer_reduction_pct) + "," +
                fmt(row.time_reduction_pct) + "\n";
  write_text(ctx.out_dir + "/cost_reduction.csv", cost_csv);

  json report;
  report["model_version"] = model.family.version;
  report["config_hash"] = ctx.config.hash();
  const auto cost_json = [](const CostReport& cost) {
    json nodes = json::array();
    for (const NodeCost& n : cost.nodes)
      nodes.push_back({{"flops", n.flops},
                       {"bytes_tx", n.bytes_tx},
                       {"peak_buffer", n.peak_buffer},
                       {"wall_seconds", n.wall_seconds}});
    json trace = json::array();
    for (const OpRecord& op : cost.op_trace)
      trace.push_back({{"node", op.node},
                       {"op", op.op},
                       {"level", op.level},
                       {"flops", op.flops},
                       {"live_elements", op.live_elements}});
    return json{{"nodes", nodes}, {"op_trace", trace}};
  };
  report["hcf_cost"] = cost_json(out.comparison.hcf_cost);
  report["drf_cost"] = cost_json(out.comparison.drf_cost);
  json rd_rows = json::array();
  for (const auto& row : out.comparison.rd_rows)
    rd_rows.push_back({{"framework", row.framework},
                       {"level", row.level},
                       {"bpp", row.rd.bpp},
                       {"psnr", row.rd.psnr},
                       {"msssim_db", row.rd.msssim_db}});
  report["rd_rows"] = rd_rows;
  write_text(ctx.out_dir + "/compare.json", report.dump(2) + "\n");

  std::cout << "compare: " << out.comparison.rd_rows.size()
            << " rd rows, " << out.bd_rows.size() << " bd rows -> "
            << ctx.out_dir << "\n";
  return out;
}

std::vector<AdaptRow> cmd_adapt(const CommandContext& ctx) {
  ctx.config.check_paths(false, true);
  const ModelContainer model = load_model_checked(ctx);
  const EvalCorpus corpus = load_eval_corpus(ctx.config.evaluation.corpus);
  const int s = ctx.config.evaluation.source_level;
  const int d = *std::min_element(ctx.config.evaluation.target_levels.begin(),
                                  ctx.config.evaluation.target_levels.end());
  const int nq = ctx.config.evaluation.nq_list.front();

  // Curves per compression path: one RD point per level along the path.
  std::map<int, RDCurve> path_curves;
  for (int source = s; source >= d + 2; --source)
    path_curves.emplace(
        source, hcf_level_curve(model.family, model.bank, source, d, nq,
                                corpus, std::to_string(source) + "->" +
                                            std::to_string(d),
                                ctx.jobs));

  std::vector<AdaptRow> rows;
  for (int longer = s; longer - 1 >= d + 2; --longer) {
    const RDCurve& ref = path_curves.at(longer);
    const RDCurve& test = path_curves.at(longer - 1);
    AdaptRow row;
    row.shorter_source = longer - 1;
    row.longer_source = longer;
    row.target_level = d;
    row.bd_rate_psnr = bd_rate(ref, test, MetricAxis::kPsnr);
    row.bd_rate_msssim = bd_rate(ref, test, MetricAxis::kMsssimDb);
    rows.push_back(row);
  }

  std::string csv = provenance_line(ctx, model.family.version);
  csv += "shorter_path,longer_path,bd_rate_psnr_pct,bd_rate_msssim_pct\n";
  for (const AdaptRow& row : rows)
    csv += std::to_string(row.shorter_source) + "->" +
           std::to_string(row.target_level) + "," +
           std::to_string(row.longer_source) + "->" +
           std::to_string(row.target_level) + "," + fmt(row.bd_rate_psnr) +
           "," + fmt(row.bd_rate_msssim) + "\n";
  write_text(ctx.out_dir + "/adapt.csv", csv);

  std::cout << "adapt: " << rows.size() << " path pairs -> " << ctx.out_dir
            << "/adapt.csv\n";
  return rows;
}

AblateOutput cmd_ablate(const CommandContext& ctx) {
  ctx.config.check_paths(false, true);
  const ModelContainer model = load_model_checked(ctx);
  const EvalCorpus corpus = load_eval_corpus(ctx.config.evaluation.corpus);
  const int s = ctx.config.evaluation.source_level;
  const int d = *std::min_element(ctx.config.evaluation.target_levels.begin(),
                                  ctx.config.evaluation.target_levels.end());
  const int nq = ctx.config.evaluation.nq_list.front();

  struct Variant {
    std::string name;
    ModuleBank bank;
  };
  const std::vector<Variant> variants = {
      {"complete", model.bank},
      {"inter_only", override_bank(model.bank, TransformModule::Kind::kInter)},
      {"intra_only", override_bank(model.bank, TransformModule::Kind::kIntra)},
  };
  std::cout << "ablate: single-module variants use kind-overridden weights\n";

  AblateOutput out;
  for (const Variant& variant : variants) {
    const std::vector<RDPoint> points = hcf_level_points(
        model.family, variant.bank, s, d, nq, corpus, ctx.jobs);
    for (std::size_t i = 0; i < points.size(); ++i)
      out.rows.push_back({variant.name, d + static_cast<int>(i), points[i]});
  }

  // Domination is read off the RD curves: at each variant point, the complete
  // curve's quality at the same rate must not be lower. Ties within 0.01 dB
  // count as ties (far below reporting precision).
  const auto points_of = [&](const std::string& variant) {
    std::vector<RDPoint> points;
    for (const AblateRow& row : out.rows)
      if (row.variant == variant) points.push_back(row.rd);
    return points;
  };
  const std::vector<RDPoint> complete_points = points_of("complete");
  for (const std::string variant : {"inter_only", "intra_only"}) {
    AblateOutput::Summary summary;
    summary.variant = variant;
    for (const RDPoint& point : points_of(variant)) {
      ++summary.points;
      if (psnr_at_rate(complete_points, point.bpp) >= point.psnr - 0.01)
        ++summary.dominated_or_tied;
    }
    out.summaries.push_back(summary);
  }

  std::string csv = provenance_line(ctx, model.family.version);
  csv += "variant,level,bpp,psnr,msssim_db\n";
  for (const AblateRow& row : out.rows)
    csv += row.variant + "," + std::to_string(row.level) + "," +
           fmt(row.rd.bpp) + "," + fmt(row.rd.psnr) + "," +
           fmt(row.rd.msssim_db) + "\n";
  write_text(ctx.out_dir + "/ablate.csv", csv);

  std::string summary_csv = provenance_line(ctx, model.family.version);
  summary_csv += "variant,points,complete_dominates_or_ties\n";
  for (const auto& summaryRow : out.summaries)
    summary_csv += summaryRow.variant + "," + std::to_string(summaryRow.points) +
                   "," + std::to_string(summaryRow.dominated_or_tied) + "\n";
  write_text(ctx.out_dir + "/ablate_summary.csv", summary_csv);

  std::cout << "ablate: " << out.rows.size() << " rd rows -> " << ctx.out_dir
            << "/ablate.csv\n";
  return out;
}

std::vector<EntropyRow> cmd_entropy(const CommandContext& ctx) {
  ctx.config.check_paths(false, true);
  const ModelContainer model = load_model_checked(ctx);
  const EvalCorpus corpus = load_eval_corpus(ctx.config.evaluation.corpus);
  const int s = ctx.config.evaluation.source_level;
  const std::uint64_t seed = effective_seed(ctx);

  std::vector<EntropyRow> rows;
  for (int nq : ctx.config.evaluation.nq_list) {
    for (int d : ctx.config.evaluation.target_levels) {
      const std::vector<PolicyVector> policies = enumerate_policies(s, d, nq);
      std::set<int> all_levels;
      for (int k = d; k <= s; ++k) all_levels.insert(k);

      for (const PolicyVector& policy : policies) {
        // Pool the per-image probe snapshots so each level contributes one
        // corpus-wide sample set per channel.
        std::vector<std::vector<ProbeRecord>> per_image(corpus.images.size());
        parallel_for(corpus.images.size(), ctx.jobs, [&](std::size_t i) {
          per_image[i] = run_hcf(model.family, model.bank, policy,
                                 corpus.images[i], all_levels)
                             .probes;
        });
        std::vector<ProbeRecord> pooled;
        for (int k = s; k >= d; --k) {
          ProbeRecord merged;
          merged.level = k;
          std::vector<Eigen::MatrixXd> pre_parts, post_parts;
          for (const auto& probes : per_image)
            for (const ProbeRecord& p : probes)
              if (p.level == k) {
                pre_parts.push_back(p.pre.data);
                post_parts.push_back(p.post.data);
                merged.quantized_on_path = p.quantized_on_path;
                merged.pre.level = k;
                merged.post.level = k;
                merged.post.quantized = true;
                merged.post.quant_step = p.post.quant_step;
              }
          std::int64_t total = 0;
          for (const auto& part : pre_parts) total += part.rows();
          merged.pre.data.resize(total, model.family.latent_dim);
          merged.post.data.resize(total, model.family.latent_dim);
          std::int64_t at = 0;
          for (std::size_t p = 0; p < pre_parts.size(); ++p) {
            merged.pre.data.middleRows(at, pre_parts[p].rows()) = pre_parts[p];
            merged.post.data.middleRows(at, post_parts[p].rows()) =
                post_parts[p];
            at += pre_parts[p].rows();
          }
          pooled.push_back(std::move(merged));
        }
        const EntropyTrace trace = entropy_trace(pooled, policy, seed);
        for (const EntropyTraceEntry& entry : trace.entries) {
          EntropyRow row;
          row.nq = nq;
          row.target_level = d;
          row.policy = trace.policy;
          row.level = entry.level;
          row.quantization_point = entry.quantization_point;
          row.pre_bits = entry.pre_bits;
          row.post_bits = entry.post_bits.value_or(0.0);
          row.increment = entry.increment.value_or(0.0);
          rows.push_back(row);
        }
      }
    }
  }

  std::string csv = provenance_line(ctx, model.family.version);
  csv += "n_q,target_level,policy,level,quantization_point,pre_bits,post_bits,"
         "increment\n";
  for (const EntropyRow& row : rows) {
    csv += std::to_string(row.nq) + "," + std::to_string(row.target_level) +
           "," + row.policy + "," + std::to_string(row.level) + "," +
           (row.quantization_point ? "1" : "0") + "," + fmt(row.pre_bits) + ",";
    if (row.quantization_point)
      csv += fmt(row.post_bits) + "," + fmt(row.increment) + "\n";
    else
      csv += ",\n";
  }
  write_text(ctx.out_dir + "/entropy_trace.csv", csv);

  std::cout << "entropy: " << rows.size() << " trace rows -> " << ctx.out_dir
            << "/entropy_trace.csv\n";
  return rows;
}

}  // namespace hcf
