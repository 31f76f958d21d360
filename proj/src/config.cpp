#include "hcf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hcf/errors.hpp"

namespace hcf {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Section = std::map<std::string, std::string>;

struct RawConfig {
  std::map<std::string, Section> sections;
};

RawConfig parse_ini(const std::string& text) {
  RawConfig raw;
  std::string line;
  std::string section;
  std::istringstream in(text);
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      raw.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (raw.sections[section].count(key))
      throw ConfigError("config: duplicate key '" + section + "." + key + "'");
    raw.sections[section][key] = value;
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(const RawConfig& raw, const std::string& name) : name_(name) {
    const auto it = raw.sections.find(name);
    if (it != raw.sections.end()) section_ = &it->second;
  }

  bool take(const std::string& key, std::string* out) {
    if (section_ == nullptr) return false;
    const auto it = section_->find(key);
    if (it == section_->end()) return false;
    *out = it->second;
    seen_.push_back(key);
    return true;
  }

  int take_int(const std::string& key, int fallback) {
    std::string v;
    if (!take(key, &v)) return fallback;
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("config: " + name_ + "." + key +
                        " must be an integer, got '" + v + "'");
    return out;
  }

  double take_double(const std::string& key, double fallback) {
    std::string v;
    if (!take(key, &v)) return fallback;
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
      throw ConfigError("config: " + name_ + "." + key +
                        " must be a number, got '" + v + "'");
    return out;
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
    std::string v;
    if (!take(key, &v)) return fallback;
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("config: " + name_ + "." + key +
                        " must be a nonnegative integer, got '" + v + "'");
    return out;
  }

  std::vector<std::string> take_list(const std::string& key,
                                     std::vector<std::string> fallback) {
    std::string v;
    if (!take(key, &v)) return fallback;
    return split_list(v);
  }

  std::vector<int> take_int_list(const std::string& key,
                                 std::vector<int> fallback) {
    std::string v;
    if (!take(key, &v)) return fallback;
    std::vector<int> out;
    for (const std::string& item : split_list(v)) {
      int x = 0;
      const auto [p, ec] =
          std::from_chars(item.data(), item.data() + item.size(), x);
      if (ec != std::errc() || p != item.data() + item.size())
        throw ConfigError("config: " + name_ + "." + key +
                          " must be a list of integers");
      out.push_back(x);
    }
    return out;
  }

  // Every key must have been consumed.
  void reject_unknown(const RawConfig& raw) const {
    const auto it = raw.sections.find(name_);
    if (it == raw.sections.end()) return;
    for (const auto& [key, value] : it->second)
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw ConfigError("config: unknown key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const Section* section_ = nullptr;
  std::vector<std::string> seen_;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string join_ints(const std::vector<int>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(items[i]);
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  const RawConfig raw = parse_ini(text);
  for (const auto& [name, section] : raw.sections)
    if (name != "codec" && name != "training" && name != "evaluation" &&
        name != "output")
      throw ConfigError("config: unknown section '[" + name + "]'");

  ExperimentConfig cfg;

  SectionReader codec(raw, "codec");
  cfg.codec.patch_size = codec.take_int("patch_size", cfg.codec.patch_size);
  cfg.codec.latent_dim = codec.take_int("latent_dim", cfg.codec.latent_dim);
  cfg.codec.level_min = codec.take_int("level_min", cfg.codec.level_min);
  cfg.codec.level_max = codec.take_int("level_max", cfg.codec.level_max);
  cfg.codec.delta_base = codec.take_double("delta_base", cfg.codec.delta_base);
  cfg.codec.delta_ratio =
      codec.take_double("delta_ratio", cfg.codec.delta_ratio);
  cfg.codec.lambda_base =
      codec.take_double("lambda_base", cfg.codec.lambda_base);
  cfg.codec.lambda_ratio =
      codec.take_double("lambda_ratio", cfg.codec.lambda_ratio);
  codec.reject_unknown(raw);
  if (cfg.codec.patch_size < 1 || cfg.codec.latent_dim < 1 ||
      cfg.codec.level_max < cfg.codec.level_min)
    throw ConfigError("config: invalid codec dimensions");
  if (!(cfg.codec.delta_base > 0.0) || !(cfg.codec.delta_ratio > 0.0) ||
      cfg.codec.delta_ratio >= 1.0)
    throw ConfigError("config: delta schedule must shrink as levels rise");
  if (!(cfg.codec.lambda_base > 0.0) || !(cfg.codec.lambda_ratio > 1.0))
    throw ConfigError("config: lambda schedule must grow with level");

  SectionReader training(raw, "training");
  training.take("corpus", &cfg.training.corpus);
  cfg.training.seed = training.take_u64("seed", cfg.training.seed);
  cfg.training.alpha = training.take_double("alpha", cfg.training.alpha);
  training.take("policy", &cfg.training.policy);
  cfg.training.nq = training.take_int("n_q", cfg.training.nq);
  training.reject_unknown(raw);
  if (cfg.training.alpha < 0.0)
    throw ConfigError("config: training.alpha must be nonnegative");

  SectionReader eval(raw, "evaluation");
  eval.take("corpus", &cfg.evaluation.corpus);
  cfg.evaluation.source_level =
      eval.take_int("source_level", cfg.evaluation.source_level);
  cfg.evaluation.target_levels =
      eval.take_int_list("target_levels", cfg.evaluation.target_levels);
  cfg.evaluation.nq_list = eval.take_int_list("n_q", cfg.evaluation.nq_list);
  cfg.evaluation.policies =
      eval.take_list("policies", cfg.evaluation.policies);
  cfg.evaluation.frameworks =
      eval.take_list("frameworks", cfg.evaluation.frameworks);
  cfg.evaluation.metrics = eval.take_list("metrics", cfg.evaluation.metrics);
  eval.take("probe_levels", &cfg.evaluation.probe_levels);
  eval.reject_unknown(raw);
  for (const std::string& f : cfg.evaluation.frameworks)
    if (f != "hcf" && f != "drf" && f != "ssf")
      throw ConfigError("config: unknown framework '" + f + "'");
  for (const std::string& m : cfg.evaluation.metrics)
    if (m != "psnr" && m != "msssim")
      throw ConfigError("config: unknown metric '" + m + "'");

  SectionReader output(raw, "output");
  output.take("directory", &cfg.output.directory);
  cfg.output.formats = output.take_list("formats", cfg.output.formats);
  output.reject_unknown(raw);
  for (const std::string& f : cfg.output.formats)
    if (f != "csv" && f != "json")
      throw ConfigError("config: unknown output format '" + f + "'");

  // Validate policy literals early (config drift protection).
  if (cfg.training.policy != "edge")
    PolicyVector::parse(cfg.training.policy, cfg.codec.level_max);
  for (const std::string& p : cfg.evaluation.policies)
    if (p != "all") PolicyVector::parse(p, cfg.evaluation.source_level);

  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  out += "[codec]\n";
  out += "patch_size = " + std::to_string(codec.patch_size) + "\n";
  out += "latent_dim = " + std::to_string(codec.latent_dim) + "\n";
  out += "level_min = " + std::to_string(codec.level_min) + "\n";
  out += "level_max = " + std::to_string(codec.level_max) + "\n";
  out += "delta_base = " + fmt_double(codec.delta_base) + "\n";
  out += "delta_ratio = " + fmt_double(codec.delta_ratio) + "\n";
  out += "lambda_base = " + fmt_double(codec.lambda_base) + "\n";
  out += "lambda_ratio = " + fmt_double(codec.lambda_ratio) + "\n";
  out += "\n[training]\n";
  out += "corpus = " + training.corpus + "\n";
  out += "seed = " + std::to_string(training.seed) + "\n";
  out += "alpha = " + fmt_double(training.alpha) + "\n";
  out += "policy = " + training.policy + "\n";
  out += "n_q = " + std::to_string(training.nq) + "\n";
  out += "\n[evaluation]\n";
  out += "corpus = " + evaluation.corpus + "\n";
  out += "source_level = " + std::to_string(evaluation.source_level) + "\n";
  out += "target_levels = " + join_ints(evaluation.target_levels) + "\n";
  out += "n_q = " + join_ints(evaluation.nq_list) + "\n";
  out += "policies = " + join(evaluation.policies) + "\n";
  out += "frameworks = " + join(evaluation.frameworks) + "\n";
  out += "metrics = " + join(evaluation.metrics) + "\n";
  out += "probe_levels = " + evaluation.probe_levels + "\n";
  out += "\n[output]\n";
  out += "directory = " + output.directory + "\n";
  out += "formats = " + join(output.formats) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  const std::string text = serialize();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

PolicyVector ExperimentConfig::training_policy() const {
  if (training.policy == "edge")
    return edge_policy(codec.level_max, codec.level_min, training.nq);
  PolicyVector p = PolicyVector::parse(training.policy, codec.level_max);
  if (p.dest_level != codec.level_min)
    throw ConfigError("config: training policy span must cover all levels");
  return p;
}

void ExperimentConfig::check_paths(bool need_training,
                                   bool need_evaluation) const {
  namespace fs = std::filesystem;
  if (need_training && !fs::is_directory(training.corpus))
    throw ConfigError("config: training.corpus is not a directory: '" +
                      training.corpus + "'");
  if (need_evaluation && !fs::is_directory(evaluation.corpus))
    throw ConfigError("config: evaluation.corpus is not a directory: '" +
                      evaluation.corpus + "'");
}

}  // namespace hcf
