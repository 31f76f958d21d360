#include "hcf/model_io.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hcf/errors.hpp"

namespace hcf {

namespace {

using json = nlohmann::json;

// Little-endian float64 payloads. The build targets little-endian hosts; a
// static assert would need bit_cast tricks, so the writer/reader just copy.
void append_array(std::vector<std::uint8_t>& out, json& table,
                  const std::string& name, const double* data,
                  std::vector<std::int64_t> shape) {
  std::int64_t count = 1;
  for (std::int64_t s : shape) count *= s;
  table.push_back({{"name", name}, {"shape", shape}});
  const std::size_t bytes = static_cast<std::size_t>(count) * sizeof(double);
  const std::size_t at = out.size();
  out.resize(at + bytes);
  std::memcpy(out.data() + at, data, bytes);
}

class ArrayReader {
 public:
  ArrayReader(const std::vector<std::uint8_t>& bytes, std::size_t at)
      : bytes_(bytes), at_(at) {}

  void read(const json& entry, const std::string& expect_name, double* dst,
            std::int64_t expect_count) {
    if (entry.at("name").get<std::string>() != expect_name)
      throw ParseError("model: expected array '" + expect_name + "', found '" +
                           entry.at("name").get<std::string>() + "'",
                       at_);
    std::int64_t count = 1;
    for (const json& s : entry.at("shape")) count *= s.get<std::int64_t>();
    if (count != expect_count)
      throw ParseError("model: array '" + expect_name + "' has wrong shape",
                       at_);
    const std::size_t bytes = static_cast<std::size_t>(count) * sizeof(double);
    if (at_ + bytes > bytes_.size())
      throw ParseError("model: array data truncated", bytes_.size());
    std::memcpy(dst, bytes_.data() + at_, bytes);
    at_ += bytes;
  }

  std::size_t pos() const { return at_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t at_;
};

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64_le(const std::vector<std::uint8_t>& in,
                          std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

std::string array_name(int level, const char* part, const char* leaf) {
  return "level" + std::to_string(level) + "." + part + "." + leaf;
}

std::string module_name(TransformModule::Kind kind, int from, const char* leaf) {
  return std::string("module.") + to_string(kind) + "." + std::to_string(from) +
         "." + leaf;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelContainer& model) {
  const CodecFamily& family = model.family;
  family.validate();

  json header;
  header["format"] = "HCF1";
  header["version"] = family.version;
  header["patch_size"] = family.patch_size;
  header["latent_dim"] = family.latent_dim;
  header["level_min"] = family.level_min;
  header["level_max"] = family.level_max;
  json levels = json::array();
  for (const LevelModel& m : family.levels)
    levels.push_back({{"level", m.level},
                      {"lambda", m.lambda},
                      {"quant_step", m.quant_step}});
  header["levels"] = levels;

  json modules = json::array();
  std::vector<const TransformModule*> ordered;
  for (int k = family.level_min + 1; k <= family.level_max; ++k) {
    for (auto kind :
         {TransformModule::Kind::kInter, TransformModule::Kind::kIntra}) {
      if (model.bank.has(kind, k)) {
        const TransformModule& m = model.bank.module(kind, k);
        modules.push_back({{"kind", to_string(kind)}, {"from_level", k}});
        ordered.push_back(&m);
      }
    }
  }
  header["modules"] = modules;

  std::vector<std::uint8_t> arrays;
  json table = json::array();
  const std::int64_t b2 = family.patch_size * family.patch_size;
  const std::int64_t m_dim = family.latent_dim;
  for (const LevelModel& m : family.levels) {
    append_array(arrays, table, array_name(m.level, "analysis", "weight"),
                 m.analysis_weight.data(), {m_dim, b2});
    append_array(arrays, table, array_name(m.level, "analysis", "bias"),
                 m.analysis_bias.data(), {b2});
    append_array(arrays, table, array_name(m.level, "synthesis", "weight"),
                 m.synthesis_weight.data(), {b2, m_dim});
    append_array(arrays, table, array_name(m.level, "synthesis", "bias"),
                 m.synthesis_bias.data(), {b2});
  }
  for (const TransformModule* m : ordered) {
    append_array(arrays, table, module_name(m->kind, m->from_level, "weight"),
                 m->weight.data(), {m_dim, m_dim});
    append_array(arrays, table, module_name(m->kind, m->from_level, "bias"),
                 m->bias.data(), {m_dim});
  }
  header["arrays"] = table;

  const std::string header_text = header.dump();
  std::vector<std::uint8_t> out = {'H', 'C', 'F', '1'};
  append_u64_le(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  out.insert(out.end(), arrays.begin(), arrays.end());
  return out;
}

ModelContainer parse_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "HCF1", 4) != 0)
    throw ParseError("model: bad magic", 0);
  const std::uint64_t header_len = read_u64_le(bytes, 4);
  if (12 + header_len > bytes.size())
    throw ParseError("model: truncated header", bytes.size());
  json header;
  try {
    header = json::parse(
        bytes.begin() + 12,
        bytes.begin() + 12 + static_cast<std::size_t>(header_len));
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: header JSON: ") + e.what(), 12);
  }

  ModelContainer model;
  CodecFamily& family = model.family;
  try {
    family.version = header.at("version").get<std::string>();
    family.patch_size = header.at("patch_size").get<int>();
    family.latent_dim = header.at("latent_dim").get<int>();
    family.level_min = header.at("level_min").get<int>();
    family.level_max = header.at("level_max").get<int>();
    const std::int64_t b2 = family.patch_size * family.patch_size;
    const std::int64_t m_dim = family.latent_dim;

    ArrayReader reader(bytes, 12 + static_cast<std::size_t>(header_len));
    const json& table = header.at("arrays");
    std::size_t next = 0;
    for (const json& entry : header.at("levels")) {
      LevelModel m;
      m.level = entry.at("level").get<int>();
      m.lambda = entry.at("lambda").get<double>();
      m.quant_step = entry.at("quant_step").get<double>();
      m.analysis_weight.resize(m_dim, b2);
      m.analysis_bias.resize(b2);
      m.synthesis_weight.resize(b2, m_dim);
      m.synthesis_bias.resize(b2);
      reader.read(table.at(next++), array_name(m.level, "analysis", "weight"),
                  m.analysis_weight.data(), m_dim * b2);
      reader.read(table.at(next++), array_name(m.level, "analysis", "bias"),
                  m.analysis_bias.data(), b2);
      reader.read(table.at(next++), array_name(m.level, "synthesis", "weight"),
                  m.synthesis_weight.data(), b2 * m_dim);
      reader.read(table.at(next++), array_name(m.level, "synthesis", "bias"),
                  m.synthesis_bias.data(), b2);
      family.levels.push_back(std::move(m));
    }
    for (const json& entry : header.at("modules")) {
      TransformModule m;
      const std::string kind = entry.at("kind").get<std::string>();
      m.kind = kind == "inter" ? TransformModule::Kind::kInter
                               : TransformModule::Kind::kIntra;
      m.from_level = entry.at("from_level").get<int>();
      m.to_level = m.from_level - 1;
      m.weight.resize(m_dim, m_dim);
      m.bias.resize(m_dim);
      reader.read(table.at(next++), module_name(m.kind, m.from_level, "weight"),
                  m.weight.data(), m_dim * m_dim);
      reader.read(table.at(next++), module_name(m.kind, m.from_level, "bias"),
                  m.bias.data(), m_dim);
      model.bank.put(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: header fields: ") + e.what(), 12);
  }
  family.validate();
  return model;
}

void save_model(const ModelContainer& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

ModelContainer load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_model(bytes);
}

}  // namespace hcf
