#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcf/cascade.hpp"
#include "hcf/codec.hpp"

namespace hcf {

struct ModelContainer {
  CodecFamily family;
  ModuleBank bank;
};

// Flat binary container: magic "HCF1", 8-byte LE header length, JSON header
// describing dimensions and the array table, then the named little-endian
// float64 arrays back to back in header order.
std::vector<std::uint8_t> serialize_model(const ModelContainer& model);
ModelContainer parse_model(const std::vector<std::uint8_t>& bytes);

void save_model(const ModelContainer& model, const std::string& path);
ModelContainer load_model(const std::string& path);

}  // namespace hcf
