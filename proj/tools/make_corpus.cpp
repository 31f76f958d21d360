// Generates a deterministic synthetic PGM corpus for experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hcf/errors.hpp"
#include "hcf/image.hpp"
#include "hcf/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic grayscale corpus generator"};
  std::string out_dir;
  int count = 8;
  int width = 256;
  int height = 256;
  std::uint64_t seed = 1;
  std::string prefix = "img";
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--count", count, "number of images");
  app.add_option("--width", width, "image width");
  app.add_option("--height", height, "image height");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--prefix", prefix, "filename prefix");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
      const hcf::ImagePlane image =
          hcf::synth_image(width, height, seed + static_cast<std::uint64_t>(i));
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.pgm", prefix.c_str(), i);
      hcf::save_image(image, out_dir + "/" + name);
    }
    std::cout << "wrote " << count << " images to " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
