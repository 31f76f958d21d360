#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hcf/commands.hpp"
#include "hcf/errors.hpp"

namespace {

int dispatch(const std::string& command, const hcf::CommandContext& ctx) {
  if (command == "train") {
    hcf::cmd_train(ctx);
  } else if (command == "sweep") {
    hcf::cmd_sweep(ctx);
  } else if (command == "compare") {
    hcf::cmd_compare(ctx);
  } else if (command == "adapt") {
    hcf::cmd_adapt(ctx);
  } else if (command == "ablate") {
    hcf::cmd_ablate(ctx);
  } else if (command == "entropy") {
    hcf::cmd_entropy(ctx);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical cascade compression experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string model_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")
        ->required();
    sub->add_option("--model", model_path, "model container path");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed override")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--jobs", jobs, "worker pool size (default: cores)");
  };
  for (const char* name : {"train", "sweep", "compare", "adapt", "ablate",
                           "entropy"})
    add_common(app.add_subcommand(
        name, std::string(name) + " experiment stage"));

  CLI11_PARSE(app, argc, argv);

  try {
    hcf::CommandContext ctx;
    ctx.config = hcf::ExperimentConfig::load(config_path);
    ctx.model_path = model_path;
    ctx.out_dir = out_dir;
    ctx.seed_overridden = seed_given;
    ctx.seed = seed_given ? seed : ctx.config.training.seed;
    ctx.jobs = jobs;
    return dispatch(app.get_subcommands().front()->get_name(), ctx);
  } catch (const hcf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hcf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const hcf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
