#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "setsum/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Set-sum augmentation experiments for count regression"};
  app.require_subcommand(1);

  setsum::CommandOptions options;
  std::string config;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config, "key=value config file")->required();
    cmd->add_option("--seed", seed, "override the config's master seed");
  };
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset and manifest");
  add_common(generate);
  CLI::App* train = app.add_subcommand("train", "train a regressor");
  add_common(train);
  train->add_option("--model", model, "initial model to resume from");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained model");
  add_common(eval);
  eval->add_option("--model", model, "model file (default <output_dir>/model.ssrm)");
  CLI::App* curve = app.add_subcommand("curve", "run the learning-curve experiment");
  add_common(curve);
  curve->add_option("--jobs", jobs, "parallel training jobs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : setsum::kExitConfig;
  }

  options.config_path = config;
  for (CLI::App* cmd : {generate, train, eval, curve}) {
    if (!cmd->parsed()) continue;
    if (cmd->count("--seed") > 0) options.seed = seed;
    if (cmd != generate && cmd != curve && cmd->count("--model") > 0) options.model_path = model;
    if (cmd == curve && cmd->count("--jobs") > 0) options.jobs = jobs;
  }

  if (generate->parsed()) return setsum::cmd_generate(options, std::cout, std::cerr);
  if (train->parsed()) return setsum::cmd_train(options, std::cout, std::cerr);
  if (eval->parsed()) return setsum::cmd_eval(options, std::cout, std::cerr);
  return setsum::cmd_curve(options, std::cout, std::cerr);
}
