// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "CLI11.hpp"
#include "hybridnet/app.hpp"
#include "hybridnet/error.hpp"

int main(int argc, char** argv) {
  using namespace hybridnet;
  CLI::App app{"Hybrid data/model-parallel CNN training on simulated workers"};
  app.set_version_flag("--version", "hybridnet 0.1.0");

  RunConfig defaults;
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
  auto flag = [&](const char* name, const char* key, const char* help) {
    app.add_option_function<std::string>(
           name, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help)
        ->type_name("VALUE");
  };
  app.add_option("--config", config_file, "key = value configuration file")->type_name("FILE");
  flag("--workers", "workers", "number of workers N");
  flag("--mp", "mp", "model-parallel group size K (divides N and the batch)");
  flag("--batch", "batch", "per-worker mini-batch size B");
  flag("--avg-period", "avg_period", "model averaging period in train steps");
  flag("--ccr-threshold", "ccr_threshold", "split FC layers only when their CCR exceeds this");
  flag("--lr", "lr", "learning rate");
  flag("--epochs", "epochs", "training epochs");
  flag("--steps", "steps", "training steps (overrides epochs)");
  flag("--seed", "seed", "seed for weights, data and dropout");
  flag("--scalar", "scalar", "32 or 64 bit scalars");
  flag("--net", "net", "vgg, vgg:<input size>, toy, or a network description file");
  flag("--dataset", "dataset", "synthetic[:n[:noise]] or cifar10:<file or dir>");
  flag("--mode", "mode", "train, oracle-check, plan-only or volume-sweep");
  flag("--out", "out", "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  RunConfig config = defaults;
  try {
    if (!config_file.empty()) read_config_file(config_file, config);
    // Flags override the file, in command-line order.
    for (const auto& [key, value] : overrides) apply_setting(config, key, value);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return run(config, std::cout, std::cerr);
}
