// Experiment runner: dual <mode> [--config file.json] [--seed 0-31] [--out dir]
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 io error, 4 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "dual/error.hpp"
#include "dual/experiment.hpp"
#include "dual/serialize.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kIoExit = 3;
constexpr int kNumericalExit = 4;

// "0,3,5-9" -> {0, 3, 5, 6, 7, 8, 9}
std::vector<std::uint64_t> parse_seeds(const std::string &text) {
  std::vector<std::uint64_t> seeds;
  for (const auto part : dual::io::split(text, ',')) {
    if (part.empty()) throw dual::ConfigError("--seed: empty item in '" + text + "'");
    const auto dash = part.find('-');
    try {
      if (dash == std::string_view::npos) {
        seeds.push_back(std::stoull(std::string(part)));
        continue;
      }
      const auto lo = std::stoull(std::string(part.substr(0, dash)));
      const auto hi = std::stoull(std::string(part.substr(dash + 1)));
      if (hi < lo) throw dual::ConfigError("--seed: descending range '" + std::string(part) + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } catch (const std::logic_error &) {
      throw dual::ConfigError("--seed: cannot parse '" + std::string(part) + "'");
    }
  }
  return seeds;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Uncertainty-aware CTR bandit experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string seeds_text;
  std::string out_dir;
  bool print_config = false;
  std::size_t jobs = 1;
  for (const auto &mode : dual::experiment_modes()) {
    auto *sub = app.add_subcommand(mode);
    sub->add_option("--config", config_path, "JSON config; missing keys keep their defaults");
    sub->add_option("--seed", seeds_text, "Seed list, e.g. 0,4,7 or 0-31");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--jobs", jobs, "Seeds run concurrently")->check(CLI::PositiveNumber);
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }
  const std::string mode = app.get_subcommands().front()->get_name();

  try {
    dual::ExperimentConfig config = dual::default_config(mode);
    if (!config_path.empty()) config = dual::load_config_file(config_path, config);
    // The subcommand always wins over a mode in the file.
    config.mode = mode;
    if (!seeds_text.empty()) config.seeds = parse_seeds(seeds_text);
    if (!out_dir.empty()) config.out = out_dir;
    if (print_config) {
      std::cout << dual::to_json(config).dump(2) << '\n';
      config.validate();
      return 0;
    }
    const auto rows = dual::run_experiment(config, std::cerr, jobs);
    dual::write_summary(std::cout, rows);
    return 0;
  } catch (const dual::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const dual::IoError &e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoExit;
  } catch (const dual::NumericalError &e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalExit;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
