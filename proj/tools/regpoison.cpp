// Command-line front end: poisoning attacks, defenses, sweeps, and transfer
// experiments for linear regression, driven by an INI config file.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// error.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "regpoison/regpoison.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<long long> seed;
  regpoison::CliOptions options;
};

void add_common(CLI::App* sub, CommonArgs* args) {
  sub->add_option("-c,--config", args->config_path,
                  "Path to the INI config file");
  sub->add_option("-s,--seed", args->seed,
                  "Override the config's top-level seed");
  sub->add_option("-o,--out", args->options.out_dir,
                  "Output directory (default: out)");
  sub->add_option("-j,--parallel", args->options.parallel,
                  "Worker threads for sweep cells (default: 1)");
}

regpoison::HarnessConfig resolve_config(const CommonArgs& args) {
  if (args.config_path.empty()) {
    throw regpoison::ConfigError("--config is required");
  }
  regpoison::HarnessConfig cfg = regpoison::load_config(args.config_path);
  if (args.seed) cfg.seed = static_cast<std::uint64_t>(*args.seed);
  if (args.options.parallel < 1) {
    throw regpoison::ConfigError("--parallel must be >= 1");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Poisoning attacks and defenses for linear regression: craft poison "
      "sets, train robust models, and sweep attack/defense grids."};
  app.require_subcommand(1);

  CommonArgs attack_args, defend_args, sweep_args, transfer_args, gen_args;
  CLI::App* attack = app.add_subcommand(
      "attack", "Craft a poison set and report its effect on test MSE");
  add_common(attack, &attack_args);
  CLI::App* defend = app.add_subcommand(
      "defend", "Attack, then train a defense and report defended test MSE");
  add_common(defend, &defend_args);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run the poisoning-rate x run x attack x defense grid");
  add_common(sweep, &sweep_args);
  CLI::App* transfer = app.add_subcommand(
      "transfer", "Measure how poison crafted on a substitute set transfers");
  add_common(transfer, &transfer_args);
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Write the synthetic dataset for a config as CSV");
  add_common(gen, &gen_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (attack->parsed()) {
      regpoison::cmd_attack(resolve_config(attack_args), attack_args.options);
    } else if (defend->parsed()) {
      regpoison::cmd_defend(resolve_config(defend_args), defend_args.options);
    } else if (sweep->parsed()) {
      regpoison::cmd_sweep(resolve_config(sweep_args), sweep_args.options);
    } else if (transfer->parsed()) {
      regpoison::cmd_transfer(resolve_config(transfer_args),
                              transfer_args.options);
    } else if (gen->parsed()) {
      regpoison::cmd_gen_data(resolve_config(gen_args), gen_args.options);
    }
  } catch (const regpoison::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const regpoison::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const regpoison::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
