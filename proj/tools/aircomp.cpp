#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "aircomp/cli.hpp"

int main(int argc, char** argv) {
  using namespace aircomp::cli;
  CLI::App app{"Learned AirComp constellations and federated-learning simulation"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key=value config file");
    sub->add_option("--seed", opt.seed, "master seed (overrides the `seed` key)");
    sub->add_option("--out", opt.out, "output directory (default $AIRCOMP_OUT_DIR or runs/<timestamp>-<command>)");
  };

  auto* train = app.add_subcommand("train-ae", "train encoders and sum decoder; writes link.ckpt, loss.csv");
  common(train);

  auto* bler = app.add_subcommand("eval-bler", "BLER vs SNR sweep of a checkpoint; writes bler.csv");
  common(bler);
  bler->add_option("--checkpoint", opt.checkpoint, "link checkpoint")->required();
  bler->add_option("--snr-grid", opt.snr_grid, "comma-separated SNR values in dB");
  bler->add_option("--trials", opt.trials, "Monte-Carlo trials per SNR point");
  bler->add_option("--jobs", opt.jobs, "worker threads across SNR points")->check(CLI::PositiveNumber);

  auto* constel = app.add_subcommand("export-constellation", "dump normalized codewords; writes constellation.csv");
  common(constel);
  constel->add_option("--checkpoint", opt.checkpoint, "link checkpoint")->required();

  auto* flrun = app.add_subcommand("fl-run", "federated averaging over the configured uplink; writes metrics.csv");
  common(flrun);
  flrun->add_option("--checkpoint", opt.checkpoint, "link checkpoint for fl.link=ae");

  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as feature/label files");
  common(gen);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train_ae(opt, std::cerr);
    if (*bler) return cmd_eval_bler(opt, std::cerr);
    if (*constel) return cmd_export_constellation(opt, std::cerr);
    if (*flrun) return cmd_fl_run(opt, std::cerr);
    if (*gen) return cmd_gen_data(opt, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
