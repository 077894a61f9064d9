// Trains a small sum-computing link, sweeps its BLER and runs a few rounds of
// federated averaging over it.

#include <cstdio>
#include <vector>

#include "aircomp/autoencoder.hpp"
#include "aircomp/fl.hpp"

int main() {
  aircomp::TrainConfig cfg;
  cfg.steps = 3000;
  cfg.seed = 1;
  const auto result = aircomp::train(cfg, [](const aircomp::LossPoint& p) {
    if (p.step % 1000 == 0) std::printf("step %5llu  loss %.4f\n", static_cast<unsigned long long>(p.step), p.loss);
  });
  const aircomp::FrozenLink link(result.link);
  std::printf("noiseless exhaustive accuracy %.4f\n", aircomp::exhaustive_accuracy(link));

  const std::vector<double> grid{0, 5, 10, 15};
  for (const auto& p : aircomp::sweep_bler(link, cfg.channel(), grid, 5000, 7)) {
    std::printf("SNR %4.0f dB  BLER %.4f\n", p.snr_db, p.bler);
  }

  const auto [train_set, test_set] = aircomp::fl::make_gaussian_task(8000, 2000, 20, 10, 3.0, 100);
  aircomp::fl::FLConfig fl;
  fl.rounds = 20;
  fl.channel.snr_db = 15.0;
  for (auto mode : {aircomp::fl::LinkMode::perfect, aircomp::fl::LinkMode::ae}) {
    fl.link = mode;
    const auto r = aircomp::fl::run_training(fl, train_set, test_set, &link);
    std::printf("%-9s final test accuracy %.4f\n", std::string(aircomp::fl::to_string(mode)).c_str(),
                r.metrics.back().test_accuracy);
  }
  return 0;
}
