#pragma once

// Test-only helpers: a hand-constructed link whose noiseless decoding is
// provably exact, and a central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "aircomp/autoencoder.hpp"
#include "aircomp/nn.hpp"

namespace aircomp::testkit {

/// PAM link: every client maps message j to c * (j - (M-1)/2) on the first
/// axis. The decoder recovers u = S (the message sum) with two ReLU pairs and
/// scores class s with s*u - s^2/2, which is maximal at the integer nearest u.
inline Link reference_link(std::size_t clients, int bits, std::size_t m) {
  const std::size_t M = std::size_t{1} << bits;
  const double centre = (static_cast<double>(M) - 1.0) / 2.0;
  EncoderShape shape{clients, bits, m, {M}, false};
  std::vector<nn::DenseNet> nets;
  for (std::size_t i = 0; i < clients; ++i) {
    nn::DenseNet net({{M, M, nn::Activation::relu}, {M, m, nn::Activation::identity}});
    auto w1 = net.weights(0);
    for (std::size_t j = 0; j < M; ++j) w1[j * M + j] = 1.0;
    auto w2 = net.weights(1);
    for (std::size_t j = 0; j < M; ++j) w2[j] = static_cast<double>(j) - centre;
    nets.push_back(std::move(net));
  }
  EncoderBank bank(shape, std::move(nets));
  const double raw_energy = mean_energy(bank.raw_table_of_net(0));
  const double c = static_cast<double>(m) / std::sqrt(raw_energy);

  const SumLabeler labeler(LabelMode::exact, clients, bits);
  const std::size_t classes = labeler.class_count();
  nn::DenseNet dec({{m, 2, nn::Activation::relu}, {2, 2, nn::Activation::relu}, {2, classes, nn::Activation::softmax}});
  const double shift = static_cast<double>(clients) * centre;
  auto w1 = dec.weights(0);
  auto b1 = dec.bias(0);
  w1[0] = 1.0 / c;
  w1[m] = -1.0 / c;
  b1[0] = shift;
  b1[1] = -shift;
  auto w2 = dec.weights(1);
  w2[0] = 1.0;
  w2[3] = 1.0;
  constexpr double kSharpness = 8.0;
  auto w3 = dec.weights(2);
  auto b3 = dec.bias(2);
  for (std::size_t s = 0; s < classes; ++s) {
    const double sd = static_cast<double>(s);
    w3[s * 2 + 0] = kSharpness * sd;
    w3[s * 2 + 1] = -kSharpness * sd;
    b3[s] = -kSharpness * sd * sd / 2.0;
  }
  return Link{std::move(bank), DecoderNet{std::move(dec)}, labeler};
}

/// Central differences of `loss` with respect to every entry of `params`.
inline std::vector<double> numeric_gradient(std::span<double> params, const std::function<double()>& loss,
                                            double h = 1e-4) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps entries that are zero up
/// to finite-difference roundoff from producing meaningless ratios.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

}  // namespace aircomp::testkit
