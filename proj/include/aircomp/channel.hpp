#pragma once

// Real-valued block-fading multiple-access channel. Each client pre-inverts
// its own fading coefficient (perfect CSIT), so the receiver observes the
// plain sum of the normalized codewords plus AWGN.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aircomp/nn.hpp"
#include "aircomp/rng.hpp"

namespace aircomp {

enum class Fading { none, gaussian, rayleigh };

inline std::string_view to_string(Fading f) {
  switch (f) {
    case Fading::none: return "none";
    case Fading::gaussian: return "gaussian";
    case Fading::rayleigh: return "rayleigh";
  }
  return "?";
}

inline Fading parse_fading(std::string_view s) {
  if (s == "none") return Fading::none;
  if (s == "gaussian") return Fading::gaussian;
  if (s == "rayleigh") return Fading::rayleigh;
  throw std::invalid_argument("unknown fading model '" + std::string(s) + "' (none|gaussian|rayleigh)");
}

/// snr_db = +inf selects the noiseless channel.
struct ChannelConfig {
  double snr_db = 7.0;
  std::size_t m = 2;
  Fading fading = Fading::none;
  double fading_sigma = 1.0;
  double inversion_epsilon = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (m < 1) throw std::invalid_argument("channel: m must be >= 1");
    if (!(inversion_epsilon > 0.0)) throw std::invalid_argument("channel: inversion_epsilon must be > 0");
    if (fading != Fading::none && !(fading_sigma > 0.0)) {
      throw std::invalid_argument("channel: fading sigma must be > 0");
    }
    if (std::isnan(snr_db)) throw std::invalid_argument("channel: snr_db is NaN");
  }
};

/// Noise variance N0 = m / 10^(snr_db / 10). Infinite SNR gives 0.
inline double snr_to_n0(double snr_db, std::size_t m) {
  if (m < 1) throw std::invalid_argument("snr_to_n0: m must be >= 1");
  if (snr_db == std::numeric_limits<double>::infinity()) return 0.0;
  return static_cast<double>(m) / std::pow(10.0, snr_db / 10.0);
}

/// One coefficient per client for the current block. Draws with magnitude
/// below inversion_epsilon are redrawn, since inverting them would need
/// unbounded transmit power.
inline std::vector<double> draw_fading(std::size_t clients, const ChannelConfig& cfg, CounterRng& rng) {
  std::vector<double> h(clients, 1.0);
  if (cfg.fading == Fading::none) return h;
  std::normal_distribution<double> normal(0.0, cfg.fading_sigma);
  for (double& v : h) {
    do {
      if (cfg.fading == Fading::gaussian) {
        v = normal(rng);
      } else {
        const double re = normal(rng);
        const double im = normal(rng);
        v = std::hypot(re, im);
      }
    } while (std::abs(v) < cfg.inversion_epsilon);
  }
  return h;
}

inline void awgn_inplace(std::span<double> x, double n0, CounterRng& rng) {
  if (!(n0 >= 0.0)) throw std::invalid_argument("awgn: n0 must be >= 0");
  if (n0 == 0.0) return;
  std::normal_distribution<double> normal(0.0, std::sqrt(n0));
  for (double& v : x) v += normal(rng);
}

inline std::vector<double> awgn(std::span<const double> x, double n0, CounterRng& rng) {
  std::vector<double> out(x.begin(), x.end());
  awgn_inplace(out, n0, rng);
  return out;
}

/// Each row of `codewords` is one client's normalized codeword. Client i
/// sends s_i / h_i, the channel scales it by h_i, and the receiver sees the
/// superposition plus noise drawn from `noise_rng`.
inline std::vector<double> transmit_superpose(const nn::Matrix& codewords, std::span<const double> fading,
                                              const ChannelConfig& cfg, CounterRng& noise_rng) {
  if (codewords.cols() != cfg.m) {
    throw std::invalid_argument("transmit_superpose: codeword length " + std::to_string(codewords.cols()) +
                                " != m " + std::to_string(cfg.m));
  }
  if (fading.size() != codewords.rows()) {
    throw std::invalid_argument("transmit_superpose: one fading coefficient per client required");
  }
  std::vector<double> received(cfg.m, 0.0);
  for (std::size_t i = 0; i < codewords.rows(); ++i) {
    const double h = fading[i];
    if (std::abs(h) < cfg.inversion_epsilon) {
      throw std::invalid_argument("transmit_superpose: fading coefficient below inversion threshold");
    }
    const auto s = codewords.row(i);
    for (std::size_t j = 0; j < cfg.m; ++j) received[j] += h * (s[j] / h);
  }
  awgn_inplace(received, snr_to_n0(cfg.snr_db, cfg.m), noise_rng);
  return received;
}

}  // namespace aircomp
