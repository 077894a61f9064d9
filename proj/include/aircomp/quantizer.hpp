#pragma once

// k-bit stochastic-rounding quantizer for model differentials and the
// server-side inverse applied to decoded sums.

#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/rng.hpp"

namespace aircomp {

/// Piecewise-constant gain keyed by the first round at which it applies.
/// Rounds before the first key use the base gain.
struct QuantizerConfig {
  int bits = 2;
  double gain = 32.0;
  std::map<std::uint64_t, double> gain_schedule;

  void validate() const {
    if (bits < 1 || bits > 30) throw std::invalid_argument("quantizer: bits must be in [1, 30]");
    if (!(gain > 0.0) || !std::isfinite(gain)) throw std::invalid_argument("quantizer: gain must be positive");
    for (const auto& [round, g] : gain_schedule) {
      if (!(g > 0.0) || !std::isfinite(g)) {
        throw std::invalid_argument("quantizer: schedule gain at round " + std::to_string(round) +
                                    " must be positive");
      }
    }
  }

  double gain_at(std::uint64_t round) const {
    auto it = gain_schedule.upper_bound(round);
    if (it == gain_schedule.begin()) return gain;
    return std::prev(it)->second;
  }

  std::int64_t levels() const { return std::int64_t{1} << bits; }
  std::int64_t offset() const { return std::int64_t{1} << (bits - 1); }

  /// Same config with the schedule replaced by the gain in force at `round`.
  QuantizerConfig at_round(std::uint64_t round) const {
    QuantizerConfig c;
    c.bits = bits;
    c.gain = gain_at(round);
    return c;
  }
};

/// Two-phase schedule: base gain until round total/2, then base * factor.
inline std::map<std::uint64_t, double> two_phase_schedule(double base_gain, std::uint64_t total_rounds,
                                                          double factor = 4.0) {
  return {{total_rounds / 2, base_gain * factor}};
}

struct QuantizedVector {
  std::vector<std::int64_t> values;
  int bits = 0;
};

/// Rounds down with probability 1 - frac(x), up with probability frac(x).
inline std::int64_t stochastic_round(double x, CounterRng& rng) {
  if (!std::isfinite(x)) throw std::invalid_argument("stochastic_round: non-finite input");
  const double lower = std::floor(x);
  const double frac = x - lower;
  if (frac == 0.0) return static_cast<std::int64_t>(lower);
  return static_cast<std::int64_t>(lower) + (rng.uniform() < frac ? 1 : 0);
}

inline std::int64_t clamp_limit(std::int64_t value, int bits) {
  if (bits < 1) throw std::invalid_argument("clamp_limit: bits must be >= 1");
  const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  return value < lo ? lo : (value > hi ? hi : value);
}

/// Scaled value before rounding, saturated well outside any clamp range so
/// huge magnitudes cannot overflow the integer conversion.
inline double amplify(double x, double gain) {
  constexpr double kSaturate = 0x1.0p62;
  const double a = x * gain;
  return a > kSaturate ? kSaturate : (a < -kSaturate ? -kSaturate : a);
}

/// Quantizes one element with its own counter-based stream.
inline std::int64_t quantize_element(double x, const QuantizerConfig& cfg, CounterRng rng) {
  if (!std::isfinite(x)) throw std::invalid_argument("quantize: non-finite input");
  return clamp_limit(stochastic_round(amplify(x, cfg.gain), rng), cfg.bits) + cfg.offset();
}

/// Element j draws from the stream (seed, quantize, round, client, j).
inline QuantizedVector quantize(std::span<const double> x, const QuantizerConfig& cfg, std::uint64_t seed,
                                std::uint64_t round = 0, std::uint64_t client = 0) {
  cfg.validate();
  QuantizedVector q;
  q.bits = cfg.bits;
  q.values.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    q.values[j] = quantize_element(x[j], cfg, CounterRng(seed, StreamTag::quantize, round, client, j));
  }
  return q;
}

/// Quantizes with a caller-provided sequential stream.
inline QuantizedVector quantize(std::span<const double> x, const QuantizerConfig& cfg, CounterRng& rng) {
  cfg.validate();
  QuantizedVector q;
  q.bits = cfg.bits;
  q.values.reserve(x.size());
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite input");
    q.values.push_back(clamp_limit(stochastic_round(amplify(v, cfg.gain), rng), cfg.bits) + cfg.offset());
  }
  return q;
}

/// Removes the per-client offset from a decoded sum of n quantized messages
/// and scales down by the gain.
inline double dequantize_sum(std::int64_t sum_value, std::size_t clients, const QuantizerConfig& cfg) {
  const auto n = static_cast<std::int64_t>(clients);
  if (clients == 0) throw std::invalid_argument("dequantize_sum: client count must be >= 1");
  if (sum_value < 0 || sum_value > n * (cfg.levels() - 1)) {
    throw std::invalid_argument("dequantize_sum: sum " + std::to_string(sum_value) + " outside [0, " +
                                std::to_string(n * (cfg.levels() - 1)) + "]");
  }
  return static_cast<double>(sum_value - n * cfg.offset()) / cfg.gain;
}

}  // namespace aircomp
