#pragma once

// Learned AirComp constellation: per-client encoders mapping one-hot
// messages to energy-normalized codewords, the sum labeling that defines the
// decoder's classes, and the decoder itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aircomp/nn.hpp"
#include "aircomp/rng.hpp"

namespace aircomp {

struct Message {
  std::uint32_t value = 0;
  friend bool operator==(const Message&, const Message&) = default;
};

using Codeword = std::vector<double>;

inline std::vector<double> one_hot(Message msg, std::size_t alphabet) {
  if (msg.value >= alphabet) {
    throw std::invalid_argument("one_hot: message " + std::to_string(msg.value) + " outside alphabet of " +
                                std::to_string(alphabet));
  }
  std::vector<double> v(alphabet, 0.0);
  v[msg.value] = 1.0;
  return v;
}

/// M x M identity: row j is one_hot(j).
inline nn::Matrix one_hot_batch(std::size_t alphabet) {
  nn::Matrix eye(alphabet, alphabet);
  for (std::size_t j = 0; j < alphabet; ++j) eye(j, j) = 1.0;
  return eye;
}

/// Mean squared codeword norm over all rows of a constellation table.
inline double mean_energy(const nn::Matrix& table) {
  double total = 0.0;
  for (double v : table.data()) total += v * v;
  return total / static_cast<double>(table.rows());
}

/// s~_j = m * s_j / sqrt(E), E = mean_j |s_j|^2 over the encoder's full
/// constellation, so the normalized table has mean energy m^2.
inline nn::Matrix normalize_constellation(const nn::Matrix& raw) {
  const double energy = mean_energy(raw);
  if (!(energy > 0.0) || !std::isfinite(energy)) {
    throw std::runtime_error("normalize_constellation: encoder output energy is " + std::to_string(energy));
  }
  const double scale = static_cast<double>(raw.cols()) / std::sqrt(energy);
  nn::Matrix out = raw;
  for (double& v : out.data()) v *= scale;
  return out;
}

/// Pulls a gradient on the normalized table back to the raw encoder outputs.
inline nn::Matrix normalize_constellation_backward(const nn::Matrix& raw, const nn::Matrix& grad_normalized) {
  const double energy = mean_energy(raw);
  const double m = static_cast<double>(raw.cols());
  const double rows = static_cast<double>(raw.rows());
  double inner = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) inner += grad_normalized.data()[i] * raw.data()[i];
  const double a = m / std::sqrt(energy);
  const double b = m * inner / (energy * std::sqrt(energy) * rows);
  nn::Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.data()[i] = a * grad_normalized.data()[i] - b * raw.data()[i];
  }
  return out;
}

struct EncoderShape {
  std::size_t clients = 8;
  int bits = 2;
  std::size_t m = 2;
  std::vector<std::size_t> hidden{16};
  bool shared = false;

  std::size_t alphabet() const { return std::size_t{1} << bits; }
};

/// n encoder networks (or one, when weights are shared), each
/// M -> hidden (ReLU) -> m (identity).
class EncoderBank {
 public:
  EncoderBank() = default;

  EncoderBank(const EncoderShape& shape, std::uint64_t seed) : shape_(shape) {
    if (shape.clients < 1 || shape.bits < 1 || shape.m < 1) {
      throw std::invalid_argument("EncoderBank: clients, bits and m must be >= 1");
    }
    std::vector<std::size_t> dims{shape.alphabet()};
    dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
    dims.push_back(shape.m);
    const std::size_t count = shape.shared ? 1 : shape.clients;
    for (std::size_t i = 0; i < count; ++i) {
      CounterRng rng(seed, StreamTag::init, 0, i);
      nets_.push_back(nn::DenseNet::make(dims, nn::Activation::relu, nn::Activation::identity, rng));
    }
  }

  EncoderBank(const EncoderShape& shape, std::vector<nn::DenseNet> nets) : shape_(shape), nets_(std::move(nets)) {
    const std::size_t expected = shape.shared ? 1 : shape.clients;
    if (nets_.size() != expected) {
      throw std::invalid_argument("EncoderBank: expected " + std::to_string(expected) + " encoder nets, got " +
                                  std::to_string(nets_.size()));
    }
    for (const auto& net : nets_) {
      if (net.input_dim() != shape.alphabet() || net.output_dim() != shape.m ||
          net.shapes().back().act == nn::Activation::softmax) {
        throw std::invalid_argument("EncoderBank: encoder net dimensions do not match (M, m)");
      }
    }
  }

  const EncoderShape& shape() const noexcept { return shape_; }
  std::size_t clients() const noexcept { return shape_.clients; }
  std::size_t alphabet() const noexcept { return shape_.alphabet(); }
  std::size_t m() const noexcept { return shape_.m; }

  std::size_t net_index(std::size_t client) const {
    if (client >= shape_.clients) {
      throw std::invalid_argument("EncoderBank: client " + std::to_string(client) + " >= n " +
                                  std::to_string(shape_.clients));
    }
    return shape_.shared ? 0 : client;
  }
  const nn::DenseNet& net_for(std::size_t client) const { return nets_[net_index(client)]; }
  std::vector<nn::DenseNet>& nets() noexcept { return nets_; }
  const std::vector<nn::DenseNet>& nets() const noexcept { return nets_; }

  /// Raw outputs for all M messages of one encoder net (row j = message j).
  nn::Matrix raw_table_of_net(std::size_t net) const {
    return nn::forward(nets_.at(net), one_hot_batch(alphabet())).output();
  }

  nn::Matrix normalized_table(std::size_t client) const {
    return normalize_constellation(raw_table_of_net(net_index(client)));
  }

 private:
  EncoderShape shape_;
  std::vector<nn::DenseNet> nets_;
};

inline Codeword encode(const EncoderBank& bank, std::size_t client, Message msg) {
  if (msg.value >= bank.alphabet()) throw std::invalid_argument("encode: message outside alphabet");
  const nn::Matrix table = bank.normalized_table(client);
  const auto row = table.row(msg.value);
  return {row.begin(), row.end()};
}

/// Normalized constellations of every client, computed once. Inference paths
/// use this frozen table instead of re-running the encoder nets.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(const EncoderBank& bank) : clients_(bank.clients()), alphabet_(bank.alphabet()), m_(bank.m()) {
    std::vector<nn::Matrix> per_net;
    for (std::size_t i = 0; i < bank.nets().size(); ++i) per_net.push_back(normalize_constellation(bank.raw_table_of_net(i)));
    table_.reserve(clients_ * alphabet_ * m_);
    for (std::size_t c = 0; c < clients_; ++c) {
      const auto& t = per_net[bank.net_index(c)];
      table_.insert(table_.end(), t.data().begin(), t.data().end());
    }
  }

  std::size_t clients() const noexcept { return clients_; }
  std::size_t alphabet() const noexcept { return alphabet_; }
  std::size_t m() const noexcept { return m_; }

  std::span<const double> codeword(std::size_t client, std::uint32_t msg) const {
    if (client >= clients_ || msg >= alphabet_) throw std::out_of_range("Codebook: index out of range");
    return {table_.data() + (client * alphabet_ + msg) * m_, m_};
  }

 private:
  std::size_t clients_ = 0;
  std::size_t alphabet_ = 0;
  std::size_t m_ = 0;
  std::vector<double> table_;
};

enum class LabelMode { exact, coarse };

inline std::string_view to_string(LabelMode mode) { return mode == LabelMode::exact ? "exact" : "coarse"; }

inline LabelMode parse_label_mode(std::string_view s) {
  if (s == "exact") return LabelMode::exact;
  if (s == "coarse") return LabelMode::coarse;
  throw std::invalid_argument("unknown labeler mode '" + std::string(s) + "' (exact|coarse)");
}

/// Maps feasible message sums {0, ..., n(M-1)} to decoder classes. Exact mode
/// is the identity; coarse mode bins sums by floor(sum / bin_width) and
/// represents each bin by its median, clamped to the feasible range.
class SumLabeler {
 public:
  SumLabeler() = default;
  SumLabeler(LabelMode mode, std::size_t clients, int bits, std::size_t bin_width = 1)
      : mode_(mode), clients_(clients), bits_(bits), bin_width_(mode == LabelMode::exact ? 1 : bin_width) {
    if (clients < 1 || bits < 1) throw std::invalid_argument("SumLabeler: n and k must be >= 1");
    if (bin_width_ < 1) throw std::invalid_argument("SumLabeler: bin_width must be >= 1");
  }

  LabelMode mode() const noexcept { return mode_; }
  std::size_t clients() const noexcept { return clients_; }
  int bits() const noexcept { return bits_; }
  std::size_t bin_width() const noexcept { return bin_width_; }

  std::uint64_t max_sum() const { return clients_ * ((std::uint64_t{1} << bits_) - 1); }
  std::size_t sum_count() const { return static_cast<std::size_t>(max_sum()) + 1; }
  std::size_t class_count() const { return (sum_count() + bin_width_ - 1) / bin_width_; }

  std::size_t label_of_sum(std::uint64_t sum) const {
    if (sum > max_sum()) throw std::invalid_argument("SumLabeler: sum " + std::to_string(sum) + " infeasible");
    return static_cast<std::size_t>(sum / bin_width_);
  }

  std::size_t sum_label(std::span<const Message> messages) const {
    if (messages.size() != clients_) {
      throw std::invalid_argument("sum_label: expected " + std::to_string(clients_) + " messages, got " +
                                  std::to_string(messages.size()));
    }
    std::uint64_t sum = 0;
    const std::uint64_t alphabet = std::uint64_t{1} << bits_;
    for (const Message& msg : messages) {
      if (msg.value >= alphabet) throw std::invalid_argument("sum_label: message outside alphabet");
      sum += msg.value;
    }
    return label_of_sum(sum);
  }

  std::uint64_t class_to_sum(std::size_t cls) const {
    if (cls >= class_count()) {
      throw std::invalid_argument("class_to_sum: class " + std::to_string(cls) + " >= class count " +
                                  std::to_string(class_count()));
    }
    if (mode_ == LabelMode::exact) return cls;
    const std::uint64_t rep = bin_width_ * cls + bin_width_ / 2;
    return std::min(rep, max_sum());
  }

 private:
  LabelMode mode_ = LabelMode::exact;
  std::size_t clients_ = 1;
  int bits_ = 1;
  std::size_t bin_width_ = 1;
};

inline std::size_t sum_label(std::span<const Message> messages, const SumLabeler& labeler) {
  return labeler.sum_label(messages);
}

inline std::uint64_t class_to_sum(std::size_t cls, const SumLabeler& labeler) { return labeler.class_to_sum(cls); }

/// m -> hidden (ReLU) -> class_count (softmax).
struct DecoderNet {
  nn::DenseNet net;

  static DecoderNet make(std::size_t m, std::span<const std::size_t> hidden, std::size_t classes, std::uint64_t seed) {
    std::vector<std::size_t> dims{m};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(classes);
    CounterRng rng(seed, StreamTag::init, 1);
    return {nn::DenseNet::make(dims, nn::Activation::relu, nn::Activation::softmax, rng)};
  }

  std::size_t m() const { return net.input_dim(); }
  std::size_t classes() const { return net.output_dim(); }
};

/// First index of the maximum, so exact ties resolve to the lowest class.
inline std::size_t argmax(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

struct Decoded {
  std::size_t cls = 0;
  std::vector<double> probs;
};

inline Decoded decode(const DecoderNet& dec, std::span<const double> received) {
  if (received.size() != dec.m()) {
    throw std::invalid_argument("decode: received length " + std::to_string(received.size()) + " != m " +
                                std::to_string(dec.m()));
  }
  for (double v : received) {
    if (!std::isfinite(v)) throw std::invalid_argument("decode: non-finite received sample");
  }
  Decoded d;
  d.probs = nn::forward(dec.net, received);
  d.cls = argmax(d.probs);
  return d;
}

struct ConstellationPoint {
  std::size_t client = 0;
  std::uint32_t message = 0;
  std::vector<double> symbols;
};

/// Client-major, message-minor table of normalized codewords.
inline std::vector<ConstellationPoint> export_constellation(const EncoderBank& bank) {
  std::vector<ConstellationPoint> rows;
  rows.reserve(bank.clients() * bank.alphabet());
  for (std::size_t c = 0; c < bank.clients(); ++c) {
    const nn::Matrix table = bank.normalized_table(c);
    for (std::uint32_t j = 0; j < bank.alphabet(); ++j) {
      const auto r = table.row(j);
      rows.push_back({c, j, {r.begin(), r.end()}});
    }
  }
  return rows;
}

inline void write_constellation_csv(std::ostream& os, std::span<const ConstellationPoint> rows, std::size_t m) {
  os << "client,message";
  for (std::size_t j = 0; j < m; ++j) os << ",sym" << j;
  os << '\n';
  for (const auto& p : rows) {
    os << p.client << ',' << p.message;
    for (double v : p.symbols) os << ',' << nn::format_double(v);
    os << '\n';
  }
}

}  // namespace aircomp
