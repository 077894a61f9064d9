#pragma once

// FedAvg simulator. The uplink carries model differentials either exactly
// (perfect), as exactly-summed quantized integers (quantized), or through
// the quantizer -> learned encoders -> fading channel -> decoder chain (ae).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aircomp/autoencoder.hpp"
#include "aircomp/channel.hpp"
#include "aircomp/constellation.hpp"
#include "aircomp/nn.hpp"
#include "aircomp/quantizer.hpp"
#include "aircomp/rng.hpp"

namespace aircomp::fl {

/// Row-major samples with integer labels in [0, classes).
struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> features;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> sample(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void validate() const {
    if (dim == 0) throw std::invalid_argument("dataset: dim must be >= 1");
    if (features.size() != labels.size() * dim) throw std::invalid_argument("dataset: features/labels size mismatch");
    for (auto l : labels) {
      if (l >= classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " >= classes");
    }
    for (double v : features) {
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature");
    }
  }
};

/// Gaussian-mixture classification task: class c has mean separation * u_c
/// with u_c a random unit vector, and samples are mean + N(0, I). Labels
/// cycle through the classes so every class has the same count (+-1).
inline Dataset make_gaussian_mixture(std::size_t samples, std::size_t dim, std::size_t classes, double separation,
                                     std::uint64_t seed) {
  if (dim == 0 || classes == 0) throw std::invalid_argument("make_gaussian_mixture: dim and classes must be >= 1");
  CounterRng mean_rng(seed, StreamTag::data, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(classes * dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      means[c * dim + j] = normal(mean_rng);
      norm += means[c * dim + j] * means[c * dim + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) means[c * dim + j] *= separation / norm;
  }
  Dataset ds{dim, classes, std::vector<double>(samples * dim), std::vector<std::uint32_t>(samples)};
  CounterRng rng(seed, StreamTag::data, 1);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto c = static_cast<std::uint32_t>(i % classes);
    ds.labels[i] = c;
    for (std::size_t j = 0; j < dim; ++j) ds.features[i * dim + j] = means[c * dim + j] + normal(rng);
  }
  return ds;
}

/// Splits one draw of the mixture into train and test sets that share the
/// class means.
inline std::pair<Dataset, Dataset> make_gaussian_task(std::size_t train_samples, std::size_t test_samples,
                                                      std::size_t dim, std::size_t classes, double separation,
                                                      std::uint64_t seed) {
  Dataset all = make_gaussian_mixture(train_samples + test_samples, dim, classes, separation, seed);
  Dataset train{dim, classes, {}, {}};
  Dataset test{dim, classes, {}, {}};
  train.features.assign(all.features.begin(), all.features.begin() + static_cast<std::ptrdiff_t>(train_samples * dim));
  train.labels.assign(all.labels.begin(), all.labels.begin() + static_cast<std::ptrdiff_t>(train_samples));
  test.features.assign(all.features.begin() + static_cast<std::ptrdiff_t>(train_samples * dim), all.features.end());
  test.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(train_samples), all.labels.end());
  return {std::move(train), std::move(test)};
}

// Dataset files: features are raw little-endian float64 values, samples
// contiguous (N x dim); labels are text, one integer per line.

inline void write_dataset(const Dataset& ds, const std::filesystem::path& features, const std::filesystem::path& labels) {
  std::ofstream fo(features, std::ios::binary);
  if (!fo) throw std::runtime_error("cannot write " + features.string());
  fo.write(reinterpret_cast<const char*>(ds.features.data()),
           static_cast<std::streamsize>(ds.features.size() * sizeof(double)));
  std::ofstream lo(labels);
  if (!lo) throw std::runtime_error("cannot write " + labels.string());
  for (auto l : ds.labels) lo << l << '\n';
}

inline Dataset read_dataset(const std::filesystem::path& features, const std::filesystem::path& labels,
                            std::size_t dim, std::size_t classes) {
  if (dim == 0) throw std::invalid_argument("read_dataset: dim must be >= 1");
  std::ifstream fi(features, std::ios::binary | std::ios::ate);
  if (!fi) throw std::runtime_error("cannot read " + features.string());
  const auto bytes = static_cast<std::size_t>(fi.tellg());
  if (bytes % (sizeof(double) * dim) != 0) {
    throw std::runtime_error(features.string() + ": size is not a multiple of dim * 8 bytes");
  }
  Dataset ds{dim, classes, std::vector<double>(bytes / sizeof(double)), {}};
  fi.seekg(0);
  fi.read(reinterpret_cast<char*>(ds.features.data()), static_cast<std::streamsize>(bytes));
  std::ifstream li(labels);
  if (!li) throw std::runtime_error("cannot read " + labels.string());
  std::uint64_t l = 0;
  while (li >> l) ds.labels.push_back(static_cast<std::uint32_t>(l));
  if (ds.labels.size() * dim != ds.features.size()) {
    throw std::runtime_error("dataset: " + std::to_string(ds.labels.size()) + " labels for " +
                             std::to_string(ds.features.size() / dim) + " samples");
  }
  ds.validate();
  return ds;
}

enum class Partition { iid, non_iid };

inline std::string_view to_string(Partition p) { return p == Partition::iid ? "iid" : "non-iid"; }

inline Partition parse_partition(std::string_view s) {
  if (s == "iid") return Partition::iid;
  if (s == "non-iid" || s == "noniid" || s == "non_iid") return Partition::non_iid;
  throw std::invalid_argument("unknown partition '" + std::string(s) + "' (iid|non-iid)");
}

using Shard = std::vector<std::size_t>;

/// Equal-size disjoint shards of sample indices. iid: a random permutation
/// dealt in contiguous blocks. non-iid: indices stably sorted by label, cut
/// into 2n label-contiguous pieces, client i taking pieces 2i and 2i+1.
/// Samples beyond n * floor(N / n) are dropped with a warning.
inline std::vector<Shard> partition_data(const Dataset& ds, std::size_t clients, Partition mode, std::uint64_t seed) {
  if (clients == 0) throw std::invalid_argument("partition_data: clients must be >= 1");
  if (clients > ds.size()) {
    throw std::invalid_argument("partition_data: " + std::to_string(clients) + " clients for " +
                                std::to_string(ds.size()) + " samples");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, StreamTag::partition);
  std::shuffle(order.begin(), order.end(), rng);
  if (mode == Partition::non_iid) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });
  }
  const std::size_t per_client = ds.size() / clients;
  if (per_client * clients != ds.size()) {
    std::cerr << "warning: dataset size " << ds.size() << " not divisible by " << clients << "; dropping "
              << ds.size() - per_client * clients << " samples\n";
  }
  std::vector<Shard> shards(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    shards[c].assign(order.begin() + static_cast<std::ptrdiff_t>(c * per_client),
                     order.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_client));
  }
  return shards;
}

/// dim -> hidden (ReLU) -> classes (softmax) classifier.
inline nn::DenseNet make_classifier(std::size_t dim, std::span<const std::size_t> hidden, std::size_t classes,
                                    std::uint64_t seed) {
  std::vector<std::size_t> dims{dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(classes);
  CounterRng rng(seed, StreamTag::init, 2);
  return nn::DenseNet::make(dims, nn::Activation::relu, nn::Activation::softmax, rng);
}

inline nn::Matrix gather(const Dataset& ds, std::span<const std::size_t> idx) {
  nn::Matrix x(idx.size(), ds.dim);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto s = ds.sample(idx[r]);
    std::copy(s.begin(), s.end(), x.row(r).begin());
  }
  return x;
}

struct LossAndGrad {
  double loss = 0.0;
  nn::Gradients grad;
};

inline LossAndGrad batch_loss_and_grad(const nn::DenseNet& model, const Dataset& ds, std::span<const std::size_t> idx) {
  const nn::Tape tape = nn::forward(model, gather(ds, idx));
  std::vector<std::size_t> labels(idx.size());
  LossAndGrad out;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    labels[r] = ds.labels[idx[r]];
    out.loss += nn::cross_entropy_loss(tape.output().row(r), labels[r]);
  }
  out.loss /= static_cast<double>(idx.size());
  out.grad = nn::backward(model, tape, nn::softmax_cross_entropy_grad(tape.output(), labels)).params;
  return out;
}

/// E steps of minibatch SGD from the global model on one shard; returns
/// x_local - x_global. batch_size 0 (or >= shard size) means full-batch.
inline std::vector<double> local_update(const nn::DenseNet& global, const Dataset& ds, const Shard& shard,
                                        std::size_t local_steps, double learning_rate, std::size_t batch_size,
                                        CounterRng& rng) {
  if (local_steps < 1) throw std::invalid_argument("local_update: E must be >= 1");
  if (shard.empty()) throw std::invalid_argument("local_update: empty shard");
  nn::DenseNet local = global;
  const bool full = batch_size == 0 || batch_size >= shard.size();
  Shard pool = shard;
  std::vector<std::size_t> batch;
  for (std::size_t step = 0; step < local_steps; ++step) {
    if (full) {
      batch = shard;
    } else {
      // partial Fisher-Yates: first batch_size entries become a sample without replacement
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      batch.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(batch_size));
    }
    const LossAndGrad lg = batch_loss_and_grad(local, ds, batch);
    if (!std::isfinite(lg.loss)) {
      throw std::runtime_error("local_update: non-finite loss at local step " + std::to_string(step));
    }
    nn::sgd_step(local.parameters(), lg.grad, learning_rate);
  }
  std::vector<double> diff(global.parameter_count());
  const auto after = local.parameters();
  const auto before = global.parameters();
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = after[j] - before[j];
  return diff;
}

enum class LinkMode { perfect, quantized, ae };

inline std::string_view to_string(LinkMode m) {
  switch (m) {
    case LinkMode::perfect: return "perfect";
    case LinkMode::quantized: return "quantized";
    case LinkMode::ae: return "ae";
  }
  return "?";
}

inline LinkMode parse_link_mode(std::string_view s) {
  if (s == "perfect") return LinkMode::perfect;
  if (s == "quantized") return LinkMode::quantized;
  if (s == "ae") return LinkMode::ae;
  throw std::invalid_argument("unknown link mode '" + std::string(s) + "' (perfect|quantized|ae)");
}

/// Everything the uplink needs for one round.
struct UplinkContext {
  LinkMode mode = LinkMode::perfect;
  const FrozenLink* link = nullptr;  // required in ae mode
  QuantizerConfig quant;             // gain already resolved for this round
  ChannelConfig channel;
  std::uint64_t seed = 0;
  std::uint64_t round = 0;
};

/// Estimated sum of the participating clients' differentials. `differentials`
/// has one row per client slot; rows whose `participating` flag is false are
/// ignored in perfect mode and transmit the zero message (offset 2^(k-1)) in
/// the quantized and ae modes, which dequantizes to zero.
///
/// Quantization of client i, element j draws from (seed, quantize, round, i, j);
/// fading and noise of element j from (channel.seed, noise, round, j). The
/// quantized and ae modes therefore see identical integers.
inline std::vector<double> uplink_transmit(const std::vector<std::vector<double>>& differentials,
                                           const std::vector<bool>& participating, const UplinkContext& ctx) {
  const std::size_t n = differentials.size();
  if (n == 0) throw std::invalid_argument("uplink_transmit: no clients");
  if (participating.size() != n) throw std::invalid_argument("uplink_transmit: participation mask size mismatch");
  const std::size_t d = differentials.front().size();
  if (d == 0) throw std::invalid_argument("uplink_transmit: empty differential");
  for (const auto& s : differentials) {
    if (s.size() != d) throw std::invalid_argument("uplink_transmit: differential lengths differ");
  }
  std::vector<double> estimate(d, 0.0);
  if (ctx.mode == LinkMode::perfect) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!participating[i]) continue;
      for (std::size_t j = 0; j < d; ++j) estimate[j] += differentials[i][j];
    }
    return estimate;
  }

  ctx.quant.validate();
  std::vector<std::vector<std::int64_t>> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (participating[i]) {
      q[i] = quantize(differentials[i], ctx.quant, ctx.seed, ctx.round, i).values;
    } else {
      q[i].assign(d, ctx.quant.offset());
    }
  }

  if (ctx.mode == LinkMode::quantized) {
    for (std::size_t j = 0; j < d; ++j) {
      std::int64_t sum = 0;
      for (std::size_t i = 0; i < n; ++i) sum += q[i][j];
      estimate[j] = dequantize_sum(sum, n, ctx.quant);
    }
    return estimate;
  }

  if (ctx.link == nullptr) throw std::invalid_argument("uplink_transmit: ae mode requires a trained link");
  const FrozenLink& link = *ctx.link;
  if (link.clients() != n) {
    throw std::invalid_argument("uplink_transmit: link trained for " + std::to_string(link.clients()) +
                                " clients, got " + std::to_string(n));
  }
  if (link.alphabet() != static_cast<std::size_t>(ctx.quant.levels())) {
    throw std::invalid_argument("uplink_transmit: link alphabet " + std::to_string(link.alphabet()) +
                                " != 2^k of the quantizer");
  }
  ChannelConfig ch = ctx.channel;
  ch.m = link.m();
  ch.validate();
  constexpr std::size_t kChunk = 2048;
  std::vector<Message> tuple(n);
  for (std::size_t start = 0; start < d; start += kChunk) {
    const std::size_t count = std::min(kChunk, d - start);
    nn::Matrix received(count, link.m());
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t j = start + r;
      for (std::size_t i = 0; i < n; ++i) tuple[i].value = static_cast<std::uint32_t>(q[i][j]);
      CounterRng rng(ch.seed, StreamTag::noise, ctx.round, j);
      const auto y = link.transmit(tuple, ch, rng);
      std::copy(y.begin(), y.end(), received.row(r).begin());
    }
    const nn::Tape tape = nn::forward(link.decoder.net, std::move(received));
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t cls = argmax(tape.output().row(r));
      estimate[start + r] = dequantize_sum(static_cast<std::int64_t>(link.labeler.class_to_sum(cls)), n, ctx.quant);
    }
  }
  return estimate;
}

/// x_{t+1} = x_t + sum_estimate / participants.
inline void aggregate(std::span<double> model, std::span<const double> sum_estimate, std::size_t participants) {
  if (model.size() != sum_estimate.size()) throw std::invalid_argument("aggregate: length mismatch");
  if (participants == 0) throw std::invalid_argument("aggregate: no participants");
  const double inv = 1.0 / static_cast<double>(participants);
  for (std::size_t j = 0; j < model.size(); ++j) model[j] += sum_estimate[j] * inv;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline Evaluation evaluate(const nn::DenseNet& model, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const nn::Tape tape = nn::forward(model, gather(test, idx));
  Evaluation e;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto p = tape.output().row(r);
    if (argmax(p) == test.labels[r]) ++correct;
    e.loss += nn::cross_entropy_loss(p, test.labels[r]);
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  e.loss /= static_cast<double>(test.size());
  return e;
}

struct FLConfig {
  std::size_t clients = 8;
  std::size_t local_steps = 5;
  double learning_rate = 0.05;
  double lr_decay = 1.0;  // eta_t = learning_rate * lr_decay^t
  std::uint64_t rounds = 50;
  double participation = 1.0;
  std::size_t batch_size = 32;
  Partition partition = Partition::iid;
  std::vector<std::size_t> hidden{32};
  QuantizerConfig quant;
  ChannelConfig channel;
  LinkMode link = LinkMode::perfect;
  std::uint64_t seed = 0;

  double lr_at(std::uint64_t round) const { return learning_rate * std::pow(lr_decay, static_cast<double>(round)); }

  void validate() const {
    if (clients < 1) throw std::invalid_argument("fl config: clients must be >= 1");
    if (local_steps < 1) throw std::invalid_argument("fl config: local_steps must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) {
      throw std::invalid_argument("fl config: participation must be in (0, 1]");
    }
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("fl config: learning_rate must be >= 0");
    quant.validate();
    channel.validate();
  }
};

struct RoundMetrics {
  std::uint64_t round = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
};

struct FLResult {
  std::vector<RoundMetrics> metrics;
  nn::DenseNet model;
  std::vector<std::vector<double>> trajectory;  // parameters after each round, when requested
};

/// Uniform random subset of ceil(fraction * n) clients (at least one).
inline std::vector<bool> select_participants(std::size_t clients, double fraction, std::uint64_t seed,
                                             std::uint64_t round) {
  std::vector<bool> mask(clients, true);
  if (fraction >= 1.0) return mask;
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(clients))));
  std::vector<std::size_t> order(clients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, StreamTag::participation, round);
  std::shuffle(order.begin(), order.end(), rng);
  std::fill(mask.begin(), mask.end(), false);
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = true;
  return mask;
}

/// T rounds of broadcast / local SGD / uplink / aggregation. Row 0 of the
/// metrics is the initial model; row t follows round t. Data partition and
/// model initialization depend only on cfg.seed, so runs that differ only in
/// link mode start from identical state.
inline FLResult run_training(const FLConfig& cfg, const Dataset& train, const Dataset& test,
                             const FrozenLink* link = nullptr, bool record_trajectory = false) {
  cfg.validate();
  if (cfg.link == LinkMode::ae && link == nullptr) throw std::invalid_argument("run_training: ae link requires a checkpoint");
  const std::vector<Shard> shards = partition_data(train, cfg.clients, cfg.partition, cfg.seed);
  FLResult result;
  result.model = make_classifier(train.dim, cfg.hidden, train.classes, cfg.seed);
  auto record = [&](std::uint64_t round) {
    const Evaluation e = evaluate(result.model, test);
    result.metrics.push_back({round, e.accuracy, e.loss});
  };
  record(0);
  for (std::uint64_t t = 0; t < cfg.rounds; ++t) {
    const std::vector<bool> mask = select_participants(cfg.clients, cfg.participation, cfg.seed, t);
    std::vector<std::vector<double>> diffs(cfg.clients, std::vector<double>(result.model.parameter_count(), 0.0));
    std::size_t participants = 0;
    for (std::size_t i = 0; i < cfg.clients; ++i) {
      if (!mask[i]) continue;
      ++participants;
      CounterRng rng(cfg.seed, StreamTag::batches, t, i);
      try {
        diffs[i] = local_update(result.model, train, shards[i], cfg.local_steps, cfg.lr_at(t), cfg.batch_size, rng);
      } catch (const std::exception& e) {
        throw std::runtime_error("round " + std::to_string(t + 1) + ", client " + std::to_string(i) + ": " + e.what());
      }
    }
    UplinkContext ctx{cfg.link, link, cfg.quant.at_round(t), cfg.channel, cfg.seed, t};
    const std::vector<double> sum = uplink_transmit(diffs, mask, ctx);
    aggregate(result.model.parameters(), sum, participants);
    if (record_trajectory) {
      result.trajectory.emplace_back(result.model.parameters().begin(), result.model.parameters().end());
    }
    record(t + 1);
  }
  return result;
}

inline void write_metrics_csv(std::ostream& os, std::span<const RoundMetrics> metrics, LinkMode mode, double snr_db,
                              bool header = true) {
  if (header) os << "round,test_accuracy,test_loss,link_mode,snr_db\n";
  for (const auto& r : metrics) {
    os << r.round << ',' << nn::format_double(r.test_accuracy) << ',' << nn::format_double(r.test_loss) << ','
       << to_string(mode) << ',' << nn::format_double(snr_db) << '\n';
  }
}

}  // namespace aircomp::fl
