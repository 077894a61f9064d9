#pragma once

// End-to-end training of the encoder bank and sum decoder over the simulated
// channel, plus block-error-rate evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aircomp/channel.hpp"
#include "aircomp/constellation.hpp"
#include "aircomp/nn.hpp"
#include "aircomp/rng.hpp"

namespace aircomp {

struct TrainConfig {
  std::size_t clients = 8;
  int bits = 2;
  std::size_t m = 2;
  std::vector<std::size_t> encoder_hidden{16};
  std::vector<std::size_t> decoder_hidden{64, 64};
  bool shared_encoder = false;
  LabelMode label_mode = LabelMode::exact;
  std::size_t bin_width = 5;
  double train_snr_db = 7.0;
  Fading fading = Fading::none;
  std::size_t batch_size = 256;
  std::uint64_t steps = 50000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 100;

  std::size_t alphabet() const { return std::size_t{1} << bits; }
  /// Bits per real channel use.
  double rate() const { return static_cast<double>(bits) / static_cast<double>(m); }

  void validate() const {
    if (clients < 1 || bits < 1 || bits > 16 || m < 1) {
      throw std::invalid_argument("train config: n >= 1, 1 <= k <= 16, m >= 1 required");
    }
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (label_mode == LabelMode::coarse && bin_width < 1) throw std::invalid_argument("train config: bin_width >= 1");
    if (log_every < 1) throw std::invalid_argument("train config: log_every must be >= 1");
  }

  EncoderShape encoder_shape() const { return {clients, bits, m, encoder_hidden, shared_encoder}; }
  SumLabeler labeler() const { return {label_mode, clients, bits, bin_width}; }
  ChannelConfig channel() const {
    ChannelConfig c;
    c.snr_db = train_snr_db;
    c.m = m;
    c.fading = fading;
    c.seed = seed;
    return c;
  }
};

/// Trainable state of the whole link.
struct Link {
  EncoderBank bank;
  DecoderNet decoder;
  SumLabeler labeler;

  static Link init(const TrainConfig& cfg) {
    cfg.validate();
    Link link{EncoderBank(cfg.encoder_shape(), cfg.seed), {}, cfg.labeler()};
    link.decoder = DecoderNet::make(cfg.m, cfg.decoder_hidden, link.labeler.class_count(), cfg.seed);
    return link;
  }

  std::size_t clients() const { return bank.clients(); }
  std::size_t m() const { return bank.m(); }

  void validate() const {
    if (labeler.clients() != bank.clients() || labeler.bits() != bank.shape().bits) {
      throw std::invalid_argument("link: labeler (n, k) does not match encoder bank");
    }
    if (decoder.m() != bank.m()) throw std::invalid_argument("link: decoder input width != m");
    if (decoder.classes() != labeler.class_count()) {
      throw std::invalid_argument("link: decoder has " + std::to_string(decoder.classes()) + " classes, labeler " +
                                  std::to_string(labeler.class_count()));
    }
  }
};

/// Inference-time view: encoders collapsed to their normalized tables.
struct FrozenLink {
  Codebook codebook;
  DecoderNet decoder;
  SumLabeler labeler;

  explicit FrozenLink(const Link& link) : codebook(link.bank), decoder(link.decoder), labeler(link.labeler) {
    link.validate();
  }

  std::size_t clients() const { return codebook.clients(); }
  std::size_t alphabet() const { return codebook.alphabet(); }
  std::size_t m() const { return codebook.m(); }

  /// Noiseless superposition of the codewords of one message tuple.
  void superpose(std::span<const Message> tuple, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < tuple.size(); ++i) {
      const auto cw = codebook.codeword(i, tuple[i].value);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += cw[j];
    }
  }

  /// Channel output for one tuple: fading drawn first, then noise, both from `rng`.
  std::vector<double> transmit(std::span<const Message> tuple, const ChannelConfig& ch, CounterRng& rng) const {
    nn::Matrix cws(tuple.size(), m());
    for (std::size_t i = 0; i < tuple.size(); ++i) {
      const auto cw = codebook.codeword(i, tuple[i].value);
      std::copy(cw.begin(), cw.end(), cws.row(i).begin());
    }
    const std::vector<double> h = draw_fading(tuple.size(), ch, rng);
    return transmit_superpose(cws, h, ch, rng);
  }
};

inline std::vector<Message> sample_message_tuple(std::size_t clients, std::size_t alphabet, CounterRng& rng) {
  if (alphabet < 1) throw std::invalid_argument("sample_message_tuple: alphabet must be >= 1");
  std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(alphabet - 1));
  std::vector<Message> tuple(clients);
  for (auto& msg : tuple) msg.value = dist(rng);
  return tuple;
}

struct E2EOutput {
  std::vector<double> probs;
  std::size_t true_class = 0;
};

inline E2EOutput forward_e2e(const FrozenLink& link, std::span<const Message> tuple, const ChannelConfig& ch,
                             CounterRng& rng) {
  if (tuple.size() != link.clients()) throw std::invalid_argument("forward_e2e: tuple size != n");
  if (ch.m != link.m()) throw std::invalid_argument("forward_e2e: channel m != link m");
  const std::vector<double> y = link.transmit(tuple, ch, rng);
  E2EOutput out;
  out.probs = decode(link.decoder, y).probs;
  out.true_class = link.labeler.sum_label(tuple);
  return out;
}

inline E2EOutput forward_e2e(const Link& link, std::span<const Message> tuple, const ChannelConfig& ch,
                             CounterRng& rng) {
  return forward_e2e(FrozenLink(link), tuple, ch, rng);
}

/// A training minibatch: messages[b * n + i] is client i's message in sample
/// b; noise row b is added to sample b's superposition.
struct E2EBatch {
  std::vector<std::uint32_t> messages;
  nn::Matrix noise;
  std::size_t size() const { return noise.rows(); }
};

struct E2EGradients {
  double loss = 0.0;
  std::vector<nn::Gradients> encoders;  // one per encoder net
  nn::Gradients decoder;
};

/// Mean cross-entropy of the sum class over the batch and its gradient with
/// respect to every encoder and decoder parameter. Fading is omitted: with
/// transmitter-side inversion it cancels exactly.
inline E2EGradients e2e_loss_and_grad(const Link& link, const E2EBatch& batch) {
  const std::size_t n = link.clients();
  const std::size_t m = link.m();
  const std::size_t alphabet = link.bank.alphabet();
  const std::size_t B = batch.size();
  if (batch.messages.size() != B * n || batch.noise.cols() != m) {
    throw std::invalid_argument("e2e_loss_and_grad: batch shape mismatch");
  }
  const auto& nets = link.bank.nets();
  std::vector<nn::Tape> enc_tapes;
  std::vector<nn::Matrix> tables;
  for (const auto& net : nets) {
    enc_tapes.push_back(nn::forward(net, one_hot_batch(alphabet)));
    tables.push_back(normalize_constellation(enc_tapes.back().output()));
  }

  nn::Matrix received = batch.noise;
  std::vector<std::size_t> labels(B);
  for (std::size_t b = 0; b < B; ++b) {
    auto y = received.row(b);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t msg = batch.messages[b * n + i];
      const auto cw = tables[link.bank.net_index(i)].row(msg);
      for (std::size_t j = 0; j < m; ++j) y[j] += cw[j];
      sum += msg;
    }
    labels[b] = link.labeler.label_of_sum(sum);
  }

  const nn::Tape dec_tape = nn::forward(link.decoder.net, received);
  E2EGradients out;
  for (std::size_t b = 0; b < B; ++b) out.loss += nn::cross_entropy_loss(dec_tape.output().row(b), labels[b]);
  out.loss /= static_cast<double>(B);

  auto dec_back = nn::backward(link.decoder.net, dec_tape, nn::softmax_cross_entropy_grad(dec_tape.output(), labels));
  out.decoder = std::move(dec_back.params);

  std::vector<nn::Matrix> table_grads(nets.size(), nn::Matrix(alphabet, m));
  for (std::size_t b = 0; b < B; ++b) {
    const auto dy = dec_back.input.row(b);
    for (std::size_t i = 0; i < n; ++i) {
      auto g = table_grads[link.bank.net_index(i)].row(batch.messages[b * n + i]);
      for (std::size_t j = 0; j < m; ++j) g[j] += dy[j];
    }
  }
  for (std::size_t e = 0; e < nets.size(); ++e) {
    nn::Matrix raw_grad = normalize_constellation_backward(enc_tapes[e].output(), table_grads[e]);
    out.encoders.push_back(nn::backward(nets[e], enc_tapes[e], std::move(raw_grad)).params);
  }
  return out;
}

/// Uniform message tuples and AWGN at the training SNR for step `step`.
inline E2EBatch sample_batch(const TrainConfig& cfg, std::uint64_t step) {
  E2EBatch batch;
  CounterRng msg_rng(cfg.seed, StreamTag::messages, step);
  batch.messages.resize(cfg.batch_size * cfg.clients);
  std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(cfg.alphabet() - 1));
  for (auto& v : batch.messages) v = dist(msg_rng);
  batch.noise = nn::Matrix(cfg.batch_size, cfg.m);
  CounterRng noise_rng(cfg.seed, StreamTag::noise, step);
  awgn_inplace(batch.noise.data(), snr_to_n0(cfg.train_snr_db, cfg.m), noise_rng);
  return batch;
}

struct LossPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  Link link;
  std::vector<LossPoint> loss_curve;
};

/// Adam on the mean sum-class cross-entropy. The loss curve records the
/// minibatch loss every `log_every` steps and at the final step.
inline TrainResult train(const TrainConfig& cfg, const std::function<void(const LossPoint&)>& on_log = {}) {
  cfg.validate();
  TrainResult result{Link::init(cfg), {}};
  Link& link = result.link;
  std::vector<nn::AdamState> enc_adam;
  for (const auto& net : link.bank.nets()) enc_adam.emplace_back(net.parameter_count(), cfg.learning_rate);
  nn::AdamState dec_adam(link.decoder.net.parameter_count(), cfg.learning_rate);

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    const E2EBatch batch = sample_batch(cfg, step);
    E2EGradients g = e2e_loss_and_grad(link, batch);
    if (!std::isfinite(g.loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    }
    for (std::size_t e = 0; e < g.encoders.size(); ++e) {
      nn::adam_step(link.bank.nets()[e].parameters(), g.encoders[e], enc_adam[e]);
    }
    nn::adam_step(link.decoder.net.parameters(), g.decoder, dec_adam);
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      result.loss_curve.push_back({step + 1, g.loss});
      if (on_log) on_log(result.loss_curve.back());
    }
  }
  return result;
}

struct BlerPoint {
  double snr_db = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t errors = 0;
  double bler = 0.0;

  /// Binomial standard error of the estimate.
  double std_error() const {
    return std::sqrt(bler * (1.0 - bler) / static_cast<double>(trials));
  }
};

/// Monte-Carlo top-1 error. Trial t uses the stream (seed, eval, stream_id, t),
/// so results do not depend on chunking or thread scheduling.
inline BlerPoint evaluate_bler(const FrozenLink& link, const ChannelConfig& base, double snr_db, std::uint64_t trials,
                               std::uint64_t seed, std::uint64_t stream_id = 0) {
  if (trials < 1) throw std::invalid_argument("evaluate_bler: trials must be >= 1");
  ChannelConfig ch = base;
  ch.snr_db = snr_db;
  ch.m = link.m();
  ch.validate();
  constexpr std::size_t kChunk = 1024;
  const std::size_t n = link.clients();
  BlerPoint point{snr_db, trials, 0, 0.0};
  for (std::uint64_t start = 0; start < trials; start += kChunk) {
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, trials - start));
    nn::Matrix received(count, link.m());
    std::vector<std::size_t> labels(count);
    for (std::size_t r = 0; r < count; ++r) {
      CounterRng rng(seed, StreamTag::eval, stream_id, start + r);
      const auto tuple = sample_message_tuple(n, link.alphabet(), rng);
      const auto y = link.transmit(tuple, ch, rng);
      std::copy(y.begin(), y.end(), received.row(r).begin());
      labels[r] = link.labeler.sum_label(tuple);
    }
    const nn::Tape tape = nn::forward(link.decoder.net, std::move(received));
    for (std::size_t r = 0; r < count; ++r) {
      if (argmax(tape.output().row(r)) != labels[r]) ++point.errors;
    }
  }
  point.bler = static_cast<double>(point.errors) / static_cast<double>(trials);
  return point;
}

inline BlerPoint evaluate_bler(const Link& link, const ChannelConfig& base, double snr_db, std::uint64_t trials,
                               std::uint64_t seed) {
  return evaluate_bler(FrozenLink(link), base, snr_db, trials, seed);
}

/// One point per grid value; grid index i uses stream_id i. Up to `jobs`
/// worker threads, each evaluating a disjoint subset of points.
inline std::vector<BlerPoint> sweep_bler(const FrozenLink& link, const ChannelConfig& base,
                                         std::span<const double> snr_grid, std::uint64_t trials, std::uint64_t seed,
                                         std::size_t jobs = 1) {
  if (snr_grid.empty()) throw std::invalid_argument("sweep_bler: empty SNR grid");
  std::vector<BlerPoint> points(snr_grid.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, snr_grid.size()));
  auto worker = [&](std::size_t w) {
    for (std::size_t i = w; i < snr_grid.size(); i += jobs) {
      points[i] = evaluate_bler(link, base, snr_grid[i], trials, seed, i);
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
  }
  return points;
}

/// Fraction of all M^n message tuples whose noiseless superposition decodes
/// to the right class.
inline double exhaustive_accuracy(const FrozenLink& link) {
  const std::size_t n = link.clients();
  const std::size_t alphabet = link.alphabet();
  double total_d = std::pow(static_cast<double>(alphabet), static_cast<double>(n));
  if (total_d > 1e8) throw std::invalid_argument("exhaustive_accuracy: M^n too large to enumerate");
  const auto total = static_cast<std::uint64_t>(total_d);
  constexpr std::size_t kChunk = 4096;
  std::vector<Message> tuple(n);
  std::uint64_t correct = 0;
  for (std::uint64_t start = 0; start < total; start += kChunk) {
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, total - start));
    nn::Matrix received(count, link.m());
    std::vector<std::size_t> labels(count);
    for (std::size_t r = 0; r < count; ++r) {
      std::uint64_t code = start + r;
      for (std::size_t i = 0; i < n; ++i) {
        tuple[i].value = static_cast<std::uint32_t>(code % alphabet);
        code /= alphabet;
      }
      link.superpose(tuple, received.row(r));
      labels[r] = link.labeler.sum_label(tuple);
    }
    const nn::Tape tape = nn::forward(link.decoder.net, std::move(received));
    for (std::size_t r = 0; r < count; ++r) {
      if (argmax(tape.output().row(r)) == labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / total_d;
}

// Link checkpoint: a small key/value header followed by the encoder nets and
// the decoder net in the DenseNet text format.
//   aircomp-link 1
//   clients <n>
//   bits <k>
//   m <m>
//   shared <0|1>
//   labeler <exact|coarse> <bin_width>
//   encoders <count>
//   <count x densenet block>
//   decoder
//   <densenet block>

inline void save_link(std::ostream& os, const Link& link) {
  link.validate();
  const auto& shape = link.bank.shape();
  os << "aircomp-link 1\n"
     << "clients " << shape.clients << '\n'
     << "bits " << shape.bits << '\n'
     << "m " << shape.m << '\n'
     << "shared " << (shape.shared ? 1 : 0) << '\n'
     << "labeler " << to_string(link.labeler.mode()) << ' ' << link.labeler.bin_width() << '\n'
     << "encoders " << link.bank.nets().size() << '\n';
  for (const auto& net : link.bank.nets()) nn::write_net(os, net);
  os << "decoder\n";
  nn::write_net(os, link.decoder.net);
}

inline Link load_link(std::istream& is) {
  auto expect = [&](const char* key) {
    std::string tok;
    if (!(is >> tok) || tok != key) {
      throw std::runtime_error(std::string("link checkpoint: expected '") + key + "', got '" + tok + "'");
    }
  };
  int version = 0;
  expect("aircomp-link");
  if (!(is >> version) || version != 1) throw std::runtime_error("link checkpoint: unsupported version");
  EncoderShape shape;
  int shared = 0;
  std::string mode;
  std::size_t bin_width = 1;
  std::size_t count = 0;
  expect("clients");
  is >> shape.clients;
  expect("bits");
  is >> shape.bits;
  expect("m");
  is >> shape.m;
  expect("shared");
  is >> shared;
  expect("labeler");
  is >> mode >> bin_width;
  expect("encoders");
  is >> count;
  if (!is) throw std::runtime_error("link checkpoint: malformed header");
  shape.shared = shared != 0;
  std::vector<nn::DenseNet> nets;
  for (std::size_t i = 0; i < count; ++i) nets.push_back(nn::read_net(is));
  shape.hidden.clear();
  if (!nets.empty()) {
    for (std::size_t l = 0; l + 1 < nets.front().layer_count(); ++l) shape.hidden.push_back(nets.front().layer(l).out);
  }
  expect("decoder");
  Link link{EncoderBank(shape, std::move(nets)), DecoderNet{nn::read_net(is)},
            SumLabeler(parse_label_mode(mode), shape.clients, shape.bits, bin_width)};
  link.validate();
  return link;
}

inline void write_bler_csv(std::ostream& os, std::span<const BlerPoint> points) {
  os << "snr_db,trials,errors,bler\n";
  for (const auto& p : points) {
    os << nn::format_double(p.snr_db) << ',' << p.trials << ',' << p.errors << ',' << nn::format_double(p.bler)
       << '\n';
  }
}

inline void write_loss_csv(std::ostream& os, std::span<const LossPoint> curve) {
  os << "step,loss\n";
  for (const auto& p : curve) os << p.step << ',' << nn::format_double(p.loss) << '\n';
}

}  // namespace aircomp
