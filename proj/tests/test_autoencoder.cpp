#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "aircomp/autoencoder.hpp"
#include "support.hpp"

using namespace aircomp;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.clients = 3;
  cfg.bits = 2;
  cfg.m = 2;
  cfg.encoder_hidden = {5};
  cfg.decoder_hidden = {6, 6};
  cfg.batch_size = 4;
  cfg.steps = 20;
  cfg.log_every = 5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(SampleTuple, ReproducibleAndUniform) {
  CounterRng a(1, StreamTag::messages), b(1, StreamTag::messages);
  const auto ta = sample_message_tuple(8, 4, a);
  const auto tb = sample_message_tuple(8, 4, b);
  ASSERT_EQ(ta.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(ta[i], tb[i]);

  CounterRng rng(2, StreamTag::messages);
  std::vector<std::size_t> counts(4, 0);
  constexpr std::size_t kTuples = 12500;  // 1e5 draws
  for (std::size_t t = 0; t < kTuples; ++t) {
    for (const auto& msg : sample_message_tuple(8, 4, rng)) ++counts[msg.value];
  }
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c) / (8.0 * kTuples), 0.25, 0.01);
}

TEST(SampleTuple, SingleLetterAlphabetGivesZeros) {
  CounterRng rng(3, StreamTag::messages);
  for (const auto& msg : sample_message_tuple(5, 1, rng)) EXPECT_EQ(msg.value, 0u);
  EXPECT_THROW(sample_message_tuple(5, 0, rng), std::invalid_argument);
}

TEST(EndToEndGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (bool shared : {false, true}) {
      TrainConfig cfg = small_config(seed);
      cfg.shared_encoder = shared;
      Link link = Link::init(cfg);
      // Zero biases put some units exactly on the ReLU kink; jitter moves them off it.
      CounterRng jitter(seed, StreamTag::init, 97);
      for (double& v : link.decoder.net.parameters()) v += 0.05 * (jitter.uniform() - 0.5);
      for (auto& net : link.bank.nets()) {
        for (double& v : net.parameters()) v += 0.05 * (jitter.uniform() - 0.5);
      }
      const E2EBatch batch = sample_batch(cfg, seed);
      const E2EGradients g = e2e_loss_and_grad(link, batch);
      auto loss = [&] { return e2e_loss_and_grad(link, batch).loss; };
      // A small step keeps central differences from straddling ReLU kinks of the deep decoder.
      constexpr double kStep = 1e-6;

      const auto dec_numeric = testkit::numeric_gradient(link.decoder.net.parameters(), loss, kStep);
      EXPECT_LT(testkit::max_relative_error(g.decoder, dec_numeric), 1e-3) << "seed " << seed;
      ASSERT_EQ(g.encoders.size(), link.bank.nets().size());
      for (std::size_t e = 0; e < g.encoders.size(); ++e) {
        const auto enc_numeric = testkit::numeric_gradient(link.bank.nets()[e].parameters(), loss, kStep);
        EXPECT_LT(testkit::max_relative_error(g.encoders[e], enc_numeric), 1e-3)
            << "seed " << seed << " encoder " << e << " shared " << shared;
      }
    }
  }
}

TEST(EndToEndGradient, RejectsMisshapenBatch) {
  const TrainConfig cfg = small_config(0);
  const Link link = Link::init(cfg);
  E2EBatch batch = sample_batch(cfg, 0);
  batch.messages.pop_back();
  EXPECT_THROW(e2e_loss_and_grad(link, batch), std::invalid_argument);
}

TEST(ForwardE2E, ProbabilitiesAndDeterminism) {
  TrainConfig cfg;
  const Link link = Link::init(cfg);
  const FrozenLink frozen(link);
  ChannelConfig ch = cfg.channel();
  for (int t = 0; t < 50; ++t) {
    CounterRng a(4, StreamTag::eval, t), b(4, StreamTag::eval, t);
    const auto tuple = sample_message_tuple(8, 4, a);
    b = a;
    const auto out = forward_e2e(frozen, tuple, ch, a);
    const auto again = forward_e2e(frozen, tuple, ch, b);
    EXPECT_EQ(out.probs, again.probs);
    ASSERT_EQ(out.probs.size(), 25u);
    double total = 0.0;
    std::uint64_t sum = 0;
    for (double p : out.probs) total += p;
    for (const auto& msg : tuple) sum += msg.value;
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_EQ(out.true_class, sum);
  }
  ch.m = 3;
  CounterRng rng(5, StreamTag::eval);
  const auto tuple = sample_message_tuple(8, 4, rng);
  EXPECT_THROW(forward_e2e(frozen, tuple, ch, rng), std::invalid_argument);
}

TEST(Train, ZeroStepsLeavesInitialParameters) {
  TrainConfig cfg = small_config(7);
  cfg.steps = 0;
  const TrainResult r = train(cfg);
  const Link init = Link::init(cfg);
  EXPECT_TRUE(r.loss_curve.empty());
  EXPECT_EQ(r.link.decoder.net, init.decoder.net);
  for (std::size_t e = 0; e < init.bank.nets().size(); ++e) EXPECT_EQ(r.link.bank.nets()[e], init.bank.nets()[e]);
}

TEST(Train, SameSeedSameCurveAndParameters) {
  const TrainConfig cfg = small_config(8);
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  ASSERT_EQ(a.loss_curve.size(), 4u);
  for (std::size_t i = 0; i < a.loss_curve.size(); ++i) {
    EXPECT_EQ(a.loss_curve[i].step, 5 * (i + 1));
    EXPECT_EQ(a.loss_curve[i].loss, b.loss_curve[i].loss);
    EXPECT_GE(a.loss_curve[i].loss, 0.0);
  }
  EXPECT_EQ(a.link.decoder.net, b.link.decoder.net);
  TrainConfig other = cfg;
  other.seed = 9;
  EXPECT_NE(train(other).loss_curve.back().loss, a.loss_curve.back().loss);
}

TEST(Train, ReducesLossOnSmallProblem) {
  TrainConfig cfg;
  cfg.clients = 2;
  cfg.bits = 1;
  cfg.m = 1;
  cfg.decoder_hidden = {16};
  cfg.batch_size = 64;
  cfg.steps = 600;
  cfg.log_every = 100;
  cfg.learning_rate = 1e-2;
  cfg.train_snr_db = 20.0;
  const TrainResult r = train(cfg);
  EXPECT_LT(r.loss_curve.back().loss, 0.5 * r.loss_curve.front().loss);
  EXPECT_EQ(exhaustive_accuracy(FrozenLink(r.link)), 1.0);
}

TEST(Bler, ReferenceLinkIsErrorFreeWithoutNoise) {
  const FrozenLink link(testkit::reference_link(4, 2, 2));
  ChannelConfig ch;
  ch.m = 2;
  const auto p = evaluate_bler(link, ch, std::numeric_limits<double>::infinity(), 5000, 1);
  EXPECT_EQ(p.errors, 0u);
  EXPECT_EQ(p.bler, 0.0);
  EXPECT_EQ(exhaustive_accuracy(link), 1.0);
}

TEST(Bler, ReferenceLinkExhaustiveAtEightClients) {
  EXPECT_EQ(exhaustive_accuracy(FrozenLink(testkit::reference_link(8, 2, 2))), 1.0);
  EXPECT_EQ(exhaustive_accuracy(FrozenLink(testkit::reference_link(3, 4, 1))), 1.0);
}

TEST(Bler, RejectsZeroTrialsAndEmptyGrid) {
  const FrozenLink link(testkit::reference_link(2, 1, 1));
  ChannelConfig ch;
  ch.m = 1;
  EXPECT_THROW(evaluate_bler(link, ch, 0.0, 0, 1), std::invalid_argument);
  EXPECT_THROW(sweep_bler(link, ch, std::vector<double>{}, 10, 1), std::invalid_argument);
}

TEST(Bler, SweepIndependentOfThreadCount) {
  const FrozenLink link(testkit::reference_link(8, 2, 2));
  ChannelConfig ch;
  ch.m = 2;
  const std::vector<double> grid{-10, -5, 0, 5, 10, 15};
  const auto serial = sweep_bler(link, ch, grid, 2000, 3, 1);
  const auto parallel = sweep_bler(link, ch, grid, 2000, 3, 3);
  ASSERT_EQ(serial.size(), 6u);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(serial[i].snr_db, grid[i]);
    EXPECT_EQ(serial[i].errors, parallel[i].errors);
    EXPECT_GE(serial[i].bler, 0.0);
    EXPECT_LE(serial[i].bler, 1.0);
  }
  EXPECT_GT(serial.front().bler, serial.back().bler);
}

TEST(Bler, CsvHeaderAndRows) {
  std::ostringstream os;
  const std::vector<BlerPoint> pts{{15.0, 100, 3, 0.03}};
  write_bler_csv(os, pts);
  EXPECT_EQ(os.str(), "snr_db,trials,errors,bler\n15,100,3,0.03\n");
}

TEST(Checkpoint, LinkRoundTripIsExact) {
  for (bool shared : {false, true}) {
    TrainConfig cfg = small_config(10);
    cfg.shared_encoder = shared;
    cfg.label_mode = LabelMode::coarse;
    cfg.bin_width = 3;
    const Link link = train(cfg).link;
    std::stringstream ss;
    save_link(ss, link);
    const Link back = load_link(ss);
    EXPECT_EQ(back.decoder.net, link.decoder.net);
    ASSERT_EQ(back.bank.nets().size(), link.bank.nets().size());
    for (std::size_t e = 0; e < link.bank.nets().size(); ++e) EXPECT_EQ(back.bank.nets()[e], link.bank.nets()[e]);
    EXPECT_EQ(back.bank.shape().shared, shared);
    EXPECT_EQ(back.labeler.mode(), LabelMode::coarse);
    EXPECT_EQ(back.labeler.bin_width(), 3u);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream ss("aircomp-link 2\n");
  EXPECT_THROW(load_link(ss), std::runtime_error);
  std::stringstream wrong("densenet 1\n");
  EXPECT_THROW(load_link(wrong), std::runtime_error);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.rate(), 1.0);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.batch_size = 1;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
