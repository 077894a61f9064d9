#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "aircomp/channel.hpp"

using namespace aircomp;

TEST(SnrToN0, Examples) {
  EXPECT_DOUBLE_EQ(snr_to_n0(0.0, 2), 2.0);
  EXPECT_NEAR(snr_to_n0(7.0, 2), 0.399052462993776, 1e-12);  // 2 / 10^0.7
  EXPECT_NEAR(snr_to_n0(15.0, 2), 0.06324555320336758, 1e-12);
  EXPECT_NEAR(snr_to_n0(-10.0, 2), 20.0, 1e-12);
  EXPECT_EQ(snr_to_n0(std::numeric_limits<double>::infinity(), 2), 0.0);
  EXPECT_THROW(snr_to_n0(0.0, 0), std::invalid_argument);
}

TEST(SnrToN0, StrictlyDecreasingInSnr) {
  double prev = snr_to_n0(-30.0, 4);
  for (double snr = -29.5; snr <= 60.0; snr += 0.5) {
    const double n0 = snr_to_n0(snr, 4);
    ASSERT_LT(n0, prev);
    prev = n0;
  }
}

TEST(DrawFading, NoneIsAllOnes) {
  ChannelConfig cfg;
  CounterRng rng(1, StreamTag::fading);
  EXPECT_EQ(draw_fading(5, cfg, rng), std::vector<double>(5, 1.0));
}

TEST(DrawFading, ReproducibleAndRespectsInversionThreshold) {
  ChannelConfig cfg;
  cfg.fading = Fading::gaussian;
  cfg.inversion_epsilon = 0.5;
  CounterRng a(9, StreamTag::fading), b(9, StreamTag::fading);
  const auto ha = draw_fading(1000, cfg, a);
  EXPECT_EQ(ha, draw_fading(1000, cfg, b));
  for (double h : ha) EXPECT_GE(std::abs(h), 0.5);
  cfg.fading = Fading::rayleigh;
  for (double h : draw_fading(1000, cfg, a)) EXPECT_GE(h, 0.5);
}

TEST(DrawFading, GaussianVarianceMatchesSigma) {
  ChannelConfig cfg;
  cfg.fading = Fading::gaussian;
  CounterRng rng(2, StreamTag::fading);
  const auto h = draw_fading(100000, cfg, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : h) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / h.size();
  const double var = sq / h.size() - mean * mean;
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Awgn, ZeroVarianceIsIdentity) {
  CounterRng rng(3, StreamTag::noise);
  const std::vector<double> x{1.5, -2.0, 0.25};
  EXPECT_EQ(awgn(x, 0.0, rng), x);
  EXPECT_THROW(awgn(x, -1.0, rng), std::invalid_argument);
}

TEST(Awgn, MomentsAndDeterminism) {
  CounterRng rng(4, StreamTag::noise);
  const auto z = awgn(std::vector<double>(100000, 0.0), 1.0, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : z) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / z.size();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sq / z.size() - mean * mean, 1.0, 0.05);
  CounterRng again(4, StreamTag::noise);
  EXPECT_EQ(awgn(std::vector<double>(100000, 0.0), 1.0, again), z);
}

TEST(TransmitSuperpose, NoiselessSumsCodewords) {
  ChannelConfig cfg;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.m = 2;
  CounterRng rng(5, StreamTag::noise);
  nn::Matrix cws(2, 2, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(transmit_superpose(cws, std::vector<double>{1.0, 1.0}, cfg, rng), (std::vector<double>{1.0, 1.0}));
}

TEST(TransmitSuperpose, InversionCancelsFading) {
  ChannelConfig cfg;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.m = 2;
  CounterRng rng(6, StreamTag::noise);
  // client sends [1,1] / 0.5 = [2,2]; the channel scales it back to [1,1]
  const nn::Matrix cw(1, 2, std::vector<double>{1.0, 1.0});
  EXPECT_EQ(transmit_superpose(cw, std::vector<double>{0.5}, cfg, rng), (std::vector<double>{1.0, 1.0}));
}

TEST(TransmitSuperpose, FadingMatchesNoFadingUnderSameNoise) {
  ChannelConfig faded;
  faded.m = 4;
  faded.snr_db = 3.0;
  faded.fading = Fading::gaussian;
  ChannelConfig flat = faded;
  flat.fading = Fading::none;
  CounterRng gen(7, StreamTag::init);
  for (int trial = 0; trial < 200; ++trial) {
    nn::Matrix cws(8, 4);
    for (double& v : cws.data()) v = 4.0 * gen.uniform() - 2.0;
    CounterRng hr(7, StreamTag::fading, trial);
    const auto h = draw_fading(8, faded, hr);
    CounterRng n1(7, StreamTag::noise, trial), n2(7, StreamTag::noise, trial);
    const auto y1 = transmit_superpose(cws, h, faded, n1);
    const auto y2 = transmit_superpose(cws, std::vector<double>(8, 1.0), flat, n2);
    for (std::size_t j = 0; j < 4; ++j) ASSERT_NEAR(y1[j], y2[j], 1e-12);
  }
}

TEST(TransmitSuperpose, NoisePowerMatchesN0) {
  ChannelConfig cfg;
  cfg.m = 2;
  cfg.snr_db = 7.0;
  cfg.fading = Fading::rayleigh;
  const double n0 = snr_to_n0(cfg.snr_db, cfg.m);
  const nn::Matrix cws(3, 2, std::vector<double>{1.0, -1.0, 0.5, 0.5, -2.0, 0.0});
  const double truth[2] = {-0.5, -0.5};
  double sq = 0.0;
  constexpr int kTrials = 100000;
  for (int t = 0; t < kTrials; ++t) {
    CounterRng rng(8, StreamTag::noise, t);
    const auto h = draw_fading(3, cfg, rng);
    const auto y = transmit_superpose(cws, h, cfg, rng);
    for (int j = 0; j < 2; ++j) sq += (y[j] - truth[j]) * (y[j] - truth[j]);
  }
  EXPECT_NEAR(sq / (2.0 * kTrials), n0, 0.05 * n0);
}

TEST(TransmitSuperpose, RejectsShapeErrorsAndTinyFading) {
  ChannelConfig cfg;
  cfg.m = 2;
  CounterRng rng(9, StreamTag::noise);
  EXPECT_THROW(transmit_superpose(nn::Matrix(2, 3), std::vector<double>{1.0, 1.0}, cfg, rng), std::invalid_argument);
  EXPECT_THROW(transmit_superpose(nn::Matrix(2, 2), std::vector<double>{1.0}, cfg, rng), std::invalid_argument);
  EXPECT_THROW(transmit_superpose(nn::Matrix(1, 2), std::vector<double>{1e-6}, cfg, rng), std::invalid_argument);
}

TEST(ChannelConfig, Validation) {
  ChannelConfig cfg;
  cfg.inversion_epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.inversion_epsilon = 1e-3;
  cfg.m = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_EQ(parse_fading("rayleigh"), Fading::rayleigh);
  EXPECT_THROW(parse_fading("rician"), std::invalid_argument);
}
