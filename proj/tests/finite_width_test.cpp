#include "ck/finite_width.hpp"

#include <gtest/gtest.h>

#include <random>

#include "ck/readout.hpp"
#include "oracles.hpp"

using namespace ck;

namespace {

CnnConfig small_cfg(int depth, int width, PaddingScheme pad, double gamma = 0.0) {
  CnnConfig c;
  c.depth = depth;
  c.width = width;
  c.filter_size = 3;
  c.padding = pad;
  c.bias_scale = gamma;
  return c;
}

KernelConfig kcfg_of(int depth, PaddingScheme pad, KernelFamily fam, double gamma = 0.0) {
  KernelConfig c;
  c.depth = depth;
  c.filter_size = 3;
  c.padding = pad;
  c.family = fam;
  c.bias_scale = gamma;
  return c;
}

}  // namespace

TEST(CnnForward, ZeroInputZeroBiasGivesZero) {
  CnnConfig cfg = small_cfg(3, 8, PaddingScheme::Circular, 0.0);
  std::mt19937_64 rng(1);
  Image x(5, 5, 2);  // all zeros
  for (FwReadoutKind k : {FwReadoutKind::FC, FwReadoutKind::GAP, FwReadoutKind::BBlur}) {
    FwReadout r;
    r.kind = k;
    r.blur_radius = 1;
    CnnParams p = sample_cnn_params(cfg, 2, 5, 5, r, rng);
    EXPECT_DOUBLE_EQ(cnn_forward(cfg, r, p, x), 0.0);
  }
}

TEST(CnnForward, BlurRadiusZeroEqualsFcReadout) {
  CnnConfig cfg = small_cfg(2, 6, PaddingScheme::Zero);
  std::mt19937_64 rng(3);
  Image x = oracle::random_image(4, 4, 2, rng);
  FwReadout blur0{FwReadoutKind::BBlur, 0, PaddingScheme::Zero};
  CnnParams p = sample_cnn_params(cfg, 2, 4, 4, blur0, rng);
  const double a = cnn_forward(cfg, blur0, p, x);
  const double b = cnn_forward(cfg, FwReadout{FwReadoutKind::FC}, p, x);
  EXPECT_DOUBLE_EQ(a, b);
}

// One scalar pixel, one channel, one layer: f = head * sqrt(2) * relu(w*v + g*b).
TEST(CnnForward, HandComputedScalarNetwork) {
  CnnConfig cfg;
  cfg.depth = 1;
  cfg.width = 1;
  cfg.filter_size = 1;
  cfg.bias_scale = 0.5;
  cfg.padding = PaddingScheme::Zero;
  CnnParams p;
  p.conv_w = {{1.7}};
  p.conv_b = {{-0.4}};
  p.head = {2.0};
  Image x(1, 1, 1);
  x.values[0] = 3.0;
  const double z = 1.7 * 3.0 + 0.5 * (-0.4);
  const double expected = 2.0 * std::sqrt(2.0) * z;  // z > 0
  EXPECT_NEAR(cnn_forward(cfg, FwReadout{FwReadoutKind::FC}, p, x), expected, 1e-14);
}

TEST(GradientCheck, AllReadoutsAndPaddings) {
  for (PaddingScheme pad : {PaddingScheme::Circular, PaddingScheme::Zero}) {
    CnnConfig cfg = small_cfg(2, 4, pad, 0.3);
    for (FwReadoutKind k : {FwReadoutKind::FC, FwReadoutKind::GAP, FwReadoutKind::BBlur}) {
      FwReadout r;
      r.kind = k;
      r.blur_radius = 1;
      r.blur_padding = pad;
      const double err = gradient_check(cfg, r, 2, 4, 4, 17);
      EXPECT_LE(err, 1e-5) << "kind " << static_cast<int>(k) << " pad " << padding_name(pad);
    }
  }
}

TEST(McCnngp, SelfPairEstimateIsPositive) {
  std::mt19937_64 rng(5);
  Image x = oracle::random_image(4, 4, 2, rng);
  CnnConfig cfg = small_cfg(2, 32, PaddingScheme::Circular);
  auto e = mc_cnngp(x, x, cfg, FwReadout{FwReadoutKind::FC}, 50, 11);
  EXPECT_GT(e.value, 0.0);
  EXPECT_EQ(e.samples, 50);
}

TEST(McCnngp, MatchesAnalyticKernelWithinFourStandardErrors) {
  std::mt19937_64 rng(7);
  Image x = oracle::random_image(4, 4, 2, rng);
  Image y = oracle::random_image(4, 4, 2, rng);
  CnnConfig cfg = small_cfg(2, 128, PaddingScheme::Circular, 0.2);
  KernelConfig kc = kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNNGP, 0.2);

  Tensor4 t = compute_pair(x, y, kc);
  const double want_fc = readout_fc(t);
  const double want_gap = readout_gap(t);

  auto efc = mc_cnngp(x, y, cfg, FwReadout{FwReadoutKind::FC}, 600, 21);
  EXPECT_NEAR(efc.value, want_fc, 4 * efc.stderr_ + 1e-9) << "fc se=" << efc.stderr_;
  auto egap = mc_cnngp(x, y, cfg, FwReadout{FwReadoutKind::GAP}, 600, 22);
  EXPECT_NEAR(egap.value, want_gap, 4 * egap.stderr_ + 1e-9) << "gap se=" << egap.stderr_;
}

TEST(McCnngp, BlurReadoutMatchesAnalyticLap) {
  std::mt19937_64 rng(9);
  Image x = oracle::random_image(4, 4, 1, rng);
  Image y = oracle::random_image(4, 4, 1, rng);
  CnnConfig cfg = small_cfg(2, 128, PaddingScheme::Circular);
  KernelConfig kc = kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNNGP);
  Tensor4 t = compute_pair(x, y, kc);
  const double want = readout_lap(t, lap_weights(4, 4, 1, PaddingScheme::Circular));
  FwReadout r{FwReadoutKind::BBlur, 1, PaddingScheme::Circular};
  auto e = mc_cnngp(x, y, cfg, r, 600, 31);
  EXPECT_NEAR(e.value, want, 4 * e.stderr_ + 1e-9);
}

TEST(McCntk, SelfPairIsNonNegativeAndMatchesAnalytic) {
  std::mt19937_64 rng(11);
  Image x = oracle::random_image(4, 4, 2, rng);
  Image y = oracle::random_image(4, 4, 2, rng);
  CnnConfig cfg = small_cfg(2, 96, PaddingScheme::Circular, 0.1);
  KernelConfig kc = kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNTK, 0.1);

  auto self = mc_cntk(x, x, cfg, FwReadout{FwReadoutKind::FC}, 40, 41);
  EXPECT_GE(self.value, 0.0);

  Tensor4 t = compute_pair(x, y, kc);
  auto efc = mc_cntk(x, y, cfg, FwReadout{FwReadoutKind::FC}, 250, 43);
  EXPECT_NEAR(efc.value, readout_fc(t), 4 * efc.stderr_ + 1e-9) << "se=" << efc.stderr_;
  auto egap = mc_cntk(x, y, cfg, FwReadout{FwReadoutKind::GAP}, 250, 44);
  EXPECT_NEAR(egap.value, readout_gap(t), 4 * egap.stderr_ + 1e-9) << "se=" << egap.stderr_;
}

// Fixed draw budget, growing width: the finite-width bias shrinks, so the
// error against the infinite-width value should shrink in the median.
TEST(McCnngp, WiderNetsTrackAnalyticValueMoreClosely) {
  std::mt19937_64 rng(13);
  KernelConfig kc = kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNNGP);
  double err_narrow = 0.0, err_wide = 0.0;
  std::vector<double> narrow, wide;
  for (int pair = 0; pair < 6; ++pair) {
    Image x = oracle::random_image(3, 3, 1, rng);
    Image y = oracle::random_image(3, 3, 1, rng);
    const double want = readout_fc(compute_pair(x, y, kc));
    CnnConfig cn = small_cfg(2, 8, PaddingScheme::Circular);
    CnnConfig cw = small_cfg(2, 256, PaddingScheme::Circular);
    narrow.push_back(std::abs(mc_cnngp(x, y, cn, FwReadout{}, 400, 100 + pair).value - want));
    wide.push_back(std::abs(mc_cnngp(x, y, cw, FwReadout{}, 400, 200 + pair).value - want));
  }
  std::sort(narrow.begin(), narrow.end());
  std::sort(wide.begin(), wide.end());
  err_narrow = narrow[narrow.size() / 2];
  err_wide = wide[wide.size() / 2];
  EXPECT_LT(err_wide, err_narrow);
}

TEST(Mc, DeterministicAndThreadCountIndependent) {
  std::mt19937_64 rng(15);
  Image x = oracle::random_image(3, 3, 1, rng);
  Image y = oracle::random_image(3, 3, 1, rng);
  CnnConfig cfg = small_cfg(2, 16, PaddingScheme::Zero);
  auto a = mc_cnngp(x, y, cfg, FwReadout{}, 64, 7, 1);
  auto b = mc_cnngp(x, y, cfg, FwReadout{}, 64, 7, 4);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.stderr_, b.stderr_);
  auto c = mc_cntk(x, y, cfg, FwReadout{}, 16, 7, 1);
  auto d = mc_cntk(x, y, cfg, FwReadout{}, 16, 7, 4);
  EXPECT_EQ(c.value, d.value);
}

TEST(VerifyBblurLap, RadiusZeroBothSidesAreTheTrace) {
  std::mt19937_64 rng(17);
  Image x = oracle::random_image(4, 4, 2, rng);
  Image y = oracle::random_image(4, 4, 2, rng);
  auto rep = verify_bblur_lap(x, y, kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNTK), 0,
                              PaddingScheme::Circular);
  EXPECT_TRUE(rep.pass);
  KernelConfig kc = kcfg_of(2, PaddingScheme::Circular, KernelFamily::CNTK);
  EXPECT_NEAR(rep.blur_trace, readout_fc(compute_pair(x, y, kc)), 1e-12);
}

TEST(VerifyBblurLap, BlurTraceEqualsLapOnRandomPairs) {
  std::mt19937_64 rng(19);
  for (PaddingScheme pool : {PaddingScheme::Circular, PaddingScheme::Zero}) {
    Image x = oracle::random_image(4, 4, 2, rng);
    Image y = oracle::random_image(4, 4, 2, rng);
    for (int c : {1, 2}) {
      auto rep = verify_bblur_lap(x, y, kcfg_of(2, PaddingScheme::Zero, KernelFamily::CNTK), c,
                                  pool);
      EXPECT_TRUE(rep.pass) << "c=" << c << " " << padding_name(pool)
                            << " diff=" << rep.abs_diff;
    }
  }
}
