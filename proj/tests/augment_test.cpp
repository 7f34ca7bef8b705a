#include "ck/augment.hpp"

#include <gtest/gtest.h>

#include <random>

#include "ck/kernel_dp.hpp"
#include "ck/readout.hpp"
#include "ck/synth.hpp"
#include "oracles.hpp"

using namespace ck;

namespace {

Image grid2() {
  Image x(2, 2, 1);
  x.at(0, 0, 0) = 1;
  x.at(0, 1, 0) = 2;
  x.at(1, 0, 0) = 3;
  x.at(1, 1, 0) = 4;
  return x;
}

bool images_equal(const Image& a, const Image& b, double tol = 0.0) {
  if (!a.same_shape(b)) return false;
  for (size_t n = 0; n < a.values.size(); ++n)
    if (std::abs(a.values[n] - b.values[n]) > tol) return false;
  return true;
}

PairKernelFn fc_kernel(PaddingScheme pad, KernelFamily fam, int depth = 2) {
  KernelConfig cfg;
  cfg.depth = depth;
  cfg.filter_size = 3;
  cfg.padding = pad;
  cfg.family = fam;
  return [cfg](const Image& a, const Image& b) { return readout_fc(compute_pair(a, b, cfg)); };
}

PairKernelFn gap_kernel(PaddingScheme pad, KernelFamily fam, int depth = 2) {
  KernelConfig cfg;
  cfg.depth = depth;
  cfg.filter_size = 3;
  cfg.padding = pad;
  cfg.family = fam;
  return [cfg](const Image& a, const Image& b) { return readout_gap(compute_pair(a, b, cfg)); };
}

}  // namespace

TEST(Translate, RowRotationUnderCircularPadding) {
  Image got = translate(grid2(), 1, 0, PaddingScheme::Circular);
  Image want(2, 2, 1);
  want.at(0, 0, 0) = 3;
  want.at(0, 1, 0) = 4;
  want.at(1, 0, 0) = 1;
  want.at(1, 1, 0) = 2;
  EXPECT_TRUE(images_equal(got, want));
}

TEST(Translate, ZeroShiftIsIdentity) {
  Image x = grid2();
  EXPECT_TRUE(images_equal(translate(x, 0, 0, PaddingScheme::Circular), x));
  EXPECT_TRUE(images_equal(translate(x, 0, 0, PaddingScheme::Zero), x));
}

TEST(Translate, InverseShiftRestoresImage) {
  Image x = grid2();
  Image moved = translate(x, 1, 0, PaddingScheme::Circular);
  EXPECT_TRUE(images_equal(translate(moved, -1, 0, PaddingScheme::Circular), x));
}

TEST(Translate, ZeroPaddingDropsPixels) {
  Image got = translate(grid2(), 1, 0, PaddingScheme::Zero);
  EXPECT_DOUBLE_EQ(got.at(0, 0, 0), 3);
  EXPECT_DOUBLE_EQ(got.at(1, 0, 0), 0);  // source out of range
  EXPECT_DOUBLE_EQ(got.at(1, 1, 0), 0);
}

TEST(Hflip, ReversesFirstAxis) {
  Image got = hflip(grid2());
  EXPECT_DOUBLE_EQ(got.at(0, 0, 0), 3);
  EXPECT_DOUBLE_EQ(got.at(0, 1, 0), 4);
  EXPECT_DOUBLE_EQ(got.at(1, 0, 0), 1);
  EXPECT_DOUBLE_EQ(got.at(1, 1, 0), 2);
}

TEST(Hflip, Involution) {
  std::mt19937_64 rng(3);
  Image x = oracle::random_image(4, 3, 2, rng);
  EXPECT_TRUE(images_equal(hflip(hflip(x)), x));
}

TEST(Hflip, SymmetricImageIsFixedPoint) {
  Image x(2, 3, 1);
  for (int j = 0; j < 3; ++j) {
    x.at(0, j, 0) = j;
    x.at(1, j, 0) = j;  // palindromic in the first index
  }
  EXPECT_TRUE(images_equal(hflip(x), x));
}

// The canonical-form relation F o T_{a,b} = T_{-a,b} o F, checked by action.
TEST(GroupElement, FlipTranslationCommutationRelation) {
  std::mt19937_64 rng(7);
  Image x = oracle::random_image(4, 5, 1, rng);
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b) {
      Image lhs = hflip(translate(x, a, b, PaddingScheme::Circular));
      Image rhs = translate(hflip(x), -a, b, PaddingScheme::Circular);
      EXPECT_TRUE(images_equal(lhs, rhs)) << "a=" << a << " b=" << b;
    }
}

TEST(GroupElement, CompositionMatchesActionExhaustively) {
  std::mt19937_64 rng(11);
  Image x = oracle::random_image(3, 3, 1, rng);
  TransformGroup g = flip_translation_group(3, 3);
  ASSERT_EQ(g.size(), 18u);
  for (const auto& a : g.elements)
    for (const auto& b : g.elements) {
      GroupElement c = compose(a, b, 3, 3);
      // closure: canonical form is in the enumerated set
      bool found = false;
      for (const auto& e : g.elements) found = found || e == c;
      EXPECT_TRUE(found);
      // homomorphism: acting with the composite equals acting twice
      EXPECT_TRUE(images_equal(apply(c, x), apply(a, apply(b, x))));
    }
}

TEST(GroupElement, IdentityAndInverses) {
  std::mt19937_64 rng(13);
  Image x = oracle::random_image(3, 3, 2, rng);
  const GroupElement id{};
  for (const auto& g : flip_translation_group(3, 3).elements) {
    EXPECT_EQ(compose(g, id, 3, 3), canonical(g, 3, 3));
    EXPECT_EQ(compose(id, g, 3, 3), canonical(g, 3, 3));
    GroupElement gi = inverse(g, 3, 3);
    EXPECT_EQ(compose(g, gi, 3, 3), id);
    EXPECT_EQ(compose(gi, g, 3, 3), id);
    EXPECT_TRUE(images_equal(apply(gi, apply(g, x)), x));
  }
}

TEST(GroupElement, Associativity) {
  TransformGroup g = flip_translation_group(3, 3);
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<size_t> pick(0, g.size() - 1);
  for (int t = 0; t < 200; ++t) {
    const auto &a = g.elements[pick(rng)], &b = g.elements[pick(rng)], &c = g.elements[pick(rng)];
    EXPECT_EQ(compose(compose(a, b, 3, 3), c, 3, 3), compose(a, compose(b, c, 3, 3), 3, 3));
  }
}

TEST(AugmentedKernel, IdentityGroupIsKernelItself) {
  std::mt19937_64 rng(19);
  Image x = oracle::random_image(3, 3, 1, rng);
  Image y = oracle::random_image(3, 3, 1, rng);
  auto k = fc_kernel(PaddingScheme::Circular, KernelFamily::CNNGP);
  EXPECT_DOUBLE_EQ(augmented_kernel(k, identity_group(3, 3), x, y), k(x, y));
}

// Full-translation augmentation of the FC kernel reproduces PQ times the
// GAP kernel under circular padding.
TEST(AugmentedKernel, TranslationAverageOfFcIsGap) {
  std::mt19937_64 rng(23);
  Image x = oracle::random_image(4, 4, 2, rng);
  Image y = oracle::random_image(4, 4, 2, rng);
  for (KernelFamily fam : {KernelFamily::CNNGP, KernelFamily::CNTK}) {
    auto fc = fc_kernel(PaddingScheme::Circular, fam);
    auto gap = gap_kernel(PaddingScheme::Circular, fam);
    const double aug = augmented_kernel(fc, translation_group(4, 4), x, y);
    const double expected = 16.0 * gap(x, y);
    EXPECT_NEAR(aug, expected, 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST(AugmentedKernel, FlipGroupIsTwoElementMean) {
  std::mt19937_64 rng(29);
  Image x = oracle::random_image(4, 3, 1, rng);
  Image y = oracle::random_image(4, 3, 1, rng);
  auto gap = gap_kernel(PaddingScheme::Zero, KernelFamily::CNNGP);
  const double aug = augmented_kernel(gap, flip_group(4, 3), x, y);
  EXPECT_NEAR(aug, 0.5 * (gap(x, y) + gap(hflip(x), y)), 1e-13);
}

TEST(AugmentedKernel, EmptyGroupRejected) {
  TransformGroup g{2, 2, {}};
  auto k = fc_kernel(PaddingScheme::Circular, KernelFamily::CNNGP);
  Image x(2, 2, 1), y(2, 2, 1);
  EXPECT_THROW(augmented_kernel(k, g, x, y), std::invalid_argument);
}

TEST(CheckEquivariance, CircularFcPassesTranslations) {
  auto k = fc_kernel(PaddingScheme::Circular, KernelFamily::CNNGP);
  auto rep = check_equivariance(k, translation_group(3, 3).elements, PaddingScheme::Circular,
                                3, 3, 2, 6, 1e-10, 101);
  EXPECT_TRUE(rep.pass) << rep.max_violation;
}

// Zero-padded convolutions see absolute position, so translating both
// arguments moves mass across the boundary and the kernel value changes.
TEST(CheckEquivariance, ZeroPaddingViolatesTranslations) {
  auto k = fc_kernel(PaddingScheme::Zero, KernelFamily::CNNGP);
  auto rep = check_equivariance(k, translation_group(3, 3).elements, PaddingScheme::Zero,
                                3, 3, 2, 12, 1e-10, 103);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.max_violation, 1e-10);
}

TEST(CheckEquivariance, GapFlipGroupPassesBothPaddings) {
  for (PaddingScheme s : {PaddingScheme::Circular, PaddingScheme::Zero}) {
    auto k = gap_kernel(s, KernelFamily::CNTK);
    auto rep =
        check_equivariance(k, flip_group(4, 3).elements, s, 4, 3, 1, 6, 1e-10, 107);
    EXPECT_TRUE(rep.pass) << padding_name(s) << " violation " << rep.max_violation;
  }
}

// Averaging over the group makes the kernel invariant even when the base
// kernel is not (zero-padding translations averaged over the flip group is
// still only flip-invariant, so use the flip group here).
TEST(AugmentedKernel, AugmentedKernelIsEquivariant) {
  auto base = gap_kernel(PaddingScheme::Zero, KernelFamily::CNNGP);
  TransformGroup g = flip_group(4, 4);
  PairKernelFn aug = [&](const Image& a, const Image& b) {
    return augmented_kernel(base, g, a, b);
  };
  auto rep = check_equivariance(aug, g.elements, PaddingScheme::Zero, 4, 4, 1, 8, 1e-10, 109);
  EXPECT_TRUE(rep.pass) << rep.max_violation;
}

TEST(BuildAugmentedDataset, SingletonGroupCopies) {
  LabeledDataset d = synth_dataset(3, 2, 2, 1, 3, 5);
  LabeledDataset out = build_augmented_dataset(d, identity_group(2, 2));
  ASSERT_EQ(out.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(images_equal(out.images[i], d.images[i]));
    EXPECT_EQ(out.labels[i], d.labels[i]);
  }
}

TEST(BuildAugmentedDataset, FullTranslationsQuadrupleTwoByTwo) {
  LabeledDataset d = synth_dataset(2, 2, 2, 1, 2, 7);
  LabeledDataset out = build_augmented_dataset(d, translation_group(2, 2));
  EXPECT_EQ(out.size(), 8u);
}

TEST(BuildAugmentedDataset, FlipSchemeKeepsOriginalsFirst) {
  LabeledDataset d = synth_dataset(3, 4, 4, 1, 3, 9);
  LabeledDataset out = build_augmented_dataset(d, flip_group(4, 4));
  ASSERT_EQ(out.size(), 6u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(images_equal(out.images[i], d.images[i]));
    EXPECT_TRUE(images_equal(out.images[3 + i], hflip(d.images[i])));
    EXPECT_EQ(out.labels[3 + i], d.labels[i]);
  }
}
