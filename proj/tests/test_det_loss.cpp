// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rotstream/det_loss.hpp"

namespace rotstream {
namespace {

constexpr AngleLossKind kPeriodicL1{AngleLossVariant::Periodic, Norm::L1};

AnchorConfig small_config() {
  AnchorConfig cfg = AnchorConfig::woodscape();
  cfg.image_size = 64;  // grids 8, 4, 2
  return cfg;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Raw values that decode exactly onto `gt` at `slot`, with confidence logit `tconf`.
RawValues exact_raw(const RotatedBox& gt, const Slot& slot, const AnchorConfig& cfg, double tconf) {
  const EncodedTarget e = encode(gt, slot, cfg);
  return RawValues{logit(e.tx), logit(e.ty), e.tw, e.th, logit((gt.angle + cfg.beta) / cfg.alpha),
                   tconf};
}

double& field(RawValues& r, int f) {
  switch (f) {
    case 0: return r.tx;
    case 1: return r.ty;
    case 2: return r.tw;
    case 3: return r.th;
    case 4: return r.tangle;
    default: return r.tconf;
  }
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.5, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.9, 1), -std::log(0.9), 1e-15);
  EXPECT_NEAR(bce(0.9, 1), 0.10536, 1e-5);
}

TEST(Bce, RejectsSaturatedProbabilities) {
  for (double p : {0.0, 1.0, -0.1, 1.5}) {
    try {
      bce(p, 1.0);
      FAIL() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ProbabilityOutOfRange);
    }
  }
}

TEST(Bce, LogitFormAgrees) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> t(-15, 15), y(0, 1);
  for (int k = 0; k < 10000; ++k) {
    const double tt = t(rng), yy = y(rng);
    ASSERT_NEAR(bce_with_logit(tt, yy), bce(sigmoid(tt), yy), 1e-9);
  }
  EXPECT_TRUE(std::isfinite(bce_with_logit(1000.0, 0.0)));
  EXPECT_NEAR(bce_with_logit(1000.0, 0.0), 1000.0, 1e-9);
}

TEST(TotalLoss, ZeroPositives) {
  const AnchorConfig cfg = small_config();
  HeadTensor head(cfg);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-3, 3);
  double expected = 0.0;
  for (RawValues& r : head.values()) {
    r = RawValues{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    expected += bce(sigmoid(r.tconf), 0.0);
  }
  const std::vector<RotatedBox> gts;
  const LossBreakdown l = total_loss(head, assign_targets(gts, cfg), gts, cfg, kPeriodicL1);
  EXPECT_EQ(l.l_txty, 0.0);
  EXPECT_EQ(l.l_twth, 0.0);
  EXPECT_EQ(l.l_bangle, 0.0);
  EXPECT_NEAR(l.l_bconf, expected, 1e-9);
}

TEST(TotalLoss, PerfectFitLimit) {
  const AnchorConfig cfg = small_config();
  const std::vector<RotatedBox> gts{{12.5, 20.25, 30, 50, 0.4, {}}, {50, 40, 90, 140, -1.0, {}}};
  const TargetAssignment a = assign_targets(gts, cfg);
  HeadTensor head(cfg);
  for (RawValues& r : head.values()) r.tconf = -40.0;
  for (const PositiveSlot& p : a.positives) {
    head[slot_index(cfg, p.slot)] = exact_raw(gts[p.gt_index], p.slot, cfg, 40.0);
  }
  const LossBreakdown l = total_loss(head, a, gts, cfg, kPeriodicL1);
  // BCE against a fractional target bottoms out at its entropy, not at 0.
  double entropy = 0.0;
  for (const PositiveSlot& p : a.positives) {
    const EncodedTarget e = encode(gts[p.gt_index], p.slot, cfg);
    for (double y : {e.tx, e.ty}) {
      if (y > 0.0) entropy -= y * std::log(y) + (1 - y) * std::log1p(-y);
    }
  }
  EXPECT_NEAR(l.l_txty, entropy, 1e-9);
  EXPECT_NEAR(l.l_twth, 0.0, 1e-20);
  EXPECT_NEAR(l.l_bangle, 0.0, 1e-9);
  EXPECT_LT(l.l_bconf, 1e-12);
}

TEST(TotalLoss, AngleErrorOfQuarterTurn) {
  const AnchorConfig cfg = small_config();
  const std::vector<RotatedBox> gts{{12, 20, 30, 50, -kHalfPi / 2, {}}};
  const TargetAssignment a = assign_targets(gts, cfg);
  HeadTensor head(cfg);
  const Slot s = a.positives[0].slot;
  RotatedBox off = gts[0];
  off.angle += kHalfPi;
  head[slot_index(cfg, s)] = exact_raw(off, s, cfg, 0.0);
  const LossBreakdown l = total_loss(head, a, gts, cfg, kPeriodicL1);
  EXPECT_NEAR(l.l_bangle, kHalfPi, 1e-9);
}

TEST(TotalLoss, ComponentsAdditiveAndNonNegative) {
  const AnchorConfig cfg = small_config();
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-4, 4), pos(0, 64), ext(4, 100), ang(-kHalfPi, kHalfPi);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RotatedBox> gts;
    for (int k = 0; k < 5; ++k) gts.push_back({pos(rng), pos(rng), ext(rng), ext(rng), ang(rng), {}});
    const TargetAssignment a = assign_targets(gts, cfg);
    HeadTensor head(cfg);
    for (RawValues& r : head.values()) r = RawValues{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    for (AngleLossVariant v : {AngleLossVariant::Normal, AngleLossVariant::Periodic,
                               AngleLossVariant::Piecewise}) {
      const LossBreakdown l = total_loss(head, a, gts, cfg, {v, Norm::L2});
      ASSERT_GE(l.l_txty, 0.0);
      ASSERT_GE(l.l_twth, 0.0);
      ASSERT_GE(l.l_bangle, 0.0);
      ASSERT_GE(l.l_bconf, 0.0);
      ASSERT_EQ(l.l_total, l.l_txty + l.l_twth + l.l_bangle + l.l_bconf);
    }
  }
}

TEST(TotalLoss, Reproducible) {
  const AnchorConfig cfg = small_config();
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(-4, 4);
  const std::vector<RotatedBox> gts{{10, 10, 20, 40, 0.2, {}}};
  HeadTensor head(cfg);
  for (RawValues& r : head.values()) r = RawValues{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
  const TargetAssignment a = assign_targets(gts, cfg);
  const LossBreakdown l1 = total_loss(head, a, gts, cfg, kPeriodicL1);
  const LossBreakdown l2 = total_loss_with_gradient(head, a, gts, cfg, kPeriodicL1).loss;
  EXPECT_EQ(l1.l_total, l2.l_total);
}

TEST(TotalLoss, ShapeMismatch) {
  const AnchorConfig cfg = small_config();
  HeadTensor head(AnchorConfig::woodscape());
  const std::vector<RotatedBox> gts;
  try {
    total_loss(head, assign_targets(gts, cfg), gts, cfg, kPeriodicL1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  const AnchorConfig cfg = small_config();
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(-3, 3), pos(0, 64), ext(4, 100), ang(-kHalfPi, kHalfPi);
  std::vector<RotatedBox> gts;
  for (int k = 0; k < 6; ++k) gts.push_back({pos(rng), pos(rng), ext(rng), ext(rng), ang(rng), {}});
  const TargetAssignment a = assign_targets(gts, cfg);
  HeadTensor head(cfg);
  for (RawValues& r : head.values()) r = RawValues{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};

  for (AngleLossVariant v : {AngleLossVariant::Normal, AngleLossVariant::Test,
                             AngleLossVariant::Periodic, AngleLossVariant::Piecewise,
                             AngleLossVariant::PiecewiseProse}) {
    for (Norm n : {Norm::L1, Norm::L2}) {
      const AngleLossKind kind{v, n};
      const LossWithGradient lg = total_loss_with_gradient(head, a, gts, cfg, kind);
      for (const PositiveSlot& p : a.positives) {
        const std::size_t idx = slot_index(cfg, p.slot);
        for (int f = 0; f < 6; ++f) {
          if (f == 4) {
            // Skip angle samples near a kink of any variant.
            const double r = cfg.alpha * sigmoid(head[idx].tangle) - cfg.beta - gts[p.gt_index].angle;
            const double m = mod_pos(r, kHalfPi);
            if (std::min(m, kHalfPi - m) < 1e-3) continue;
          }
          HeadTensor probe = head;
          const double x0 = field(probe[idx], f);
          auto loss_at = [&](double x) {
            field(probe[idx], f) = x;
            return total_loss(probe, a, gts, cfg, kind).l_total;
          };
          const double fd = oracle::central_difference(loss_at, x0);
          RawValues g = lg.grad[idx];
          ASSERT_LT(oracle::gradient_error(field(g, f), fd), 1e-4)
              << to_string(v) << "/" << to_string(n) << " field " << f;
        }
      }
      // A negative slot only carries the confidence gradient.
      const std::size_t neg = a.positives[0].slot == slot_at(cfg, 0) ? 1 : 0;
      RawValues g = lg.grad[neg];
      EXPECT_EQ(g.tx, 0.0);
      EXPECT_EQ(g.tangle, 0.0);
      EXPECT_NEAR(g.tconf, sigmoid(head[neg].tconf), 1e-15);
    }
  }
}

TEST(TotalLoss, MonotoneAlongPathToTarget) {
  const AnchorConfig cfg = small_config();
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> u(-2, 2), pos(0, 64), ext(4, 100), ang(-1.2, 1.2),
      angle_off(-1.4, 1.4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<RotatedBox> gts{{pos(rng), pos(rng), ext(rng), ext(rng), ang(rng), {}}};
    const TargetAssignment a = assign_targets(gts, cfg);
    const Slot s = a.positives[0].slot;
    const std::size_t idx = slot_index(cfg, s);
    RawValues target = exact_raw(gts[0], s, cfg, 20.0);
    RotatedBox start_box = gts[0];
    // Start within a quarter turn of the target so the periodic loss is monotone on the path.
    start_box.angle += angle_off(rng);
    RawValues start = exact_raw(start_box, s, cfg, u(rng));
    start.tx += u(rng);
    start.ty += u(rng);
    start.tw += u(rng);
    start.th += u(rng);
    HeadTensor head(cfg);
    for (RawValues& r : head.values()) r.tconf = u(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 10; ++step) {
      const double lam = step / 10.0;
      RawValues r;
      for (int f = 0; f < 6; ++f) field(r, f) = field(start, f) + lam * (field(target, f) - field(start, f));
      head[idx] = r;
      const double l = total_loss(head, a, gts, cfg, kPeriodicL1).l_total;
      ASSERT_LE(l, prev + 1e-12) << "trial " << trial << " step " << step;
      prev = l;
    }
  }
}

}  // namespace
}  // namespace rotstream
