// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rotstream/angle_loss.hpp"
#include "rotstream/error.hpp"
#include "rotstream/head_codec.hpp"

namespace rotstream {

struct LossBreakdown {
  double l_txty = 0.0;
  double l_twth = 0.0;
  double l_bangle = 0.0;
  double l_bconf = 0.0;
  double l_total = 0.0;
};

/// Binary cross entropy of prediction `p` against target `y`.
inline double bce(double p, double y) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::ProbabilityOutOfRange, "bce prediction must lie in (0, 1)");
  }
  if (!(y >= 0.0 && y <= 1.0)) {
    throw Error(ErrorCode::ProbabilityOutOfRange, "bce target must lie in [0, 1]");
  }
  return -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
}

/// bce(sigmoid(t), y) evaluated without forming the sigmoid, so saturated
/// logits stay finite. Derivative with respect to t is sigmoid(t) - y.
inline double bce_with_logit(double t, double y) {
  return std::max(t, 0.0) - y * t + std::log1p(std::exp(-std::abs(t)));
}

namespace detail {

inline std::vector<std::ptrdiff_t> positive_lookup(const TargetAssignment& assignment,
                                                   std::span<const RotatedBox> gts,
                                                   const AnchorConfig& cfg) {
  std::vector<std::ptrdiff_t> gt_of_slot(cfg.slot_count(), -1);
  for (const PositiveSlot& p : assignment.positives) {
    if (p.gt_index >= gts.size()) {
      throw Error(ErrorCode::InvalidArgument, "assignment references a missing ground truth");
    }
    const std::size_t idx = slot_index(cfg, p.slot);
    if (gt_of_slot[idx] >= 0) throw Error(ErrorCode::InvalidArgument, "slot assigned twice");
    gt_of_slot[idx] = static_cast<std::ptrdiff_t>(p.gt_index);
  }
  return gt_of_slot;
}

template <bool WithGrad>
LossBreakdown accumulate_loss(const HeadTensor& head, const TargetAssignment& assignment,
                              std::span<const RotatedBox> gts, const AnchorConfig& cfg,
                              AngleLossKind kind, HeadTensor* grad) {
  cfg.validate();
  if (head.size() != cfg.slot_count()) {
    throw Error(ErrorCode::ShapeMismatch, "head tensor does not match the anchor config");
  }
  const std::vector<std::ptrdiff_t> gt_of_slot = positive_lookup(assignment, gts, cfg);
  LossBreakdown out;
  for (std::size_t idx = 0; idx < head.size(); ++idx) {
    const RawValues& t = head[idx];
    const std::ptrdiff_t g = gt_of_slot[idx];
    if (g < 0) {
      out.l_bconf += bce_with_logit(t.tconf, 0.0);
      if constexpr (WithGrad) (*grad)[idx].tconf = sigmoid(t.tconf);
      continue;
    }
    const Slot slot = slot_at(cfg, idx);
    const EncodedTarget target = encode(gts[static_cast<std::size_t>(g)], slot, cfg);
    out.l_txty += bce_with_logit(t.tx, target.tx) + bce_with_logit(t.ty, target.ty);
    const double dw = target.tw - t.tw;
    const double dh = target.th - t.th;
    out.l_twth += dw * dw + dh * dh;
    const double s_angle = sigmoid(t.tangle);
    const double angle = cfg.alpha * s_angle - cfg.beta;
    const LossEval le = angle_loss(kind, angle, target.angle);
    out.l_bangle += le.value;
    out.l_bconf += bce_with_logit(t.tconf, target.conf);
    if constexpr (WithGrad) {
      RawValues& d = (*grad)[idx];
      d.tx = sigmoid(t.tx) - target.tx;
      d.ty = sigmoid(t.ty) - target.ty;
      d.tw = -2.0 * dw;
      d.th = -2.0 * dh;
      d.tangle = le.d_dt * cfg.alpha * s_angle * (1.0 - s_angle);
      d.tconf = sigmoid(t.tconf) - target.conf;
    }
  }
  out.l_total = out.l_txty + out.l_twth + out.l_bangle + out.l_bconf;
  return out;
}

}  // namespace detail

/// Sum of the four regression terms over all slots, visited in
/// (level, row, column, anchor) order. Positives contribute all four terms,
/// negatives only the confidence term against target 0.
inline LossBreakdown total_loss(const HeadTensor& head, const TargetAssignment& assignment,
                                std::span<const RotatedBox> gts, const AnchorConfig& cfg,
                                AngleLossKind kind) {
  return detail::accumulate_loss<false>(head, assignment, gts, cfg, kind, nullptr);
}

struct LossWithGradient {
  LossBreakdown loss;
  HeadTensor grad;
};

/// total_loss plus the derivative of l_total with respect to every raw output.
inline LossWithGradient total_loss_with_gradient(const HeadTensor& head,
                                                 const TargetAssignment& assignment,
                                                 std::span<const RotatedBox> gts,
                                                 const AnchorConfig& cfg, AngleLossKind kind) {
  LossWithGradient out{{}, HeadTensor(cfg)};
  out.loss = detail::accumulate_loss<true>(head, assignment, gts, cfg, kind, &out.grad);
  return out;
}

}  // namespace rotstream
