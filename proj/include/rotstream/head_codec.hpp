// SPDX-License-Identifier: Apache-2.0
//
// Anchor-based rotated-box head: decoding of raw head outputs, encoding of
// ground truth into regression targets, and positive-slot assignment.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rotstream/error.hpp"
#include "rotstream/geometry.hpp"

namespace rotstream {

struct AnchorShape {
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(AnchorShape, AnchorShape) = default;
};

struct AnchorLevel {
  int stride = 0;
  std::array<AnchorShape, 3> anchors{};

  friend bool operator==(const AnchorLevel&, const AnchorLevel&) = default;
};

/// Anchor layout of the head plus the angle range parameters: decoded
/// angles lie in [-beta, alpha - beta].
struct AnchorConfig {
  std::vector<AnchorLevel> levels;
  int image_size = 640;
  double alpha = 2.0 * std::numbers::pi;
  double beta = std::numbers::pi;

  friend bool operator==(const AnchorConfig&, const AnchorConfig&) = default;

  int grid_size(std::size_t level) const { return image_size / levels.at(level).stride; }

  std::size_t slot_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const auto g = static_cast<std::size_t>(grid_size(k));
      n += g * g * 3;
    }
    return n;
  }

  void validate() const {
    if (levels.empty()) throw Error(ErrorCode::InvalidArgument, "anchor config has no levels");
    if (image_size <= 0) throw Error(ErrorCode::InvalidArgument, "image_size must be positive");
    for (const AnchorLevel& lv : levels) {
      if (lv.stride <= 0 || image_size % lv.stride != 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "stride " + std::to_string(lv.stride) + " does not divide image_size " +
                        std::to_string(image_size));
      }
      for (const AnchorShape& a : lv.anchors) {
        if (!(a.w > 0.0) || !(a.h > 0.0) || !std::isfinite(a.w) || !std::isfinite(a.h)) {
          throw Error(ErrorCode::InvalidArgument, "anchor extents must be positive and finite");
        }
      }
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
      throw Error(ErrorCode::InvalidArgument, "alpha must be positive and beta finite");
    }
  }

  /// Strides 8/16/32 with the WoodScape anchors. The second and third levels
  /// share their anchor values.
  static AnchorConfig woodscape() {
    return AnchorConfig{{{8, {{{24, 45}, {28, 24}, {50, 77}}}},
                         {16, {{{52, 39}, {92, 145}, {101, 69}}}},
                         {32, {{{52, 39}, {92, 145}, {101, 69}}}}}};
  }

  static AnchorConfig argoverse() {
    return AnchorConfig{{{8, {{{18, 33}, {28, 61}, {48, 68}}}},
                         {16, {{{45, 101}, {63, 113}, {81, 134}}}},
                         {32, {{{91, 144}, {137, 178}, {194, 250}}}}}};
  }
};

/// One anchor position: level index, grid column `i`, grid row `j` and
/// anchor index in [0, 3).
struct Slot {
  std::size_t level = 0;
  int i = 0;
  int j = 0;
  std::size_t anchor = 0;

  friend bool operator==(const Slot&, const Slot&) = default;
};

/// Flat index ordered by (level, row, column, anchor).
inline std::size_t slot_index(const AnchorConfig& cfg, const Slot& s) {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < s.level; ++k) {
    const auto g = static_cast<std::size_t>(cfg.grid_size(k));
    offset += g * g * 3;
  }
  const auto g = static_cast<std::size_t>(cfg.grid_size(s.level));
  return offset + (static_cast<std::size_t>(s.j) * g + static_cast<std::size_t>(s.i)) * 3 + s.anchor;
}

inline Slot slot_at(const AnchorConfig& cfg, std::size_t index) {
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    const auto g = static_cast<std::size_t>(cfg.grid_size(k));
    const std::size_t n = g * g * 3;
    if (index < n) {
      const std::size_t cell = index / 3;
      return Slot{k, static_cast<int>(cell % g), static_cast<int>(cell / g), index % 3};
    }
    index -= n;
  }
  throw Error(ErrorCode::InvalidArgument, "slot index out of range");
}

inline void check_slot(const AnchorConfig& cfg, const Slot& s) {
  if (s.level >= cfg.levels.size() || s.anchor >= 3) {
    throw Error(ErrorCode::InvalidArgument, "slot level or anchor out of range");
  }
  const int g = cfg.grid_size(s.level);
  if (s.i < 0 || s.j < 0 || s.i >= g || s.j >= g) {
    throw Error(ErrorCode::InvalidArgument, "slot cell out of grid bounds");
  }
}

/// The six pre-activation head outputs for one anchor.
struct RawValues {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
  double tangle = 0.0;
  double tconf = 0.0;

  friend bool operator==(const RawValues&, const RawValues&) = default;
};

struct RawCellPrediction {
  RawValues t;
  Slot slot;
};

/// Raw head outputs for every slot of a configuration.
class HeadTensor {
 public:
  explicit HeadTensor(const AnchorConfig& cfg) : values_(cfg.slot_count()) {}

  std::size_t size() const { return values_.size(); }
  RawValues& operator[](std::size_t index) { return values_[index]; }
  const RawValues& operator[](std::size_t index) const { return values_[index]; }
  std::span<RawValues> values() { return values_; }
  std::span<const RawValues> values() const { return values_; }

 private:
  std::vector<RawValues> values_;
};

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Decodes raw outputs into a box in image coordinates. The angle is left in
/// the head range [-beta, alpha - beta] and is not canonicalized.
inline RotatedBox decode(const RawValues& t, const Slot& slot, const AnchorConfig& cfg) {
  check_slot(cfg, slot);
  const AnchorLevel& lv = cfg.levels[slot.level];
  const AnchorShape anchor = lv.anchors[slot.anchor];
  const double s = lv.stride;
  return RotatedBox{s * (slot.i + sigmoid(t.tx)),
                    s * (slot.j + sigmoid(t.ty)),
                    anchor.w * std::exp(t.tw),
                    anchor.h * std::exp(t.th),
                    cfg.alpha * sigmoid(t.tangle) - cfg.beta,
                    sigmoid(t.tconf)};
}

inline RotatedBox decode(const RawCellPrediction& raw, const AnchorConfig& cfg) {
  return decode(raw.t, raw.slot, cfg);
}

/// Regression targets for one slot. `tx`/`ty` are cell offsets in [0, 1)
/// (compared against the sigmoid of the raw output), `tw`/`th` are raw log
/// ratios, `angle` is compared in decoded space.
struct EncodedTarget {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
  double angle = 0.0;
  double conf = 1.0;
};

/// Throws CellMismatch when the box center is outside the slot's cell.
inline EncodedTarget encode(const RotatedBox& gt, const Slot& slot, const AnchorConfig& cfg) {
  check_slot(cfg, slot);
  validate(gt);
  const AnchorLevel& lv = cfg.levels[slot.level];
  const double s = lv.stride;
  const bool in_x = s * slot.i <= gt.cx && gt.cx < s * (slot.i + 1);
  const bool in_y = s * slot.j <= gt.cy && gt.cy < s * (slot.j + 1);
  if (!in_x || !in_y) {
    throw Error(ErrorCode::CellMismatch, "center of " + describe(gt) + " outside cell (" +
                                             std::to_string(slot.i) + ", " +
                                             std::to_string(slot.j) + ")");
  }
  constexpr double kBelowOne = 1.0 - 1e-16;
  const AnchorShape anchor = lv.anchors[slot.anchor];
  return EncodedTarget{std::clamp(gt.cx / s - slot.i, 0.0, kBelowOne),
                       std::clamp(gt.cy / s - slot.j, 0.0, kBelowOne),
                       std::log(gt.w / anchor.w),
                       std::log(gt.h / anchor.h),
                       gt.angle,
                       1.0};
}

struct PositiveSlot {
  Slot slot;
  std::size_t gt_index = 0;
};

/// Positive slots; every other slot of the configuration is negative.
struct TargetAssignment {
  std::vector<PositiveSlot> positives;
  std::size_t total_slots = 0;

  std::size_t negative_count() const { return total_slots - positives.size(); }
};

/// IoU of two axis-aligned boxes of the given extents sharing a center.
inline double shape_iou(double w, double h, AnchorShape a) {
  const double inter = std::min(w, a.w) * std::min(h, a.h);
  return inter / (w * h + a.w * a.h - inter);
}

/// One positive slot per ground truth: the cell containing its center, at the
/// (level, anchor) with the best shape IoU. Ties go to the lower level, then
/// the lower anchor. When that slot is already taken by an earlier box, the
/// next-best free (level, anchor) is used; AssignmentConflict when none is left.
inline TargetAssignment assign_targets(std::span<const RotatedBox> gts, const AnchorConfig& cfg) {
  cfg.validate();
  TargetAssignment out;
  out.total_slots = cfg.slot_count();
  std::vector<bool> taken(out.total_slots, false);

  struct Candidate {
    Slot slot;
    double iou;
  };
  std::vector<Candidate> candidates;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const RotatedBox& box = gts[g];
    validate(box);
    const double size = cfg.image_size;
    if (!(box.cx >= 0.0 && box.cx < size && box.cy >= 0.0 && box.cy < size)) {
      throw Error(ErrorCode::OutOfImage, describe(box));
    }
    candidates.clear();
    for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
      const AnchorLevel& lv = cfg.levels[k];
      const int i = std::min(static_cast<int>(box.cx / lv.stride), cfg.grid_size(k) - 1);
      const int j = std::min(static_cast<int>(box.cy / lv.stride), cfg.grid_size(k) - 1);
      for (std::size_t n = 0; n < 3; ++n) {
        candidates.push_back({Slot{k, i, j, n}, shape_iou(box.w, box.h, lv.anchors[n])});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.iou > b.iou; });
    bool placed = false;
    for (const Candidate& c : candidates) {
      const std::size_t idx = slot_index(cfg, c.slot);
      if (!taken[idx]) {
        taken[idx] = true;
        out.positives.push_back({c.slot, g});
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::AssignmentConflict,
                  "every candidate slot for ground truth " + std::to_string(g) + " is taken");
    }
  }
  return out;
}

}  // namespace rotstream
