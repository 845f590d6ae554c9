// SPDX-License-Identifier: Apache-2.0
//
// Angle regression losses for rotated boxes. All functions take the decoded
// predicted angle `dt` and the ground-truth angle `gt` in radians and return
// the loss value together with its derivative with respect to `dt`.

#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "rotstream/error.hpp"
#include "rotstream/geometry.hpp"

namespace rotstream {

enum class AngleLossVariant {
  Normal,          // plain |dt - gt| or (dt - gt)^2
  Test,            // remainder of the residual modulo pi
  Periodic,        // triangle wave with zeros at dt - gt in pi*Z
  Piecewise,       // periodic below the peak, flat pi/2 above it
  PiecewiseProse,  // periodic below the peak, unit-slope V around gt + pi above it
};

enum class Norm { L1, L2 };

struct AngleLossKind {
  AngleLossVariant variant = AngleLossVariant::Periodic;
  Norm norm = Norm::L1;

  friend bool operator==(AngleLossKind, AngleLossKind) = default;
};

struct LossEval {
  double value = 0.0;
  double d_dt = 0.0;
};

/// Floored modulo: x - p*floor(x/p), always in [0, p).
inline double mod_pos(double x, double p) {
  double r = x - p * std::floor(x / p);
  if (r >= p) r -= p;
  if (r < 0.0) r = 0.0;
  return r;
}

inline std::string_view to_string(AngleLossVariant v) {
  switch (v) {
    case AngleLossVariant::Normal: return "normal";
    case AngleLossVariant::Test: return "test";
    case AngleLossVariant::Periodic: return "periodic";
    case AngleLossVariant::Piecewise: return "piecewise";
    case AngleLossVariant::PiecewiseProse: return "piecewise-prose";
  }
  return "unknown";
}

inline std::string_view to_string(Norm n) { return n == Norm::L1 ? "l1" : "l2"; }

inline AngleLossVariant parse_angle_loss_variant(std::string_view s) {
  if (s == "normal") return AngleLossVariant::Normal;
  if (s == "test") return AngleLossVariant::Test;
  if (s == "periodic") return AngleLossVariant::Periodic;
  if (s == "piecewise") return AngleLossVariant::Piecewise;
  if (s == "piecewise-prose") return AngleLossVariant::PiecewiseProse;
  throw Error(ErrorCode::InvalidArgument, "unknown angle loss kind '" + std::string(s) + "'");
}

inline Norm parse_norm(std::string_view s) {
  if (s == "l1" || s == "L1") return Norm::L1;
  if (s == "l2" || s == "L2") return Norm::L2;
  throw Error(ErrorCode::InvalidArgument, "unknown norm '" + std::string(s) + "'");
}

namespace detail {

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Loss of a residual `u` with du/d(dt) = 1.
inline LossEval apply_norm(Norm norm, double u) {
  if (norm == Norm::L1) return {std::abs(u), sign(u)};
  return {u * u, 2.0 * u};
}

inline LossEval normal_loss(Norm norm, double dt, double gt) { return apply_norm(norm, dt - gt); }

inline LossEval test_loss(Norm norm, double dt, double gt) {
  const double m = mod_pos(dt - gt, kPi);
  LossEval out = apply_norm(norm, m);
  if (m == 0.0) out.d_dt = 0.0;
  return out;
}

inline LossEval periodic_loss(Norm norm, double dt, double gt) {
  const double m = mod_pos(dt - gt - kHalfPi, kPi);
  LossEval out = apply_norm(norm, m - kHalfPi);
  if (m == 0.0) out.d_dt = 0.0;
  return out;
}

inline LossEval piecewise_loss(Norm norm, double dt, double gt, bool prose) {
  const double g = wrap_half_turn(gt);
  const double delta = dt - g - kHalfPi;
  if (delta < 0.0) return periodic_loss(norm, dt, g);
  if (delta == 0.0) return {periodic_loss(norm, dt, g).value, 0.0};
  if (!prose) {
    // Literal reading: |mod(0, pi) - pi/2| on the whole delta > 0 branch.
    return {apply_norm(norm, kHalfPi).value, 0.0};
  }
  return apply_norm(norm, delta - kHalfPi);
}

}  // namespace detail

/// Angle loss and its derivative with respect to the predicted angle. The
/// derivative is 0 at every non-differentiable point. The piecewise variants
/// reduce `gt` modulo pi into [-pi/2, pi/2) before branching, so every
/// variant except Normal depends on `gt` only modulo pi.
inline LossEval angle_loss(AngleLossKind kind, double dt, double gt) {
  switch (kind.variant) {
    case AngleLossVariant::Normal: return detail::normal_loss(kind.norm, dt, gt);
    case AngleLossVariant::Test: return detail::test_loss(kind.norm, dt, gt);
    case AngleLossVariant::Periodic: return detail::periodic_loss(kind.norm, dt, gt);
    case AngleLossVariant::Piecewise: return detail::piecewise_loss(kind.norm, dt, gt, false);
    case AngleLossVariant::PiecewiseProse: return detail::piecewise_loss(kind.norm, dt, gt, true);
  }
  throw InvariantViolation("unhandled angle loss variant");
}

}  // namespace rotstream
