// SPDX-License-Identifier: Apache-2.0
//
// Forward-only reference of the dual-flow fusion of two feature maps from
// consecutive frames: a shared 1x1 conv + BN + SiLU halves each input, the
// halves are concatenated (dynamic flow) and added back onto the current map
// (static flow).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <thread>
#include <vector>

#include "rotstream/error.hpp"

namespace rotstream {

/// C x H x W tensor stored channel-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

  std::size_t channels() const { return c_; }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * h_ + y) * w_ + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * h_ + y) * w_ + x];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const FeatureMap& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Shared 1x1 convolution (C/2 x C, row-major) with bias, followed by an
/// inference-mode batch norm (per-channel scale and shift).
struct DfpWeights {
  std::size_t in_channels = 0;
  std::vector<double> conv;
  std::vector<double> bias;
  std::vector<double> bn_scale;
  std::vector<double> bn_shift;

  std::size_t out_channels() const { return in_channels / 2; }

  static DfpWeights zeros(std::size_t in_channels) {
    const std::size_t half = in_channels / 2;
    return DfpWeights{in_channels, std::vector<double>(half * in_channels, 0.0),
                      std::vector<double>(half, 0.0), std::vector<double>(half, 1.0),
                      std::vector<double>(half, 0.0)};
  }

  void validate() const {
    const std::size_t half = out_channels();
    if (in_channels == 0 || in_channels % 2 != 0) {
      throw Error(ErrorCode::ShapeMismatch, "input channel count must be even and positive");
    }
    if (conv.size() != half * in_channels || bias.size() != half || bn_scale.size() != half ||
        bn_shift.size() != half) {
      throw Error(ErrorCode::ShapeMismatch, "weight dimensions do not match C = " +
                                                std::to_string(in_channels));
    }
  }
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

namespace detail {

// Runs body(c) for every output channel, split across `threads` workers.
// Each channel is written by exactly one worker, so results do not depend
// on the thread count.
template <typename Body>
void for_each_channel(std::size_t channels, unsigned threads, Body body) {
  if (threads <= 1 || channels <= 1) {
    for (std::size_t c = 0; c < channels; ++c) body(c);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t n = std::min<std::size_t>(threads, channels);
  for (std::size_t t = 0; t < n; ++t) {
    pool.emplace_back([=, &body] {
      for (std::size_t c = t; c < channels; c += n) body(c);
    });
  }
}

}  // namespace detail

/// Halves the channel count: per-pixel linear map, batch norm, then SiLU.
inline FeatureMap conv1x1_bn_silu(const FeatureMap& f, const DfpWeights& w, unsigned threads = 1) {
  w.validate();
  if (f.channels() != w.in_channels) {
    throw Error(ErrorCode::ShapeMismatch, "feature map has " + std::to_string(f.channels()) +
                                              " channels, weights expect " +
                                              std::to_string(w.in_channels));
  }
  const std::size_t cin = f.channels();
  const std::size_t plane = f.height() * f.width();
  FeatureMap out(w.out_channels(), f.height(), f.width());
  const double* in = f.data().data();
  double* dst = out.data().data();
  detail::for_each_channel(w.out_channels(), threads, [&](std::size_t o) {
    const double* row = w.conv.data() + o * cin;
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = w.bias[o];
      for (std::size_t c = 0; c < cin; ++c) acc += row[c] * in[c * plane + p];
      dst[o * plane + p] = silu(w.bn_scale[o] * acc + w.bn_shift[o]);
    }
  });
  return out;
}

/// Dynamic flow: the shared-weight reductions of both inputs, concatenated
/// along channels (current frame first).
inline FeatureMap dfp_dynamic(const FeatureMap& p_t, const FeatureMap& p_tm1, const DfpWeights& w,
                              unsigned threads = 1) {
  if (!p_t.same_shape(p_tm1)) {
    throw Error(ErrorCode::ShapeMismatch, "current and previous feature maps differ in shape");
  }
  const FeatureMap a = conv1x1_bn_silu(p_t, w, threads);
  const FeatureMap b = conv1x1_bn_silu(p_tm1, w, threads);
  FeatureMap out(p_t.channels(), p_t.height(), p_t.width());
  auto it = std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), it);
  return out;
}

/// Fused map p_t + dynamic flow; same shape as the inputs.
inline FeatureMap dfp_fuse(const FeatureMap& p_t, const FeatureMap& p_tm1, const DfpWeights& w,
                           unsigned threads = 1) {
  FeatureMap out = dfp_dynamic(p_t, p_tm1, w, threads);
  for (std::size_t k = 0; k < out.data().size(); ++k) out.data()[k] += p_t.data()[k];
  return out;
}

}  // namespace rotstream
