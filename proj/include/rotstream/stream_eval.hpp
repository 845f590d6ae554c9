// SPDX-License-Identifier: Apache-2.0
//
// Detection evaluation for single-class rotated boxes: greedy matching,
// precision/recall curves, COCO-style 101-point AP, and the latency-shifted
// streaming protocol where detections of frame t are scored against the
// ground truth of frame t + k.

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "rotstream/error.hpp"
#include "rotstream/geometry.hpp"

namespace rotstream {

/// Ground truth and (optionally) detections of one video frame.
struct FrameRecord {
  std::string sequence_id;
  long frame_index = 0;
  std::vector<RotatedBox> gts;
  std::vector<RotatedBox> dets;
};

enum class TripletMode { Offline, Online };

inline std::string_view to_string(TripletMode m) {
  return m == TripletMode::Offline ? "offline" : "online";
}

/// (F_t, F_{t-1}, G) unit. Frame members are positions in the frame list the
/// triplet was built from; `target` is the frame whose ground truth is `g`
/// (t for offline, t + 1 for online).
struct Triplet {
  std::size_t current = 0;
  std::size_t previous = 0;
  std::size_t target = 0;
  std::vector<RotatedBox> g;
  TripletMode mode = TripletMode::Offline;
};

namespace detail {

using FrameIndex = std::map<std::string, std::map<long, std::size_t>, std::less<>>;

inline FrameIndex index_frames(std::span<const FrameRecord> frames) {
  FrameIndex index;
  for (std::size_t p = 0; p < frames.size(); ++p) {
    auto [it, inserted] = index[frames[p].sequence_id].emplace(frames[p].frame_index, p);
    if (!inserted) {
      throw Error(ErrorCode::InvalidArgument, "duplicate frame " +
                                                  std::to_string(frames[p].frame_index) +
                                                  " in sequence '" + frames[p].sequence_id + "'");
    }
  }
  return index;
}

inline const std::size_t* find_frame(const FrameIndex& index, const std::string& seq, long frame) {
  const auto s = index.find(seq);
  if (s == index.end()) return nullptr;
  const auto f = s->second.find(frame);
  return f == s->second.end() ? nullptr : &f->second;
}

}  // namespace detail

/// Offline: one triplet per frame t whose predecessor t-1 exists.
/// Online: additionally requires t+1, whose ground truth becomes the target.
/// Triplets never span sequences and follow the input frame order.
inline std::vector<Triplet> build_triplets(std::span<const FrameRecord> frames, TripletMode mode) {
  const detail::FrameIndex index = detail::index_frames(frames);
  std::vector<Triplet> out;
  for (std::size_t p = 0; p < frames.size(); ++p) {
    const FrameRecord& f = frames[p];
    const std::size_t* prev = detail::find_frame(index, f.sequence_id, f.frame_index - 1);
    if (!prev) continue;
    std::size_t target = p;
    if (mode == TripletMode::Online) {
      const std::size_t* next = detail::find_frame(index, f.sequence_id, f.frame_index + 1);
      if (!next) continue;
      target = *next;
    }
    out.push_back(Triplet{p, *prev, target, frames[target].gts, mode});
  }
  return out;
}

/// One detection after matching; `det_index` is its position in the frame's
/// detection list.
struct DetectionFlag {
  double conf = 0.0;
  bool tp = false;
  std::size_t det_index = 0;
  std::ptrdiff_t gt_index = -1;
  double iou = 0.0;
};

struct FrameMatch {
  /// Kept detections in matching order (confidence descending, input order on ties).
  std::vector<DetectionFlag> flags;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

namespace detail {

struct PreparedFrame {
  std::vector<std::size_t> order;  // kept detections, sorted
  std::vector<double> iou;         // order.size() x gt_count
  std::size_t gt_count = 0;
};

inline double detection_conf(const RotatedBox& d) {
  if (!d.conf) throw Error(ErrorCode::InvalidArgument, "detection without confidence");
  return *d.conf;
}

inline PreparedFrame prepare_frame(std::span<const RotatedBox> dets,
                                   std::span<const RotatedBox> gts, double conf_min) {
  PreparedFrame pf;
  pf.gt_count = gts.size();
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (detection_conf(dets[d]) > conf_min) pf.order.push_back(d);
  }
  std::stable_sort(pf.order.begin(), pf.order.end(), [&](std::size_t a, std::size_t b) {
    return *dets[a].conf > *dets[b].conf;
  });
  pf.iou.resize(pf.order.size() * gts.size());
  for (std::size_t r = 0; r < pf.order.size(); ++r) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      pf.iou[r * gts.size() + g] = rotated_iou(dets[pf.order[r]], gts[g]);
    }
  }
  return pf;
}

inline FrameMatch greedy_match(const PreparedFrame& pf, std::span<const RotatedBox> dets,
                               double iou_threshold) {
  FrameMatch m;
  std::vector<bool> used(pf.gt_count, false);
  for (std::size_t r = 0; r < pf.order.size(); ++r) {
    std::ptrdiff_t best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < pf.gt_count; ++g) {
      const double v = pf.iou[r * pf.gt_count + g];
      if (used[g] || v < iou_threshold) continue;
      if (best < 0 || v > best_iou) {
        best = static_cast<std::ptrdiff_t>(g);
        best_iou = v;
      }
    }
    DetectionFlag flag{*dets[pf.order[r]].conf, best >= 0, pf.order[r], best, best_iou};
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      ++m.tp;
    } else {
      ++m.fp;
    }
    m.flags.push_back(flag);
  }
  m.fn = pf.gt_count - m.tp;
  return m;
}

}  // namespace detail

/// Greedy matching of one frame. Detections with conf <= conf_min are
/// dropped; the rest, by descending confidence, each take the unmatched
/// ground truth of highest IoU >= iou_threshold (lowest index on ties).
inline FrameMatch match_frame(std::span<const RotatedBox> dets, std::span<const RotatedBox> gts,
                              double iou_threshold, double conf_min) {
  const auto pf = detail::prepare_frame(dets, gts, conf_min);
  return detail::greedy_match(pf, dets, iou_threshold);
}

/// Matches of one frame at several IoU thresholds, sharing the IoU matrix.
struct MatchOutcome {
  std::vector<double> thresholds;
  std::vector<FrameMatch> per_threshold;
};

inline MatchOutcome match_frame(std::span<const RotatedBox> dets, std::span<const RotatedBox> gts,
                                std::span<const double> thresholds, double conf_min) {
  const auto pf = detail::prepare_frame(dets, gts, conf_min);
  MatchOutcome out{{thresholds.begin(), thresholds.end()}, {}};
  for (double t : thresholds) out.per_threshold.push_back(detail::greedy_match(pf, dets, t));
  return out;
}

struct PrPoint {
  double conf = 0.0;
  std::size_t cum_tp = 0;
  std::size_t cum_fp = 0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::size_t total_gt = 0;
  std::vector<PrPoint> points;
};

/// Cumulative precision/recall over all flags sorted by descending
/// confidence (stable, so equal confidences keep their input order).
inline PrCurve pr_curve(std::span<const DetectionFlag> flags, std::size_t total_gt) {
  if (total_gt == 0) throw Error(ErrorCode::EmptyGroundTruth, "AP is undefined without ground truth");
  std::vector<std::size_t> order(flags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return flags[a].conf > flags[b].conf; });
  PrCurve curve{total_gt, {}};
  curve.points.reserve(flags.size());
  std::size_t tp = 0, fp = 0;
  for (std::size_t k : order) {
    (flags[k].tp ? tp : fp) += 1;
    curve.points.push_back(PrPoint{flags[k].conf, tp, fp,
                                   static_cast<double>(tp) / static_cast<double>(total_gt),
                                   static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return curve;
}

/// 101-point interpolated AP over recall levels 0, 0.01, ..., 1 using the
/// monotone (running-max from the right) precision envelope. A recall level
/// with no point reaching it contributes 0. Recall levels are compared in
/// integer arithmetic (100 * cum_tp >= level * total_gt).
inline double average_precision(const PrCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty() || curve.total_gt == 0) return 0.0;
  std::vector<double> envelope(pts.size());
  double run = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    run = std::max(run, pts[i].precision);
    envelope[i] = run;
  }
  double sum = 0.0;
  std::size_t i = 0;
  for (std::size_t level = 0; level <= 100; ++level) {
    while (i < pts.size() && 100 * pts[i].cum_tp < level * curve.total_gt) ++i;
    if (i == pts.size()) break;
    sum += envelope[i];
  }
  return sum / 101.0;
}

/// Precision, recall and F1 from counts. A zero denominator yields 0 with
/// the matching `defined` flag cleared.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;
  bool recall_defined = true;
};

inline double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * (precision * recall) / denom : 0.0;
}

inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  const auto ftp = static_cast<double>(tp);
  if (tp + fp == 0) {
    m.precision_defined = false;
  } else {
    m.precision = ftp / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall_defined = false;
  } else {
    m.recall = ftp / static_cast<double>(tp + fn);
  }
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

inline std::vector<double> default_iou_thresholds() {
  return {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
}

struct EvalOptions {
  /// Frame offset k: detections of frame t are scored against ground truth
  /// of frame t + k. 0 is the offline protocol.
  long shift = 1;
  double conf_min = 0.01;
  std::vector<double> thresholds = default_iou_thresholds();
  unsigned threads = 1;

  void validate() const {
    if (shift < 0) throw Error(ErrorCode::InvalidArgument, "shift must be non-negative");
    if (!(conf_min >= 0.0 && conf_min < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "conf_min must lie in [0, 1)");
    }
    if (thresholds.empty()) throw Error(ErrorCode::InvalidArgument, "no IoU thresholds given");
    for (double t : thresholds) {
      if (!(t > 0.0 && t <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "IoU thresholds must lie in (0, 1]");
      }
    }
  }
};

struct ThresholdReport {
  double iou_threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  Metrics metrics;
  double ap = 0.0;
  bool ap_defined = true;
  PrCurve curve;
};

struct EvalReport {
  long shift = 0;
  double conf_min = 0.0;
  std::size_t frames_evaluated = 0;
  std::vector<ThresholdReport> thresholds;
  double ap_mean = 0.0;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers. If any call throws,
// the exception of the lowest failing index is rethrown after all workers
// finish, so the error reported does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    const std::size_t workers = std::min<std::size_t>(threads, n);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([=, &fn, &errors] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Scores every detection frame against the ground-truth frame `shift`
/// frames later in the same sequence. Detection frames without such a
/// partner are skipped, as are ground-truth frames no detection frame points
/// at. Throws SequenceMismatch when a detection sequence has no ground truth.
/// Per-frame matching runs on `threads` workers; results are merged in
/// detection-file order, so the report does not depend on the worker count.
inline EvalReport evaluate(std::span<const FrameRecord> gt_frames,
                           std::span<const FrameRecord> det_frames, const EvalOptions& opt) {
  opt.validate();
  const detail::FrameIndex gt_index = detail::index_frames(gt_frames);
  detail::index_frames(det_frames);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t d = 0; d < det_frames.size(); ++d) {
    const FrameRecord& f = det_frames[d];
    if (gt_index.find(f.sequence_id) == gt_index.end()) {
      throw Error(ErrorCode::SequenceMismatch,
                  "detection sequence '" + f.sequence_id + "' has no ground truth");
    }
    if (const std::size_t* g = detail::find_frame(gt_index, f.sequence_id, f.frame_index + opt.shift)) {
      pairs.emplace_back(d, *g);
    }
  }

  std::vector<MatchOutcome> outcomes(pairs.size());
  detail::parallel_for(pairs.size(), opt.threads, [&](std::size_t p) {
    outcomes[p] = match_frame(det_frames[pairs[p].first].dets, gt_frames[pairs[p].second].gts,
                              opt.thresholds, opt.conf_min);
  });

  std::size_t total_gt = 0;
  for (const auto& [d, g] : pairs) total_gt += gt_frames[g].gts.size();

  EvalReport report{opt.shift, opt.conf_min, pairs.size(), {}, 0.0};
  for (std::size_t t = 0; t < opt.thresholds.size(); ++t) {
    ThresholdReport tr;
    tr.iou_threshold = opt.thresholds[t];
    std::vector<DetectionFlag> flags;
    for (const MatchOutcome& o : outcomes) {
      const FrameMatch& m = o.per_threshold[t];
      tr.tp += m.tp;
      tr.fp += m.fp;
      tr.fn += m.fn;
      flags.insert(flags.end(), m.flags.begin(), m.flags.end());
    }
    if (tr.tp + tr.fn != total_gt) throw InvariantViolation("ground-truth count not conserved");
    tr.metrics = metrics_from_counts(tr.tp, tr.fp, tr.fn);
    if (total_gt == 0) {
      tr.ap_defined = false;
    } else {
      tr.curve = pr_curve(flags, total_gt);
      tr.ap = average_precision(tr.curve);
    }
    report.ap_mean += tr.ap;
    report.thresholds.push_back(std::move(tr));
  }
  report.ap_mean /= static_cast<double>(opt.thresholds.size());
  return report;
}

/// Greedy rotated non-maximum suppression. Returns kept indices by
/// descending confidence; a box is dropped when its IoU with an already kept
/// box exceeds `iou_threshold`.
inline std::vector<std::size_t> rotated_nms(std::span<const RotatedBox> boxes,
                                            double iou_threshold = 0.65) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detail::detection_conf(boxes[a]) > detail::detection_conf(boxes[b]);
  });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return rotated_iou(boxes[idx], boxes[k]) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace rotstream
