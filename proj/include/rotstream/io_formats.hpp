// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented file formats (UTF-8, LF, one JSON object per line):
//
//   annotations  {"seq":"s","frame":3,"objects":[{"rbox":[cx,cy,w,h,angle]},
//                                                {"contour":[[x,y],...]}]}
//   detections   {"seq":"s","frame":3,"dets":[[cx,cy,w,h,angle,conf],...]}
//   triplets     {"mode":"online","seq":"s","frame_t":3,"frame_tm1":2,
//                 "gt_frame":4,"gts":[[cx,cy,w,h,angle],...]}
//
// Objects may carry a "class" string, which is preserved but otherwise
// ignored. Writers emit a fixed key order and print every real number with
// 17 significant digits, so save(load(save(x))) is byte-identical.

#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rotstream/error.hpp"
#include "rotstream/geometry.hpp"
#include "rotstream/head_codec.hpp"
#include "rotstream/stream_eval.hpp"

namespace rotstream::io {

using Contour = std::vector<Point2>;

struct AnnotationObject {
  std::variant<Contour, RotatedBox> shape;
  std::optional<std::string> label;
};

struct AnnotationLine {
  std::string seq;
  long frame = 0;
  std::vector<AnnotationObject> objects;
  /// 1-based line in the file it was read from; 0 when built in memory.
  std::size_t source_line = 0;
};

struct DetectionLine {
  std::string seq;
  long frame = 0;
  std::vector<RotatedBox> dets;
};

struct TripletLine {
  TripletMode mode = TripletMode::Offline;
  std::string seq;
  long frame_t = 0;
  long frame_tm1 = 0;
  long gt_frame = 0;
  std::vector<RotatedBox> gts;
};

// ---------------------------------------------------------------------------
// Number and string formatting

inline std::string format_number(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "cannot serialize non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

namespace detail {

using nlohmann::json;

[[noreturn]] inline void fail(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + msg);
}

inline json parse_json(std::string_view text, std::size_t line_no) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(line_no, e.what());
  }
}

inline void expect_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                        std::size_t line_no, std::string_view what) {
  if (!obj.is_object()) fail(line_no, std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) fail(line_no, "unknown key '" + key + "' in " + std::string(what));
  }
}

inline const json& member(const json& obj, const char* key, std::size_t line_no) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(line_no, std::string("missing key '") + key + "'");
  return *it;
}

inline double number(const json& v, std::size_t line_no) {
  if (!v.is_number()) fail(line_no, "expected a number, got " + v.dump());
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(line_no, "non-finite number");
  return d;
}

inline long count(const json& v, std::size_t line_no, const char* key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(line_no, std::string("'") + key + "' must be a non-negative integer");
  }
  return static_cast<long>(v.get<long long>());
}

inline std::string text(const json& v, std::size_t line_no, const char* key) {
  if (!v.is_string()) fail(line_no, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, std::size_t n, std::size_t line_no,
                                   const char* what) {
  if (!v.is_array() || v.size() != n) {
    fail(line_no, std::string(what) + " must be an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (const json& e : v) out.push_back(number(e, line_no));
  return out;
}

// Canonical box from [cx, cy, w, h, angle(, conf)]; rejects invalid boxes.
inline RotatedBox box_from(const std::vector<double>& f, std::size_t line_no) {
  RotatedBox b{f[0], f[1], f[2], f[3], f[4], {}};
  if (f.size() == 6) {
    if (!(f[5] >= 0.0 && f[5] <= 1.0)) fail(line_no, "confidence outside [0, 1]");
    b.conf = f[5];
  }
  if (!(b.w > 0.0) || !(b.h > 0.0)) fail(line_no, "box with non-positive extent " + describe(b));
  return canonicalize(b);
}

inline std::string box_array(const RotatedBox& b, bool with_conf) {
  std::string s = "[" + format_number(b.cx) + "," + format_number(b.cy) + "," +
                  format_number(b.w) + "," + format_number(b.h) + "," + format_number(b.angle);
  if (with_conf) s += "," + format_number(b.conf.value_or(0.0));
  return s + "]";
}

inline std::string box_list(const std::vector<RotatedBox>& boxes, bool with_conf) {
  std::string s = "[";
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i) s += ",";
    s += box_array(boxes[i], with_conf);
  }
  return s + "]";
}

inline std::vector<RotatedBox> parse_box_list(const json& v, bool with_conf, std::size_t line_no,
                                              const char* key) {
  if (!v.is_array()) fail(line_no, std::string("'") + key + "' must be an array");
  std::vector<RotatedBox> out;
  for (const json& e : v) out.push_back(box_from(numbers(e, with_conf ? 6 : 5, line_no, key), line_no));
  return out;
}

inline bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

// Calls fn(line, line_no) for each non-blank line.
template <typename Fn>
void for_each_line(std::istream& in, Fn fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    fn(line, line_no);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Annotations

/// Parses one annotation line. Rboxes are canonicalized; contours are kept
/// as given and must have at least three points.
inline AnnotationLine parse_annotation_line(std::string_view line, std::size_t line_no = 1) {
  using namespace detail;
  const json j = parse_json(line, line_no);
  expect_keys(j, {"seq", "frame", "objects"}, line_no, "annotation line");
  AnnotationLine out;
  out.source_line = line_no;
  out.seq = text(member(j, "seq", line_no), line_no, "seq");
  out.frame = count(member(j, "frame", line_no), line_no, "frame");
  const json& objs = member(j, "objects", line_no);
  if (!objs.is_array()) fail(line_no, "'objects' must be an array");
  for (const json& o : objs) {
    expect_keys(o, {"rbox", "contour", "class"}, line_no, "object");
    AnnotationObject obj;
    if (o.contains("class")) obj.label = text(o["class"], line_no, "class");
    const bool has_rbox = o.contains("rbox");
    const bool has_contour = o.contains("contour");
    if (has_rbox == has_contour) fail(line_no, "object needs exactly one of 'rbox' or 'contour'");
    if (has_rbox) {
      obj.shape = box_from(numbers(o["rbox"], 5, line_no, "rbox"), line_no);
    } else {
      const json& c = o["contour"];
      if (!c.is_array() || c.size() < 3) fail(line_no, "contour needs at least 3 points");
      Contour pts;
      for (const json& p : c) {
        const auto xy = numbers(p, 2, line_no, "contour point");
        pts.push_back({xy[0], xy[1]});
      }
      obj.shape = std::move(pts);
    }
    out.objects.push_back(std::move(obj));
  }
  return out;
}

inline std::string format_annotation_line(const AnnotationLine& a) {
  std::string s = "{\"seq\":" + quote(a.seq) + ",\"frame\":" + std::to_string(a.frame) +
                  ",\"objects\":[";
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const AnnotationObject& o = a.objects[i];
    if (i) s += ",";
    if (const auto* box = std::get_if<RotatedBox>(&o.shape)) {
      s += "{\"rbox\":" + detail::box_array(*box, false);
    } else {
      const Contour& c = std::get<Contour>(o.shape);
      s += "{\"contour\":[";
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (k) s += ",";
        s += "[" + format_number(c[k].x) + "," + format_number(c[k].y) + "]";
      }
      s += "]";
    }
    if (o.label) s += ",\"class\":" + quote(*o.label);
    s += "}";
  }
  return s + "]}";
}

inline std::vector<AnnotationLine> read_annotations(std::istream& in) {
  std::vector<AnnotationLine> out;
  detail::for_each_line(in, [&](const std::string& line, std::size_t n) {
    out.push_back(parse_annotation_line(line, n));
  });
  return out;
}

inline void write_annotations(std::ostream& out, const std::vector<AnnotationLine>& lines) {
  for (const AnnotationLine& a : lines) out << format_annotation_line(a) << '\n';
}

// ---------------------------------------------------------------------------
// Detections

inline DetectionLine parse_detection_line(std::string_view line, std::size_t line_no = 1) {
  using namespace detail;
  const json j = parse_json(line, line_no);
  expect_keys(j, {"seq", "frame", "dets"}, line_no, "detection line");
  DetectionLine out;
  out.seq = text(member(j, "seq", line_no), line_no, "seq");
  out.frame = count(member(j, "frame", line_no), line_no, "frame");
  out.dets = parse_box_list(member(j, "dets", line_no), true, line_no, "dets");
  return out;
}

inline std::string format_detection_line(const DetectionLine& d) {
  return "{\"seq\":" + quote(d.seq) + ",\"frame\":" + std::to_string(d.frame) +
         ",\"dets\":" + detail::box_list(d.dets, true) + "}";
}

inline std::vector<DetectionLine> read_detections(std::istream& in) {
  std::vector<DetectionLine> out;
  detail::for_each_line(in, [&](const std::string& line, std::size_t n) {
    out.push_back(parse_detection_line(line, n));
  });
  return out;
}

inline void write_detections(std::ostream& out, const std::vector<DetectionLine>& lines) {
  for (const DetectionLine& d : lines) out << format_detection_line(d) << '\n';
}

// ---------------------------------------------------------------------------
// Triplets

inline TripletLine parse_triplet_line(std::string_view line, std::size_t line_no = 1) {
  using namespace detail;
  const json j = parse_json(line, line_no);
  expect_keys(j, {"mode", "seq", "frame_t", "frame_tm1", "gt_frame", "gts"}, line_no,
              "triplet line");
  TripletLine out;
  const std::string mode = text(member(j, "mode", line_no), line_no, "mode");
  if (mode == "offline") {
    out.mode = TripletMode::Offline;
  } else if (mode == "online") {
    out.mode = TripletMode::Online;
  } else {
    fail(line_no, "mode must be 'offline' or 'online'");
  }
  out.seq = text(member(j, "seq", line_no), line_no, "seq");
  out.frame_t = count(member(j, "frame_t", line_no), line_no, "frame_t");
  out.frame_tm1 = count(member(j, "frame_tm1", line_no), line_no, "frame_tm1");
  out.gt_frame = count(member(j, "gt_frame", line_no), line_no, "gt_frame");
  out.gts = parse_box_list(member(j, "gts", line_no), false, line_no, "gts");
  return out;
}

inline std::string format_triplet_line(const TripletLine& t) {
  return "{\"mode\":" + quote(to_string(t.mode)) + ",\"seq\":" + quote(t.seq) +
         ",\"frame_t\":" + std::to_string(t.frame_t) + ",\"frame_tm1\":" +
         std::to_string(t.frame_tm1) + ",\"gt_frame\":" + std::to_string(t.gt_frame) +
         ",\"gts\":" + detail::box_list(t.gts, false) + "}";
}

inline TripletLine to_triplet_line(std::span<const FrameRecord> frames, const Triplet& t) {
  return TripletLine{t.mode,
                     frames[t.current].sequence_id,
                     frames[t.current].frame_index,
                     frames[t.previous].frame_index,
                     frames[t.target].frame_index,
                     t.g};
}

// ---------------------------------------------------------------------------
// Conversion to evaluator input

struct ConversionSummary {
  std::size_t contours_converted = 0;
  std::size_t rboxes_kept = 0;
  std::size_t dropped = 0;
  /// "line N object K: reason" for each dropped object.
  std::vector<std::string> drop_reasons;
};

/// Replaces every contour by its canonical minimum-area rectangle. Objects
/// whose contour is degenerate are dropped and recorded in the summary.
/// Lines are converted on `threads` workers and merged in input order.
inline std::vector<AnnotationLine> convert_annotations(const std::vector<AnnotationLine>& in,
                                                       ConversionSummary& summary,
                                                       unsigned threads = 1) {
  std::vector<AnnotationLine> out(in.size());
  std::vector<ConversionSummary> parts(in.size());
  rotstream::detail::parallel_for(in.size(), threads, [&](std::size_t l) {
    ConversionSummary& part = parts[l];
    AnnotationLine& line = out[l];
    line = AnnotationLine{in[l].seq, in[l].frame, {}, in[l].source_line};
    const std::size_t line_no = in[l].source_line ? in[l].source_line : l + 1;
    for (std::size_t k = 0; k < in[l].objects.size(); ++k) {
      const AnnotationObject& o = in[l].objects[k];
      if (const auto* box = std::get_if<RotatedBox>(&o.shape)) {
        line.objects.push_back({canonicalize(*box), o.label});
        ++part.rboxes_kept;
        continue;
      }
      try {
        line.objects.push_back({min_area_rect(std::get<Contour>(o.shape)), o.label});
        ++part.contours_converted;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateContour) throw;
        ++part.dropped;
        part.drop_reasons.push_back("line " + std::to_string(line_no) + " object " +
                                    std::to_string(k) + ": " + e.what());
      }
    }
  });
  for (ConversionSummary& part : parts) {
    summary.contours_converted += part.contours_converted;
    summary.rboxes_kept += part.rboxes_kept;
    summary.dropped += part.dropped;
    for (std::string& r : part.drop_reasons) summary.drop_reasons.push_back(std::move(r));
  }
  return out;
}

/// Ground-truth frames from annotations; contours are converted on the fly
/// and a degenerate contour is an error here.
inline std::vector<FrameRecord> to_gt_frames(const std::vector<AnnotationLine>& lines) {
  std::vector<FrameRecord> out;
  for (const AnnotationLine& a : lines) {
    FrameRecord f{a.seq, a.frame, {}, {}};
    for (const AnnotationObject& o : a.objects) {
      if (const auto* box = std::get_if<RotatedBox>(&o.shape)) {
        f.gts.push_back(*box);
      } else {
        f.gts.push_back(min_area_rect(std::get<Contour>(o.shape)));
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<FrameRecord> to_det_frames(const std::vector<DetectionLine>& lines) {
  std::vector<FrameRecord> out;
  for (const DetectionLine& d : lines) out.push_back(FrameRecord{d.seq, d.frame, {}, d.dets});
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report (pretty JSON) and PR curves (CSV)

/// "0.50", "0.55", ...: the threshold rounded to two decimals.
inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

inline std::string format_report(const EvalReport& r) {
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::string s = "{\n";
  s += "  \"protocol\": " + quote(r.shift == 0 ? "offline" : "streaming") + ",\n";
  s += "  \"shift\": " + std::to_string(r.shift) + ",\n";
  s += "  \"conf_min\": " + format_number(r.conf_min) + ",\n";
  s += "  \"frames_evaluated\": " + std::to_string(r.frames_evaluated) + ",\n";
  s += "  \"ap_mean\": " + format_number(r.ap_mean) + ",\n";
  s += "  \"thresholds\": {";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    const ThresholdReport& t = r.thresholds[i];
    s += i ? ",\n" : "\n";
    s += "    " + quote(threshold_key(t.iou_threshold)) + ": {";
    s += "\"iou\": " + format_number(t.iou_threshold);
    s += ", \"tp\": " + std::to_string(t.tp);
    s += ", \"fp\": " + std::to_string(t.fp);
    s += ", \"fn\": " + std::to_string(t.fn);
    s += ", \"precision\": " + format_number(t.metrics.precision);
    s += ", \"recall\": " + format_number(t.metrics.recall);
    s += ", \"f1\": " + format_number(t.metrics.f1);
    s += ", \"ap\": " + format_number(t.ap);
    s += ", \"precision_defined\": " + std::string(flag(t.metrics.precision_defined));
    s += ", \"recall_defined\": " + std::string(flag(t.metrics.recall_defined));
    s += ", \"ap_defined\": " + std::string(flag(t.ap_defined)) + "}";
  }
  s += r.thresholds.empty() ? "}\n}\n" : "\n  }\n}\n";
  return s;
}

/// Reads a report written by format_report. PR curves are not part of the
/// report and come back empty.
inline EvalReport parse_report(std::string_view text) {
  using namespace detail;
  const json j = parse_json(text, 1);
  expect_keys(j, {"protocol", "shift", "conf_min", "frames_evaluated", "ap_mean", "thresholds"}, 1,
              "report");
  EvalReport r;
  r.shift = count(member(j, "shift", 1), 1, "shift");
  r.conf_min = number(member(j, "conf_min", 1), 1);
  r.frames_evaluated = static_cast<std::size_t>(count(member(j, "frames_evaluated", 1), 1,
                                                      "frames_evaluated"));
  r.ap_mean = number(member(j, "ap_mean", 1), 1);
  const json& th = member(j, "thresholds", 1);
  if (!th.is_object()) fail(1, "'thresholds' must be an object");
  auto boolean = [](const json& v) {
    if (!v.is_boolean()) fail(1, "expected a boolean");
    return v.get<bool>();
  };
  for (const auto& [key, v] : th.items()) {
    ThresholdReport t;
    t.iou_threshold = number(member(v, "iou", 1), 1);
    t.tp = static_cast<std::size_t>(count(member(v, "tp", 1), 1, "tp"));
    t.fp = static_cast<std::size_t>(count(member(v, "fp", 1), 1, "fp"));
    t.fn = static_cast<std::size_t>(count(member(v, "fn", 1), 1, "fn"));
    t.metrics.precision = number(member(v, "precision", 1), 1);
    t.metrics.recall = number(member(v, "recall", 1), 1);
    t.metrics.f1 = number(member(v, "f1", 1), 1);
    t.ap = number(member(v, "ap", 1), 1);
    t.metrics.precision_defined = boolean(member(v, "precision_defined", 1));
    t.metrics.recall_defined = boolean(member(v, "recall_defined", 1));
    t.ap_defined = boolean(member(v, "ap_defined", 1));
    r.thresholds.push_back(std::move(t));
  }
  std::stable_sort(r.thresholds.begin(), r.thresholds.end(),
                   [](const ThresholdReport& a, const ThresholdReport& b) {
                     return a.iou_threshold < b.iou_threshold;
                   });
  return r;
}

inline std::string pr_csv_name(double iou_threshold) {
  return "pr_" + threshold_key(iou_threshold) + ".csv";
}

/// `conf,recall,precision`, one row per detection in descending confidence.
inline std::string format_pr_csv(const PrCurve& curve) {
  std::string s = "conf,recall,precision\n";
  for (const PrPoint& p : curve.points) {
    s += format_number(p.conf) + "," + format_number(p.recall) + "," + format_number(p.precision) +
         "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Anchor configuration

inline AnchorConfig anchor_config_from_json(const nlohmann::json& j) {
  using namespace detail;
  expect_keys(j, {"image_size", "alpha", "beta", "levels"}, 1, "anchor config");
  AnchorConfig cfg;
  cfg.levels.clear();
  if (j.contains("image_size")) cfg.image_size = static_cast<int>(count(j["image_size"], 1, "image_size"));
  if (j.contains("alpha")) cfg.alpha = number(j["alpha"], 1);
  if (j.contains("beta")) cfg.beta = number(j["beta"], 1);
  const json& levels = member(j, "levels", 1);
  if (!levels.is_array()) fail(1, "'levels' must be an array");
  for (const json& lv : levels) {
    expect_keys(lv, {"stride", "anchors"}, 1, "anchor level");
    AnchorLevel level;
    level.stride = static_cast<int>(count(member(lv, "stride", 1), 1, "stride"));
    const json& anchors = member(lv, "anchors", 1);
    if (!anchors.is_array() || anchors.size() != 3) fail(1, "each level needs exactly 3 anchors");
    for (std::size_t n = 0; n < 3; ++n) {
      const auto wh = numbers(anchors[n], 2, 1, "anchor");
      level.anchors[n] = {wh[0], wh[1]};
    }
    cfg.levels.push_back(level);
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(1, e.what());
  }
  return cfg;
}

inline AnchorConfig parse_anchor_config(std::string_view text) {
  return anchor_config_from_json(detail::parse_json(text, 1));
}

inline std::string format_anchor_config(const AnchorConfig& cfg) {
  std::string s = "{\"image_size\":" + std::to_string(cfg.image_size) +
                  ",\"alpha\":" + format_number(cfg.alpha) + ",\"beta\":" + format_number(cfg.beta) +
                  ",\"levels\":[";
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    const AnchorLevel& lv = cfg.levels[k];
    if (k) s += ",";
    s += "{\"stride\":" + std::to_string(lv.stride) + ",\"anchors\":[";
    for (std::size_t n = 0; n < 3; ++n) {
      if (n) s += ",";
      s += "[" + format_number(lv.anchors[n].w) + "," + format_number(lv.anchors[n].h) + "]";
    }
    s += "]}";
  }
  return s + "]}\n";
}

}  // namespace rotstream::io
