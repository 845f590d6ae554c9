// SPDX-License-Identifier: Apache-2.0
//
// File-to-file workflows behind the command-line tool. Each command reads
// its inputs, writes its outputs, and reports a one-line summary on `diag`.
// Input problems surface as rotstream::Error; the tool maps them to exit
// code 2.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rotstream/angle_loss.hpp"
#include "rotstream/error.hpp"
#include "rotstream/head_codec.hpp"
#include "rotstream/io_formats.hpp"
#include "rotstream/stream_eval.hpp"

namespace rotstream::cmd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitInternalError = 3;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw Error(ErrorCode::InvalidArgument, "write to '" + path.string() + "' failed");
}

/// Settings shared by the commands, loadable from a JSON config file.
/// Command-line flags override file values.
struct RunConfig {
  std::optional<AnchorConfig> anchors;
  double conf_min = 0.01;
  long shift = 1;
  std::vector<double> thresholds = default_iou_thresholds();
  AngleLossKind angle_loss{AngleLossVariant::Periodic, Norm::L1};
  std::string report;
  std::string pr_dir;
  unsigned threads = 1;

  void validate() const {
    if (anchors) anchors->validate();
    EvalOptions{shift, conf_min, thresholds, threads}.validate();
    if (threads == 0) throw Error(ErrorCode::InvalidArgument, "threads must be at least 1");
  }
};

/// Keys: anchors (object) or anchor_config (path, relative to the config
/// file), conf_min, shift, thresholds, angle_loss {kind, norm}, report,
/// pr_dir, threads. All optional.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ParseError, path.string() + ": expected an object");
  RunConfig cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "anchors") {
        cfg.anchors = io::anchor_config_from_json(v);
      } else if (key == "anchor_config") {
        cfg.anchors = io::parse_anchor_config(read_file(path.parent_path() / v.get<std::string>()));
      } else if (key == "conf_min") {
        cfg.conf_min = v.get<double>();
      } else if (key == "shift") {
        cfg.shift = v.get<long>();
      } else if (key == "thresholds") {
        cfg.thresholds = v.get<std::vector<double>>();
      } else if (key == "angle_loss") {
        cfg.angle_loss.variant = parse_angle_loss_variant(v.at("kind").get<std::string>());
        cfg.angle_loss.norm = parse_norm(v.value("norm", std::string("l1")));
      } else if (key == "report") {
        cfg.report = v.get<std::string>();
      } else if (key == "pr_dir") {
        cfg.pr_dir = v.get<std::string>();
      } else if (key == "threads") {
        cfg.threads = v.get<unsigned>();
      } else {
        throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------

struct ConvertOptions {
  std::string in;
  std::string out;
  unsigned threads = 1;
};

inline int run_convert(const ConvertOptions& opt, std::ostream& diag) {
  if (opt.threads == 0) throw Error(ErrorCode::InvalidArgument, "threads must be at least 1");
  std::ifstream in(opt.in, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + opt.in + "'");
  const auto lines = io::read_annotations(in);
  io::ConversionSummary summary;
  const auto converted = io::convert_annotations(lines, summary, opt.threads);
  std::ostringstream out;
  io::write_annotations(out, converted);
  write_file(opt.out, out.str());
  for (const std::string& reason : summary.drop_reasons) diag << "dropped " << reason << '\n';
  diag << "convert: " << lines.size() << " lines, " << summary.contours_converted
       << " contours converted, " << summary.rboxes_kept << " rboxes kept, " << summary.dropped
       << " dropped\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalCommandOptions {
  std::string gt;
  std::string det;
  std::string report;
  std::string pr_dir;  // empty: no PR curves written
  EvalOptions eval;
};

inline EvalReport run_eval_report(const EvalCommandOptions& opt) {
  opt.eval.validate();
  std::ifstream gin(opt.gt, std::ios::binary);
  if (!gin) throw Error(ErrorCode::InvalidArgument, "cannot open '" + opt.gt + "'");
  std::ifstream din(opt.det, std::ios::binary);
  if (!din) throw Error(ErrorCode::InvalidArgument, "cannot open '" + opt.det + "'");
  const auto gt_frames = io::to_gt_frames(io::read_annotations(gin));
  const auto det_frames = io::to_det_frames(io::read_detections(din));
  return evaluate(gt_frames, det_frames, opt.eval);
}

inline int run_eval(const EvalCommandOptions& opt, std::ostream& diag) {
  if (opt.report.empty()) throw Error(ErrorCode::InvalidArgument, "no report path given");
  const EvalReport report = run_eval_report(opt);
  write_file(opt.report, io::format_report(report));
  if (!opt.pr_dir.empty()) {
    std::filesystem::create_directories(opt.pr_dir);
    for (const ThresholdReport& t : report.thresholds) {
      write_file(std::filesystem::path(opt.pr_dir) / io::pr_csv_name(t.iou_threshold),
                 io::format_pr_csv(t.curve));
    }
  }
  diag << "eval: " << report.frames_evaluated << " frame pairs, shift " << report.shift
       << ", ap_mean " << io::format_number(report.ap_mean) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LossTableOptions {
  AngleLossKind kind;
  std::size_t samples = 721;
  std::string out;
};

/// Samples the loss at n evenly spaced residuals dt - gt in [-2pi, 2pi]
/// with gt = 0.
inline std::string format_loss_table(AngleLossKind kind, std::size_t samples) {
  if (samples < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 samples");
  std::string s = "dt_minus_gt,value,d_dt\n";
  const double span = 4.0 * kPi;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = -2.0 * kPi + span * static_cast<double>(i) / static_cast<double>(samples - 1);
    const LossEval e = angle_loss(kind, x, 0.0);
    s += io::format_number(x) + "," + io::format_number(e.value) + "," + io::format_number(e.d_dt) +
         "\n";
  }
  return s;
}

inline int run_loss_table(const LossTableOptions& opt, std::ostream& diag) {
  write_file(opt.out, format_loss_table(opt.kind, opt.samples));
  diag << "loss-table: " << to_string(opt.kind.variant) << "/" << to_string(opt.kind.norm) << ", "
       << opt.samples << " samples\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TripletOptions {
  std::string in;
  std::string out;
  TripletMode mode = TripletMode::Online;
};

inline int run_triplets(const TripletOptions& opt, std::ostream& diag) {
  std::ifstream in(opt.in, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + opt.in + "'");
  const auto frames = io::to_gt_frames(io::read_annotations(in));
  const auto triplets = build_triplets(frames, opt.mode);
  std::string s;
  for (const Triplet& t : triplets) s += io::format_triplet_line(io::to_triplet_line(frames, t)) + "\n";
  write_file(opt.out, s);
  diag << "triplets: " << triplets.size() << " " << to_string(opt.mode) << " triplets from "
       << frames.size() << " frames\n";
  return kExitOk;
}

}  // namespace rotstream::cmd
