// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rotstream/commands.hpp"

namespace rotstream::cli {

/// Runs the tool on `args` (program name excluded) and returns the exit code:
/// 0 success, 2 input error, 3 internal invariant violation.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotated-box annotation conversion, angle-loss tables and streaming evaluation"};
  app.name("rotstream");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags override its values")
      ->check(CLI::ExistingFile);

  cmd::ConvertOptions convert;
  auto* convert_cmd = app.add_subcommand("convert", "Contour annotations to canonical rotated boxes");
  convert_cmd->add_option("--in", convert.in, "Input annotation JSONL")->required();
  convert_cmd->add_option("--out", convert.out, "Output annotation JSONL (rbox only)")->required();
  auto* convert_threads_opt = convert_cmd->add_option("--threads", convert.threads, "Worker threads");

  cmd::EvalCommandOptions eval;
  std::vector<double> thresholds;
  auto* eval_cmd = app.add_subcommand("eval", "Offline (shift 0) or streaming (shift k) evaluation");
  eval_cmd->add_option("--gt", eval.gt, "Ground-truth annotation JSONL")->required();
  eval_cmd->add_option("--det", eval.det, "Detection JSONL")->required();
  auto* shift_opt = eval_cmd->add_option("--shift", eval.eval.shift, "Frame offset k (default 1)");
  auto* conf_opt = eval_cmd->add_option("--conf-min", eval.eval.conf_min,
                                        "Keep detections with conf above this (default 0.01)");
  auto* report_opt = eval_cmd->add_option("--report", eval.report, "Report JSON path");
  auto* pr_opt = eval_cmd->add_option("--pr-dir", eval.pr_dir, "Directory for per-threshold PR CSVs");
  auto* thr_opt = eval_cmd->add_option("--thresholds", thresholds, "Comma-separated IoU thresholds")
                      ->delimiter(',');
  auto* threads_opt = eval_cmd->add_option("--threads", eval.eval.threads, "Worker threads");

  std::string kind = "periodic";
  std::string norm = "l1";
  cmd::LossTableOptions table;
  auto* table_cmd = app.add_subcommand("loss-table", "Sampled angle loss curve as CSV");
  auto* kind_opt = table_cmd->add_option("--kind", kind,
                                         "normal | test | periodic | piecewise | piecewise-prose");
  auto* norm_opt = table_cmd->add_option("--norm", norm, "l1 | l2");
  table_cmd->add_option("--samples", table.samples, "Number of samples (>= 2)");
  table_cmd->add_option("--out", table.out, "Output CSV")->required();

  cmd::TripletOptions triplets;
  std::string mode = "online";
  auto* trip_cmd = app.add_subcommand("triplets", "Build (F_t, F_t-1, G) triplets from annotations");
  trip_cmd->add_option("--in", triplets.in, "Annotation JSONL")->required();
  trip_cmd->add_option("--out", triplets.out, "Triplet JSONL")->required();
  trip_cmd->add_option("--mode", mode, "offline (G_t) | online (G_t+1)")
      ->check(CLI::IsMember({"offline", "online"}));

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? cmd::kExitOk : cmd::kExitInputError;
  }

  try {
    cmd::RunConfig run;
    if (!config_path.empty()) run = cmd::load_run_config(config_path);

    if (*convert_cmd) {
      if (!convert_threads_opt->count()) convert.threads = run.threads;
      return cmd::run_convert(convert, err);
    }

    if (*eval_cmd) {
      if (!shift_opt->count()) eval.eval.shift = run.shift;
      if (!conf_opt->count()) eval.eval.conf_min = run.conf_min;
      if (!report_opt->count()) eval.report = run.report;
      if (!pr_opt->count()) eval.pr_dir = run.pr_dir;
      if (!threads_opt->count()) eval.eval.threads = run.threads;
      eval.eval.thresholds = thr_opt->count() ? thresholds : run.thresholds;
      run.shift = eval.eval.shift;
      run.conf_min = eval.eval.conf_min;
      run.thresholds = eval.eval.thresholds;
      run.threads = eval.eval.threads;
      run.validate();
      return cmd::run_eval(eval, err);
    }

    if (*table_cmd) {
      table.kind = run.angle_loss;
      if (kind_opt->count()) table.kind.variant = parse_angle_loss_variant(kind);
      if (norm_opt->count()) table.kind.norm = parse_norm(norm);
      return cmd::run_loss_table(table, err);
    }

    if (*trip_cmd) {
      triplets.mode = mode == "offline" ? TripletMode::Offline : TripletMode::Online;
      return cmd::run_triplets(triplets, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return cmd::kExitInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return cmd::kExitInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return cmd::kExitInternalError;
  }
  return cmd::kExitInternalError;
}

}  // namespace rotstream::cli
