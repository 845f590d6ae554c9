// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "rotstream/commands.hpp"
#include "rotstream/io_formats.hpp"

namespace rotstream {
namespace {

const std::string kFixtures = ROTSTREAM_FIXTURES_DIR;

std::string slurp(const std::string& name) { return cmd::read_file(kFixtures + "/" + name); }

std::vector<io::AnnotationLine> annotations_from(const std::string& text) {
  std::istringstream in(text);
  return io::read_annotations(in);
}

std::string annotations_to_string(const std::vector<io::AnnotationLine>& lines) {
  std::ostringstream out;
  io::write_annotations(out, lines);
  return out.str();
}

ErrorCode parse_error_code(const std::string& line) {
  try {
    io::parse_annotation_line(line, 12);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

TEST(FormatNumber, SeventeenDigits) {
  EXPECT_EQ(io::format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_number(2.0), "2");
  EXPECT_EQ(io::format_number(-kHalfPi), "-1.5707963267948966");
  EXPECT_THROW(io::format_number(std::nan("")), Error);
}

TEST(Annotations, GoldenRoundTripIsByteIdentical) {
  const std::string golden = slurp("canonical_annotations.jsonl");
  EXPECT_EQ(annotations_to_string(annotations_from(golden)), golden);
}

TEST(Detections, GoldenRoundTripIsByteIdentical) {
  const std::string golden = slurp("canonical_detections.jsonl");
  std::istringstream in(golden);
  std::ostringstream out;
  io::write_detections(out, io::read_detections(in));
  EXPECT_EQ(out.str(), golden);
}

TEST(Annotations, SaveLoadSaveStable) {
  const std::string first = annotations_to_string(annotations_from(slurp("annotations.jsonl")));
  EXPECT_EQ(annotations_to_string(annotations_from(first)), first);
}

TEST(Annotations, EmptyObjectsRoundTrip) {
  const std::string line = R"({"seq":"x","frame":4,"objects":[]})";
  const io::AnnotationLine a = io::parse_annotation_line(line);
  EXPECT_TRUE(a.objects.empty());
  EXPECT_EQ(io::format_annotation_line(a), line);
}

TEST(Annotations, RboxIsCanonicalizedOnLoad) {
  const io::AnnotationLine a = io::parse_annotation_line(R"({"seq":"x","frame":0,"objects":[{"rbox":[0,0,3,1,0]}]})");
  const RotatedBox b = std::get<RotatedBox>(a.objects[0].shape);
  EXPECT_EQ(b.w, 1.0);
  EXPECT_EQ(b.h, 3.0);
  EXPECT_NEAR(b.angle, -kHalfPi, 1e-15);
}

TEST(Annotations, ParseErrorsCarryLineNumbers) {
  const std::string bad[] = {
      "{not json",
      R"({"seq":"x","frame":0})",
      R"({"seq":"x","frame":-1,"objects":[]})",
      R"({"seq":"x","frame":0,"objects":[],"extra":1})",
      R"({"seq":"x","frame":0,"objects":[{"rbox":[0,0,1,1]}]})",
      R"({"seq":"x","frame":0,"objects":[{"rbox":[0,0,0,1,0]}]})",
      R"({"seq":"x","frame":0,"objects":[{"contour":[[0,0],[1,1]]}]})",
      R"({"seq":"x","frame":0,"objects":[{"rbox":[0,0,1,1,0],"contour":[[0,0],[1,0],[0,1]]}]})",
      R"({"seq":3,"frame":0,"objects":[]})",
      R"([1,2,3])",
  };
  for (const std::string& line : bad) {
    try {
      io::parse_annotation_line(line, 12);
      ADD_FAILURE() << line;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ParseError) << line;
      EXPECT_NE(std::string(e.what()).find("line 12"), std::string::npos) << e.what();
    }
  }
  EXPECT_EQ(parse_error_code("{}"), ErrorCode::ParseError);
}

TEST(Annotations, ReaderCountsLinesIncludingBlanks) {
  std::istringstream in("{\"seq\":\"a\",\"frame\":0,\"objects\":[]}\n\n{\"seq\":\"a\",\"frame\":1,\"objects\":[\n");
  try {
    io::read_annotations(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Detections, ConfidenceValidated) {
  EXPECT_THROW(io::parse_detection_line(R"({"seq":"a","frame":0,"dets":[[0,0,1,2,0,1.5]]})"), Error);
  EXPECT_THROW(io::parse_detection_line(R"({"seq":"a","frame":0,"dets":[[0,0,1,2,0]]})"), Error);
  const io::DetectionLine d = io::parse_detection_line(R"({"seq":"a","frame":0,"dets":[[0,0,2,1,0,0.5]]})");
  EXPECT_EQ(*d.dets[0].conf, 0.5);
  EXPECT_EQ(d.dets[0].w, 1.0);
}

TEST(Triplets, LineRoundTrip) {
  io::TripletLine t{TripletMode::Online, "s", 5, 4, 6, {{1, 2, 3, 4, 0.5, {}}}};
  const std::string s = io::format_triplet_line(t);
  EXPECT_EQ(s, R"({"mode":"online","seq":"s","frame_t":5,"frame_tm1":4,"gt_frame":6,"gts":[[1,2,3,4,0.5]]})");
  EXPECT_EQ(io::format_triplet_line(io::parse_triplet_line(s)), s);
  EXPECT_THROW(io::parse_triplet_line(R"({"mode":"later","seq":"s","frame_t":5,"frame_tm1":4,"gt_frame":6,"gts":[]})"),
               Error);
}

TEST(Convert, AxisAlignedContour) {
  io::ConversionSummary summary;
  const auto out = io::convert_annotations(
      annotations_from(R"({"seq":"a","frame":0,"objects":[{"contour":[[0,0],[4,0],[4,2],[0,2]],"class":"car"}]})"),
      summary);
  const RotatedBox b = std::get<RotatedBox>(out[0].objects[0].shape);
  EXPECT_NEAR(b.cx, 2.0, 1e-12);
  EXPECT_NEAR(b.cy, 1.0, 1e-12);
  EXPECT_NEAR(b.w, 2.0, 1e-12);
  EXPECT_NEAR(b.h, 4.0, 1e-12);
  EXPECT_NEAR(b.angle, -kHalfPi, 1e-12);
  EXPECT_EQ(out[0].objects[0].label, "car");
  EXPECT_EQ(summary.contours_converted, 1u);
}

TEST(Convert, RboxCanonicalizedAndDegenerateDropped) {
  io::ConversionSummary summary;
  const auto out = io::convert_annotations(
      annotations_from("{\"seq\":\"a\",\"frame\":0,\"objects\":[{\"rbox\":[0,0,3,1,0]}]}\n"
                       "{\"seq\":\"a\",\"frame\":1,\"objects\":[{\"contour\":[[0,0],[1,1],[2,2]]},"
                       "{\"rbox\":[5,5,1,2,0]}]}\n"),
      summary);
  const RotatedBox b = std::get<RotatedBox>(out[0].objects[0].shape);
  EXPECT_EQ(b, (RotatedBox{0, 0, 1, 3, -kHalfPi, {}}));
  ASSERT_EQ(out[1].objects.size(), 1u);
  EXPECT_EQ(summary.dropped, 1u);
  EXPECT_EQ(summary.rboxes_kept, 2u);
  ASSERT_EQ(summary.drop_reasons.size(), 1u);
  EXPECT_NE(summary.drop_reasons[0].find("line 2 object 0"), std::string::npos);
}

TEST(Convert, Idempotent) {
  io::ConversionSummary s1, s2;
  const auto once = io::convert_annotations(annotations_from(slurp("annotations.jsonl")), s1);
  const auto twice = io::convert_annotations(once, s2);
  EXPECT_EQ(annotations_to_string(once), annotations_to_string(twice));
  EXPECT_GT(s1.contours_converted, 0u);
  EXPECT_EQ(s2.contours_converted, 0u);
  for (const auto& line : once) {
    for (const auto& o : line.objects) EXPECT_TRUE(is_canonical(std::get<RotatedBox>(o.shape)));
  }
}

TEST(Report, TenThresholdKeysAndRoundTrip) {
  std::istringstream gin(slurp("annotations.jsonl"));
  std::istringstream din(slurp("detections.jsonl"));
  const auto gt = io::to_gt_frames(io::read_annotations(gin));
  const auto det = io::to_det_frames(io::read_detections(din));
  const EvalReport r = evaluate(gt, det, EvalOptions{});
  const std::string text = io::format_report(r);
  const nlohmann::json j = nlohmann::json::parse(text);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j["thresholds"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"0.50", "0.55", "0.60", "0.65", "0.70", "0.75", "0.80",
                                            "0.85", "0.90", "0.95"}));
  EXPECT_EQ(j["protocol"], "streaming");
  EXPECT_EQ(io::format_report(io::parse_report(text)), text);
}

TEST(PrCsv, HeaderAndRows) {
  PrCurve c{2, {{0.9, 1, 0, 0.5, 1.0}, {0.4, 1, 1, 0.5, 0.5}}};
  EXPECT_EQ(io::format_pr_csv(c), "conf,recall,precision\n0.90000000000000002,0.5,1\n0.40000000000000002,0.5,0.5\n");
  EXPECT_EQ(io::pr_csv_name(0.5), "pr_0.50.csv");
  EXPECT_EQ(io::pr_csv_name(0.95), "pr_0.95.csv");
}

TEST(AnchorConfigJson, RoundTrip) {
  for (const AnchorConfig& cfg : {AnchorConfig::woodscape(), AnchorConfig::argoverse()}) {
    const std::string s = io::format_anchor_config(cfg);
    EXPECT_EQ(io::parse_anchor_config(s), cfg);
  }
  EXPECT_THROW(io::parse_anchor_config(R"({"levels":[{"stride":8,"anchors":[[1,2]]}]})"), Error);
}

}  // namespace
}  // namespace rotstream
