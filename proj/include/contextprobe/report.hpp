#pragma once

#include "contextprobe/metrics.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace contextprobe {

struct ClassifierClassReport {
  int class_id = 0;
  std::optional<double> ap_full, ap_cooccur, ap_single;
  int eligible = 0;
  int vmin_violations = 0;
  int vmean_violations = 0;
  std::optional<double> vmin, vmean;  // absent when never eligible
};

struct ClassifierReport {
  std::vector<ClassifierClassReport> per_class;
  std::map<std::string, double> map_by_split;  // full / cooccur / single
  double vmin_mean = 0.0;
  double vmean_mean = 0.0;
};

struct SegSplitPerf {
  double miou = 0.0;
  double pixel_accuracy = 0.0;
};

struct ArEntry {
  int affected = 0;  // class whose IoU moved
  int removed = 0;   // class edited out
  int images = 0;
  int affected_n = 0;
  double ar = 0.0;
  double mean_delta_iou = 0.0;
};

struct SegmenterReport {
  std::map<std::string, SegSplitPerf> splits;
  std::map<int, double> per_class_iou;  // full split
  std::vector<ArEntry> ar;
  std::vector<ArEntry> ar_control;  // flipped-mask edits, degenerates excluded
};

/// Everything an audit produces, annotated with enough provenance that each
/// number is attributable to a config, dataset and checkpoint.
struct RobustnessReport {
  std::string task;  // "classifier" | "segmenter"
  double alpha = 0.1;
  int dilation_radius = 2;
  std::string backfill;
  std::string config_hash, dataset_id, checkpoint_id;
  int num_classes = 0;
  std::vector<std::vector<double>> nc;  // K x K; rows of absent classes are zero
  std::vector<bool> nc_row_defined;
  std::optional<ClassifierReport> classifier;
  std::optional<SegmenterReport> segmenter;
};

/// Canonical key-sorted JSON; serialization round-trips to an equal report.
std::string report_to_json(const RobustnessReport& report);
RobustnessReport report_from_json(const std::string& text);

bool operator==(const RobustnessReport& a, const RobustnessReport& b);

/// Per-class CSV (and AR matrix CSV for segmenter reports).
void write_report_csv(const RobustnessReport& report,
                      const std::filesystem::path& dir);

/// Plain-text series: AP-vs-Vmin scatter (one point per class with at least
/// one eligible image) and AR heat-map triples.
void write_report_plotdata(const RobustnessReport& report,
                           const std::filesystem::path& dir);

}  // namespace contextprobe
