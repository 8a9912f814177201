#pragma once

#include "contextprobe/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace contextprobe {

// ---------------------------------------------------------------------------
// Classifier-side robustness.

struct SceneScores {
  std::vector<int> present;              // object classes in the scene, ascending
  Eigen::VectorXd original;              // K logits on the unedited image
  std::map<int, Eigen::VectorXd> edits;  // removed class -> K logits
};

struct ScoreTable {
  int num_classes = 0;
  std::map<std::int64_t, SceneScores> rows;
};

struct ConstraintCheck {
  bool eligible = false;  // own-removal edit exists and >= 1 other edit
  bool violated_min = false;
  bool violated_mean = false;
};

/// Order check for one class on one scene: a robust classifier scores every
/// image that still contains the class at least as high as the image with
/// the class removed. Equality is not a violation.
ConstraintCheck check_constraint(const SceneScores& row, int class_id);

struct ClassViolations {
  int eligible = 0;
  int violated_min = 0;
  int violated_mean = 0;
  double vmin() const { return eligible ? double(violated_min) / eligible : 0.0; }
  double vmean() const { return eligible ? double(violated_mean) / eligible : 0.0; }
};

struct VMetrics {
  std::map<int, ClassViolations> per_class;  // classes with >= 1 eligible scene
  double vmin_mean = 0.0;   // unweighted over classes present in the map
  double vmean_mean = 0.0;
};

VMetrics v_metrics(const ScoreTable& table);

// ---------------------------------------------------------------------------
// Segmentation-side robustness.

/// IoU of one class between two label rasters. Ignore-sentinel pixels (in
/// either raster) and pixels of `excluded`, when given, are dropped from
/// both sets. Empty-vs-empty is defined as 1.
double iou(const LabelPlane& a, const LabelPlane& b, int class_id,
           const MaskPlane* excluded = nullptr);

struct EditPrediction {
  int removed_class = 0;
  LabelPlane pred;     // prediction on the edited image
  MaskPlane excluded;  // edited pixels, dropped from both IoU evaluations
};

struct ScenePredictions {
  std::int64_t scene_id = 0;
  LabelPlane gt;
  LabelPlane pred_original;
  std::vector<EditPrediction> edits;
};

struct PairStats {
  int images = 0;    // scenes containing both classes with this edit
  int affected = 0;  // |delta IoU| >= alpha
  double delta_sum = 0.0;
  double ar() const { return images ? double(affected) / images : 0.0; }
  double mean_delta() const { return images ? delta_sum / images : 0.0; }
};

struct ArMatrix {
  int num_classes = 0;
  double alpha = 0.1;
  std::map<std::pair<int, int>, PairStats> pairs;  // (affected, removed)
};

/// Fraction of co-occurring images where removing class j moves class i's
/// IoU against ground truth by at least alpha. Also accumulates the signed
/// mean IoU change.
ArMatrix ar_matrix(std::span<const ScenePredictions> scenes, int num_classes,
                   double alpha);

// ---------------------------------------------------------------------------
// Standard performance metrics.

/// Average precision of a score ranking (descending, ties broken by stable
/// index). nullopt when there is no positive.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

struct MeanAp {
  std::map<int, double> per_class;  // classes with >= 1 positive
  double value = 0.0;               // unweighted mean over per_class
};

MeanAp mean_average_precision(
    const std::map<int, std::vector<double>>& scores,
    const std::map<int, std::vector<std::uint8_t>>& labels);

struct SegPerf {
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  std::map<int, double> per_class_iou;  // classes present in ground truth
};

/// Dataset-level mIoU (per-class intersections/unions accumulated over all
/// rasters, averaged over classes present in ground truth) plus pixel
/// accuracy over non-ignored pixels.
SegPerf seg_perf(std::span<const LabelPlane> preds,
                 std::span<const LabelPlane> gts);

// ---------------------------------------------------------------------------
// Co-occurrence statistics.

struct NcMatrix {
  int num_classes = 0;
  Eigen::MatrixXd values;          // NC(i,j) = count(i and j) / count(i)
  std::vector<bool> class_present; // rows defined only for present classes
};

/// Row-normalized co-occurrence counts; asymmetric in general, diagonal 1
/// for present classes.
NcMatrix nc_matrix(std::span<const std::vector<int>> presence, int num_classes);

}  // namespace contextprobe
