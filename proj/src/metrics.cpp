#include "contextprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace contextprobe {

ConstraintCheck check_constraint(const SceneScores& row, int class_id) {
  ConstraintCheck out;
  const auto self_it = row.edits.find(class_id);
  if (self_it == row.edits.end()) return out;  // no own-removal edit
  if (std::find(row.present.begin(), row.present.end(), class_id) ==
      row.present.end())
    return out;
  const double self = self_it->second[class_id];

  double min_owc = 0, sum_owc = 0;
  int n = 0;
  for (const auto& [removed, logits] : row.edits) {
    if (removed == class_id) continue;
    const double s = logits[class_id];
    if (n == 0 || s < min_owc) min_owc = s;
    sum_owc += s;
    ++n;
  }
  if (n == 0) return out;  // empty constraint set: ineligible
  out.eligible = true;
  out.violated_min = min_owc < self;          // equality satisfies the order
  out.violated_mean = (sum_owc / n) < self;
  return out;
}

VMetrics v_metrics(const ScoreTable& table) {
  if (table.rows.empty()) throw std::invalid_argument("v_metrics: empty table");
  VMetrics out;
  for (const auto& [scene_id, row] : table.rows) {
    for (int c : row.present) {
      const ConstraintCheck chk = check_constraint(row, c);
      if (!chk.eligible) continue;
      ClassViolations& v = out.per_class[c];
      v.eligible += 1;
      v.violated_min += chk.violated_min ? 1 : 0;
      v.violated_mean += chk.violated_mean ? 1 : 0;
    }
  }
  if (!out.per_class.empty()) {
    double smin = 0, smean = 0;
    for (const auto& [c, v] : out.per_class) {
      smin += v.vmin();
      smean += v.vmean();
    }
    out.vmin_mean = smin / out.per_class.size();
    out.vmean_mean = smean / out.per_class.size();
  }
  return out;
}

double iou(const LabelPlane& a, const LabelPlane& b, int class_id,
           const MaskPlane* excluded) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("iou: shape mismatch");
  if (excluded &&
      (excluded->rows() != a.rows() || excluded->cols() != a.cols()))
    throw std::invalid_argument("iou: exclusion mask shape mismatch");
  const auto cid = static_cast<std::uint16_t>(class_id);
  long inter = 0, uni = 0;
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < a.cols(); ++c) {
      if (excluded && (*excluded)(r, c)) continue;
      if (a(r, c) == kIgnoreLabel || b(r, c) == kIgnoreLabel) continue;
      const bool in_a = a(r, c) == cid;
      const bool in_b = b(r, c) == cid;
      inter += (in_a && in_b) ? 1 : 0;
      uni += (in_a || in_b) ? 1 : 0;
    }
  if (uni == 0) return 1.0;  // both sets empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

ArMatrix ar_matrix(std::span<const ScenePredictions> scenes, int num_classes,
                   double alpha) {
  ArMatrix out;
  out.num_classes = num_classes;
  out.alpha = alpha;
  for (const ScenePredictions& sp : scenes) {
    std::set<int> present;
    for (Index r = 0; r < sp.gt.rows(); ++r)
      for (Index c = 0; c < sp.gt.cols(); ++c) {
        const std::uint16_t v = sp.gt(r, c);
        if (v != 0 && v != kIgnoreLabel) present.insert(v);
      }
    for (const EditPrediction& ep : sp.edits) {
      for (int ci : present) {
        if (ci == ep.removed_class) continue;
        const double iou_orig =
            iou(sp.pred_original, sp.gt, ci, &ep.excluded);
        const double iou_edit = iou(ep.pred, sp.gt, ci, &ep.excluded);
        const double delta = iou_edit - iou_orig;
        PairStats& ps = out.pairs[{ci, ep.removed_class}];
        ps.images += 1;
        if (std::abs(delta) >= alpha) ps.affected += 1;
        ps.delta_sum += delta;
      }
    }
  }
  return out;
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];  // ties keep original index order
  });
  long positives = 0;
  for (std::uint8_t l : labels) positives += l ? 1 : 0;
  if (positives == 0) return std::nullopt;

  double ap = 0;
  long seen = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!labels[order[rank]]) continue;
    ++seen;
    ap += static_cast<double>(seen) / static_cast<double>(rank + 1);
  }
  return ap / positives;
}

MeanAp mean_average_precision(
    const std::map<int, std::vector<double>>& scores,
    const std::map<int, std::vector<std::uint8_t>>& labels) {
  MeanAp out;
  double sum = 0;
  for (const auto& [c, s] : scores) {
    const auto it = labels.find(c);
    if (it == labels.end())
      throw std::invalid_argument("mean_average_precision: missing labels");
    const auto ap = average_precision(s, it->second);
    if (!ap) continue;  // classes without positives are skipped
    out.per_class[c] = *ap;
    sum += *ap;
  }
  if (!out.per_class.empty()) out.value = sum / out.per_class.size();
  return out;
}

SegPerf seg_perf(std::span<const LabelPlane> preds,
                 std::span<const LabelPlane> gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("seg_perf: raster count mismatch");
  std::map<int, std::pair<long, long>> acc;  // class -> (intersection, union)
  long correct = 0, counted = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelPlane& p = preds[i];
    const LabelPlane& g = gts[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw std::invalid_argument("seg_perf: shape mismatch");
    for (Index r = 0; r < p.rows(); ++r)
      for (Index c = 0; c < p.cols(); ++c) {
        if (g(r, c) == kIgnoreLabel) continue;
        ++counted;
        if (p(r, c) == g(r, c)) ++correct;
        auto& gacc = acc[g(r, c)];
        if (p(r, c) == g(r, c))
          gacc.first += 1;
        gacc.second += 1;
        if (p(r, c) != g(r, c)) acc[p(r, c)].second += 1;
      }
  }
  SegPerf out;
  // classes present in ground truth: those with >= 1 gt pixel
  std::map<int, long> gt_pixels;
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (Index r = 0; r < gts[i].rows(); ++r)
      for (Index c = 0; c < gts[i].cols(); ++c)
        if (gts[i](r, c) != kIgnoreLabel) gt_pixels[gts[i](r, c)] += 1;
  double sum = 0;
  for (const auto& [cls, n] : gt_pixels) {
    const auto& [inter, uni] = acc[cls];
    const double v = uni > 0 ? static_cast<double>(inter) / uni : 1.0;
    out.per_class_iou[cls] = v;
    sum += v;
  }
  if (!out.per_class_iou.empty()) out.miou = sum / out.per_class_iou.size();
  out.pixel_accuracy =
      counted > 0 ? static_cast<double>(correct) / counted : 0.0;
  return out;
}

NcMatrix nc_matrix(std::span<const std::vector<int>> presence, int num_classes) {
  if (presence.empty()) throw std::invalid_argument("nc_matrix: empty dataset");
  NcMatrix out;
  out.num_classes = num_classes;
  out.values = Eigen::MatrixXd::Zero(num_classes, num_classes);
  out.class_present.assign(num_classes, false);

  std::vector<long> count(num_classes, 0);
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(num_classes, num_classes);
  for (const std::vector<int>& scene : presence) {
    for (int i : scene) {
      count[i] += 1;
      for (int j : scene) joint(i, j) += 1.0;
    }
  }
  for (int i = 0; i < num_classes; ++i) {
    if (count[i] == 0) continue;  // row stays undefined
    out.class_present[i] = true;
    for (int j = 0; j < num_classes; ++j)
      out.values(i, j) = joint(i, j) / count[i];
  }
  return out;
}

}  // namespace contextprobe
