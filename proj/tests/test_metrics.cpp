#include "contextprobe/metrics.hpp"

#include "contextprobe/rng.hpp"

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace contextprobe;
using namespace contextprobe::testing;

namespace {

SceneScores row_with(std::vector<int> present,
                     std::map<int, std::vector<double>> edit_scores, int k) {
  SceneScores row;
  row.present = std::move(present);
  row.original = Eigen::VectorXd::Zero(k);
  for (auto& [removed, scores] : edit_scores) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v[i] = scores[i];
    row.edits.emplace(removed, v);
  }
  return row;
}

/// Random score table over scenes with random present/removable classes.
ScoreTable random_table(int n_scenes, int k, Rng& rng) {
  ScoreTable table;
  table.num_classes = k;
  for (int s = 0; s < n_scenes; ++s) {
    SceneScores row;
    for (int c = 1; c < k; ++c)
      if (rng.uniform() < 0.6) row.present.push_back(c);
    if (row.present.empty()) row.present.push_back(1 + static_cast<int>(rng.uniform_int(k - 1)));
    row.original = Eigen::VectorXd::Zero(k);
    for (Index i = 0; i < k; ++i) row.original[i] = rng.uniform(-3, 3);
    for (int c : row.present) {
      if (rng.uniform() < 0.2) continue;  // some classes lack their own edit
      Eigen::VectorXd v(k);
      for (Index i = 0; i < k; ++i) v[i] = rng.uniform(-3, 3);
      row.edits.emplace(c, v);
    }
    table.rows.emplace(s, std::move(row));
  }
  return table;
}

LabelPlane const_labels(Index h, Index w, std::uint16_t v) {
  return LabelPlane::Constant(h, w, v);
}

}  // namespace

TEST_CASE("check_constraint: min vs mean violations and tie handling") {
  // S(I-c1) = 0.5, owc = {0.2, 0.9}: min violated, mean (0.55) not
  const SceneScores row = row_with(
      {1, 2, 3},
      {{1, {0, 0.5, 0, 0}}, {2, {0, 0.2, 0, 0}}, {3, {0, 0.9, 0, 0}}}, 4);
  const ConstraintCheck c = check_constraint(row, 1);
  CHECK(c.eligible);
  CHECK(c.violated_min);
  CHECK_FALSE(c.violated_mean);

  // S(I-c1) = 0.2 against a single owc score 0.3: satisfied both ways
  const SceneScores ok =
      row_with({1, 2}, {{1, {0, 0.2, 0}}, {2, {0, 0.3, 0}}}, 3);
  const ConstraintCheck c2 = check_constraint(ok, 1);
  CHECK(c2.eligible);
  CHECK_FALSE(c2.violated_min);
  CHECK_FALSE(c2.violated_mean);

  // exact equality is not a violation (the required order is non-strict)
  const SceneScores tie =
      row_with({1, 2}, {{1, {0, 0.4, 0}}, {2, {0, 0.4, 0}}}, 3);
  const ConstraintCheck c3 = check_constraint(tie, 1);
  CHECK(c3.eligible);
  CHECK_FALSE(c3.violated_min);
  CHECK_FALSE(c3.violated_mean);

  // no other removable object: excluded from numerator and denominator
  const SceneScores lonely = row_with({1}, {{1, {0, 0.4, 0}}}, 3);
  CHECK_FALSE(check_constraint(lonely, 1).eligible);
}

TEST_CASE("v_metrics: single eligible violated scene gives 1.0") {
  ScoreTable table;
  table.num_classes = 3;
  table.rows.emplace(
      0, row_with({1, 2}, {{1, {0, 1.0, 0}}, {2, {0, 0.2, 0}}}, 3));
  const VMetrics vm = v_metrics(table);
  REQUIRE(vm.per_class.count(1) == 1);
  CHECK(vm.per_class.at(1).vmin() == 1.0);
  CHECK(vm.per_class.at(1).vmean() == 1.0);
}

TEST_CASE("v_metrics matches the brute-force enumeration oracle exactly") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const ScoreTable table = random_table(20, 5, rng);
    const VMetrics vm = v_metrics(table);
    const auto brute = brute_violations(table);
    CHECK(vm.per_class.size() == brute.size());
    for (const auto& [c, stats] : brute) {
      REQUIRE(vm.per_class.count(c) == 1);
      const ClassViolations& v = vm.per_class.at(c);
      CHECK(v.eligible == stats.eligible);
      CHECK(v.violated_min == stats.vmin);
      CHECK(v.violated_mean == stats.vmean);
    }
  }
}

TEST_CASE("v_metrics is invariant under per-class monotone score transforms") {
  Rng rng(321);
  const ScoreTable table = random_table(15, 4, rng);
  ScoreTable warped = table;
  for (auto& [sid, row] : warped.rows)
    for (auto& [removed, v] : row.edits)
      for (Index i = 0; i < v.size(); ++i)
        v[i] = std::exp(0.7 * v[i]) + 2.0 * v[i];  // strictly increasing
  const VMetrics a = v_metrics(table);
  const VMetrics b = v_metrics(warped);
  for (const auto& [c, va] : a.per_class) {
    CHECK(va.eligible == b.per_class.at(c).eligible);
    CHECK(va.violated_min == b.per_class.at(c).violated_min);
    CHECK(va.violated_mean == b.per_class.at(c).violated_mean);
  }
}

TEST_CASE("iou: identity, disjoint, half overlap, empty-empty, symmetry") {
  LabelPlane a = const_labels(8, 8, 0);
  LabelPlane b = const_labels(8, 8, 0);
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 8; ++c) a(r, c) = 1;
  CHECK(iou(a, a, 1) == 1.0);

  for (Index r = 4; r < 8; ++r)
    for (Index c = 0; c < 8; ++c) b(r, c) = 1;
  CHECK(iou(a, b, 1) == 0.0);  // disjoint non-empty sets

  LabelPlane half = const_labels(8, 8, 0);
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 8; ++c) half(r, c) = 1;  // covers half of a's 32 px
  CHECK(iou(half, a, 1) == 0.5);
  CHECK(iou(a, half, 1) == 0.5);  // symmetric in the two rasters

  CHECK(iou(const_labels(4, 4, 0), const_labels(4, 4, 0), 3) == 1.0);

  // sentinel pixels are dropped from both sets
  LabelPlane ig = a;
  ig(0, 0) = kIgnoreLabel;
  CHECK(iou(a, ig, 1) == 1.0);

  CHECK_THROWS_AS(iou(a, const_labels(4, 4, 0), 1), std::invalid_argument);
}

TEST_CASE("ar_matrix counts IoU moves of at least alpha") {
  // gt: class 1 on 20 pixels; class 2 present elsewhere so the pair exists
  LabelPlane gt = const_labels(10, 10, 0);
  for (Index c = 0; c < 10; ++c) {
    gt(0, c) = 1;
    gt(1, c) = 1;
  }
  gt(9, 9) = 2;

  auto pred_with = [&](int n_correct) {
    LabelPlane p = const_labels(10, 10, 0);
    int placed = 0;
    for (Index r = 0; r < 2 && placed < n_correct; ++r)
      for (Index c = 0; c < 10 && placed < n_correct; ++c) {
        p(r, c) = 1;
        ++placed;
      }
    p(9, 9) = 2;
    return p;
  };

  ScenePredictions sp;
  sp.scene_id = 0;
  sp.gt = gt;
  sp.pred_original = pred_with(16);  // IoU(1) = 16/20 = 0.80
  EditPrediction drop;
  drop.removed_class = 2;
  drop.pred = pred_with(12);  // IoU(1) = 12/20 = 0.60
  drop.excluded = MaskPlane::Constant(10, 10, false);
  sp.edits.push_back(drop);

  const ArMatrix affected = ar_matrix(std::vector<ScenePredictions>{sp}, 3, 0.1);
  CHECK(affected.pairs.at({1, 2}).ar() == 1.0);
  CHECK(affected.pairs.at({1, 2}).mean_delta() == doctest::Approx(-0.2));

  ScenePredictions mild = sp;
  mild.edits[0].pred = pred_with(15);  // IoU(1) = 0.75: |delta| = 0.05 < alpha
  const ArMatrix unaffected =
      ar_matrix(std::vector<ScenePredictions>{mild}, 3, 0.1);
  CHECK(unaffected.pairs.at({1, 2}).ar() == 0.0);
}

TEST_CASE("ar_matrix matches the brute-force oracle on random rasters") {
  Rng rng(777);
  std::vector<ScenePredictions> scenes;
  for (int s = 0; s < 12; ++s) {
    ScenePredictions sp;
    sp.scene_id = s;
    sp.gt = LabelPlane(8, 8);
    sp.pred_original = LabelPlane(8, 8);
    for (Index r = 0; r < 8; ++r)
      for (Index c = 0; c < 8; ++c) {
        sp.gt(r, c) = static_cast<std::uint16_t>(rng.uniform_int(4));
        sp.pred_original(r, c) = static_cast<std::uint16_t>(rng.uniform_int(4));
      }
    for (int removed = 1; removed <= 3; ++removed) {
      if (rng.uniform() < 0.4) continue;
      EditPrediction ep;
      ep.removed_class = removed;
      ep.pred = LabelPlane(8, 8);
      ep.excluded = MaskPlane(8, 8);
      for (Index r = 0; r < 8; ++r)
        for (Index c = 0; c < 8; ++c) {
          ep.pred(r, c) = static_cast<std::uint16_t>(rng.uniform_int(4));
          ep.excluded(r, c) = rng.uniform() < 0.15;
        }
      sp.edits.push_back(std::move(ep));
    }
    scenes.push_back(std::move(sp));
  }
  const ArMatrix m = ar_matrix(scenes, 4, 0.1);
  const auto brute = brute_ar(scenes, 0.1);
  CHECK(m.pairs.size() == brute.size());
  for (const auto& [key, bp] : brute) {
    const PairStats& ps = m.pairs.at(key);
    CHECK(ps.images == bp.images);
    CHECK(ps.affected == bp.affected);
    CHECK(ps.delta_sum == bp.delta_sum);
  }
}

TEST_CASE("average_precision: rankings, ties, and edge cases") {
  const std::vector<double> perfect = {0.9, 0.8, 0.7, 0.1};
  const std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  CHECK(*average_precision(perfect, labels) == 1.0);

  const std::vector<double> mixed = {0.9, 0.8, 0.3};
  const std::vector<std::uint8_t> ml = {1, 0, 1};
  CHECK(*average_precision(mixed, ml) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));

  const std::vector<double> any = {0.2, 0.9, 0.5};
  const std::vector<std::uint8_t> all_pos = {1, 1, 1};
  CHECK(*average_precision(any, all_pos) == 1.0);

  const std::vector<std::uint8_t> none = {0, 0, 0};
  CHECK_FALSE(average_precision(any, none).has_value());
}

TEST_CASE("average_precision is invariant under monotone score transforms") {
  Rng rng(901);
  std::vector<double> scores(40);
  std::vector<std::uint8_t> labels(40);
  for (int i = 0; i < 40; ++i) {
    scores[i] = rng.uniform(-5, 5);
    labels[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  labels[0] = 1;
  const double base = *average_precision(scores, labels);
  std::vector<double> warped = scores;
  for (double& s : warped) s = std::atan(s) * 3.0 + 7.0;
  CHECK(*average_precision(warped, labels) == base);
}

TEST_CASE("seg_perf: exact prediction, constant prediction, total miss") {
  LabelPlane gt = const_labels(8, 8, 0);
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 8; ++c) gt(r, c) = 1;  // half background, half class 1

  const SegPerf exact = seg_perf(std::vector<LabelPlane>{gt},
                                 std::vector<LabelPlane>{gt});
  CHECK(exact.miou == 1.0);
  CHECK(exact.pixel_accuracy == 1.0);

  const SegPerf constant = seg_perf(std::vector<LabelPlane>{const_labels(8, 8, 0)},
                                    std::vector<LabelPlane>{gt});
  CHECK(constant.pixel_accuracy == 0.5);

  const LabelPlane ones = const_labels(8, 8, 1);
  const LabelPlane twos = const_labels(8, 8, 2);
  const SegPerf miss = seg_perf(std::vector<LabelPlane>{twos},
                                std::vector<LabelPlane>{ones});
  CHECK(miss.miou == 0.0);
}

TEST_CASE("nc_matrix: normalized, asymmetric co-occurrence") {
  std::vector<std::vector<int>> presence;
  // class 2 appears in every class-1 scene: NC(1,2) = 1
  for (int i = 0; i < 6; ++i) presence.push_back({1, 2});
  for (int i = 0; i < 3; ++i) presence.push_back({2});
  const NcMatrix nc = nc_matrix(presence, 3);
  CHECK(nc.values(1, 2) == 1.0);
  CHECK(nc.values(1, 1) == 1.0);
  CHECK(nc.values(2, 1) == doctest::Approx(6.0 / 9.0));
  CHECK(nc.values(1, 2) != nc.values(2, 1));  // asymmetry is expected

  // 1 in 10 scenes, 2 in 20, joint 5
  std::vector<std::vector<int>> counts;
  for (int i = 0; i < 5; ++i) counts.push_back({1, 2});
  for (int i = 0; i < 5; ++i) counts.push_back({1});
  for (int i = 0; i < 15; ++i) counts.push_back({2});
  const NcMatrix nc2 = nc_matrix(counts, 3);
  CHECK(nc2.values(1, 2) == 0.5);
  CHECK(nc2.values(2, 1) == 0.25);

  // absent classes have undefined rows
  const std::vector<std::vector<int>> only_one = {{1}};
  CHECK_FALSE(nc_matrix(only_one, 3).class_present[2]);
}
