#include "contextprobe/model.hpp"

#include "contextprobe/rng.hpp"

#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace contextprobe;
using namespace contextprobe::testing;

namespace {

ArchDescriptor tiny_arch(Task task, int k = 3, Index hw = 10) {
  ArchDescriptor a;
  a.task = task;
  a.num_classes = k;
  a.in_h = hw;
  a.in_w = hw;
  a.convs = {{4, 1}, {4, 1}};
  return a;
}

}  // namespace

TEST_CASE("init_params is deterministic and seed-sensitive") {
  const ArchDescriptor arch = tiny_arch(Task::classifier);
  const ParamVec a = init_params(arch, 7);
  const ParamVec b = init_params(arch, 7);
  const ParamVec c = init_params(arch, 8);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(static_cast<std::size_t>(a.values.size()) == param_count(arch));
}

TEST_CASE("zero-layer architecture is rejected") {
  ArchDescriptor arch = tiny_arch(Task::classifier);
  arch.convs.clear();
  CHECK_THROWS_AS(init_params(arch, 1), std::invalid_argument);
}

TEST_CASE("segmenter architecture requires stride 1") {
  ArchDescriptor arch = tiny_arch(Task::segmenter);
  arch.convs[0].stride = 2;
  CHECK_THROWS_AS(validate(arch), std::invalid_argument);
}

TEST_CASE("all-zero weights give logits equal to the (zero) biases") {
  const ArchDescriptor arch = tiny_arch(Task::classifier);
  ParamVec p = init_params(arch, 1);
  p.values.setZero();
  Rng rng(5);
  const Image img = random_image(10, 10, rng);
  const Eigen::VectorXd logits = classifier_apply(p, img);
  for (Index i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("identical images produce identical logits") {
  const ParamVec p = init_params(tiny_arch(Task::classifier), 3);
  Rng rng(6);
  const Image img = random_image(10, 10, rng);
  const Image copy = img;
  CHECK(classifier_apply(p, img) == classifier_apply(p, copy));
}

TEST_CASE("classifier rejects mismatched input shapes") {
  const ParamVec p = init_params(tiny_arch(Task::classifier), 3);
  Rng rng(6);
  const Image img = random_image(12, 12, rng);
  CHECK_THROWS_AS(classifier_apply(p, img), std::invalid_argument);
}

TEST_CASE("segmenter logits are per-pixel and constant on constant input") {
  const ArchDescriptor arch = tiny_arch(Task::segmenter);
  const ParamVec p = init_params(arch, 11);
  Image img(10, 10);
  img.fill({0.4f, 0.6f, 0.2f});
  const auto logits = segmenter_apply(p, img);
  REQUIRE(logits.size() == 3);
  CHECK(logits[0].rows() == 10);
  CHECK(logits[0].cols() == 10);
  // away from the zero-padded borders (2 conv layers -> depth 2) the
  // translation-invariant stack must give identical logits
  for (const Planed& plane : logits) {
    const double ref = plane(4, 4);
    for (Index r = 2; r <= 7; ++r)
      for (Index c = 2; c <= 7; ++c)
        CHECK(plane(r, c) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("classifier gradient matches central finite differences") {
  Rng rng(100);
  int done = 0;
  std::uint64_t seed = 0;
  while (done < 3) {
    ++seed;
    const ParamVec p = init_params(tiny_arch(Task::classifier), seed);
    const Image img = random_image(10, 10, rng);
    if (pool_top2_gap(p, img) < 0.02) continue;  // FD-unsafe: argmax tie
    const std::vector<int> labels = {0, 2};
    const double err = max_rel_grad_error(p, [&](const ParamVec& q) {
      return classifier_bce_bundle(q, img, labels);
    });
    CHECK(err < 1e-4);
    ++done;
  }
}

TEST_CASE("segmenter gradients match central finite differences in all modes") {
  Rng rng(200);
  int done = 0;
  std::uint64_t seed = 50;
  while (done < 2) {
    ++seed;
    const ParamVec p = init_params(tiny_arch(Task::segmenter), seed);
    const Image img = random_image(10, 10, rng);  // smooth everywhere: no guard
    LabelPlane labels(10, 10);
    MaskPlane mask(10, 10);
    for (Index r = 0; r < 10; ++r)
      for (Index c = 0; c < 10; ++c) {
        labels(r, c) = static_cast<std::uint16_t>(rng.uniform_int(3));
        mask(r, c) = rng.uniform() < 0.2;
      }
    LabelPlane with_ignore = labels;
    for (Index r = 0; r < 10; ++r)
      for (Index c = 0; c < 10; ++c)
        if (mask(r, c)) with_ignore(r, c) = kIgnoreLabel;

    const double err_plain = max_rel_grad_error(p, [&](const ParamVec& q) {
      return segmenter_bundle(q, img, labels, SegLossMode::plain);
    });
    CHECK(err_plain < 1e-4);
    const double err_ignore = max_rel_grad_error(p, [&](const ParamVec& q) {
      return segmenter_bundle(q, img, with_ignore, SegLossMode::ignore_removed);
    });
    CHECK(err_ignore < 1e-4);
    const double err_neg = max_rel_grad_error(p, [&](const ParamVec& q) {
      return segmenter_bundle(q, img, with_ignore, SegLossMode::negative, 1,
                              &mask, 0.7);
    });
    CHECK(err_neg < 1e-4);
    ++done;
  }
}

TEST_CASE("hinge composite gradient matches central finite differences") {
  Rng rng(300);
  int done = 0;
  std::uint64_t seed = 80;
  while (done < 2) {
    ++seed;
    const ParamVec p = init_params(tiny_arch(Task::classifier), seed);
    std::map<int, Image> edits;
    for (int c = 0; c < 3; ++c) edits.emplace(c, random_image(10, 10, rng));
    const std::vector<int> present = {0, 1, 2};

    bool safe = true;
    std::map<int, Eigen::VectorXd> logits;
    for (const auto& [removed, img] : edits) {
      if (pool_top2_gap(p, img) < 0.02) safe = false;
      logits.emplace(removed, classifier_apply(p, img));
    }
    if (!safe || hinge_margin(logits, present) < 0.02) continue;

    const double err = max_rel_grad_error(p, [&](const ParamVec& q) {
      return classifier_hinge_bundle(q, edits, present);
    });
    CHECK(err < 1e-4);
    ++done;
  }
}

TEST_CASE("multilabel_bce: saturation, ln2 at zero, and reference equality") {
  Eigen::VectorXd logits(3);
  logits << 50.0, 0.0, 0.0;
  const LogitLoss saturated = multilabel_bce(logits, std::vector<int>{0});
  // the positive class at +50 contributes essentially nothing
  CHECK(ref_bce(50.0, true) < 1e-8);
  CHECK(saturated.loss ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));

  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4);
  const LogitLoss at_zero = multilabel_bce(zeros, std::vector<int>{1, 2});
  CHECK(at_zero.loss == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));

  Rng rng(9);
  Eigen::VectorXd z(5);
  for (Index i = 0; i < 5; ++i) z[i] = rng.uniform(-6.0, 6.0);
  const std::vector<int> pos = {1, 4};
  const LogitLoss ll = multilabel_bce(z, pos);
  long double expect = 0;
  for (Index i = 0; i < 5; ++i)
    expect += ref_bce(z[i], i == 1 || i == 4);
  CHECK(ll.loss == doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
}

TEST_CASE("context_hinge evaluates the ranking terms") {
  auto make = [](double self, double other) {
    // two classes: 0 under study, 1 the context; edits keyed by removed class
    std::map<int, Eigen::VectorXd> edits;
    Eigen::VectorXd a(2), b(2);
    a << self, 0.0;   // image with class 0 removed
    b << other, 0.0;  // image with class 1 removed (still shows class 0)
    edits.emplace(0, a);
    edits.emplace(1, b);
    return edits;
  };
  const std::vector<int> present = {0, 1};

  CHECK(context_hinge(make(-1.0, 2.0), present).loss == 0.0);  // satisfied
  CHECK(context_hinge(make(2.0, 1.0), present).loss == 1.0);   // violated by 1
  CHECK(context_hinge(make(0.4, 0.4), present).loss == 0.0);   // ties satisfy

  // a class with no other edits contributes nothing
  std::map<int, Eigen::VectorXd> lone;
  Eigen::VectorXd v(2);
  v << 3.0, 0.0;
  lone.emplace(0, v);
  CHECK(context_hinge(lone, present).loss == 0.0);
}

TEST_CASE("context_hinge is invariant to edited-set insertion order") {
  Rng rng(44);
  Eigen::VectorXd l0(3), l1(3), l2(3);
  for (Index i = 0; i < 3; ++i) {
    l0[i] = rng.uniform(-2, 2);
    l1[i] = rng.uniform(-2, 2);
    l2[i] = rng.uniform(-2, 2);
  }
  const std::vector<int> present = {0, 1, 2};
  std::map<int, Eigen::VectorXd> fwd, rev;
  fwd.emplace(0, l0);
  fwd.emplace(1, l1);
  fwd.emplace(2, l2);
  rev.emplace(2, l2);
  rev.emplace(1, l1);
  rev.emplace(0, l0);
  CHECK(context_hinge(fwd, present).loss == context_hinge(rev, present).loss);
}

TEST_CASE("seg_loss: ignore mode drops sentinel pixels") {
  const ParamVec p = init_params(tiny_arch(Task::segmenter), 21);
  Rng rng(22);
  const Image img = random_image(10, 10, rng);
  const auto logits = segmenter_apply(p, img);

  LabelPlane all_ignored = LabelPlane::Constant(10, 10, kIgnoreLabel);
  const SegLogitLoss zero = seg_loss(logits, all_ignored, SegLossMode::ignore_removed);
  CHECK(zero.ce == 0.0);
  CHECK(zero.neg == 0.0);

  LabelPlane labels(10, 10);
  for (Index r = 0; r < 10; ++r)
    for (Index c = 0; c < 10; ++c)
      labels(r, c) = static_cast<std::uint16_t>(rng.uniform_int(3));
  const SegLogitLoss plain = seg_loss(logits, labels, SegLossMode::plain);
  const SegLogitLoss ignore = seg_loss(logits, labels, SegLossMode::ignore_removed);
  CHECK(plain.ce == ignore.ce);  // no sentinel anywhere
}

TEST_CASE("seg_loss: negative term vanishes when the class is already ruled out") {
  std::vector<Planed> logits(3);
  logits[0] = Planed::Constant(6, 6, 2.0);
  logits[1] = Planed::Constant(6, 6, -40.0);  // p(removed) ~ 0
  logits[2] = Planed::Constant(6, 6, 1.0);
  LabelPlane labels = LabelPlane::Constant(6, 6, kIgnoreLabel);
  MaskPlane mask = MaskPlane::Constant(6, 6, true);
  const SegLogitLoss out =
      seg_loss(logits, labels, SegLossMode::negative, 1, &mask, 1.0);
  CHECK(out.neg < 1e-12);
}

TEST_CASE("seg_loss: plain value matches the extended-precision reference") {
  Rng rng(33);
  std::vector<Planed> logits(4);
  for (auto& p : logits) {
    p = Planed::Zero(8, 8);
    for (Index r = 0; r < 8; ++r)
      for (Index c = 0; c < 8; ++c) p(r, c) = rng.uniform(-4, 4);
  }
  LabelPlane labels(8, 8);
  for (Index r = 0; r < 8; ++r)
    for (Index c = 0; c < 8; ++c)
      labels(r, c) = static_cast<std::uint16_t>(rng.uniform_int(4));

  const SegLogitLoss out = seg_loss(logits, labels, SegLossMode::plain);
  long double expect = 0;
  for (Index r = 0; r < 8; ++r)
    for (Index c = 0; c < 8; ++c) {
      std::vector<double> z(4);
      for (Index i = 0; i < 4; ++i) z[i] = logits[i](r, c);
      expect += ref_softmax_ce(z, labels(r, c));
    }
  expect /= 64.0L;
  CHECK(out.ce == doctest::Approx(static_cast<double>(expect)).epsilon(1e-10));
}

TEST_CASE("loss bundle breakdown sums to the total") {
  Rng rng(55);
  const ParamVec pc = init_params(tiny_arch(Task::classifier), 3);
  const Image img = random_image(10, 10, rng);
  const LossBundle cb = classifier_bce_bundle(pc, img, std::vector<int>{1});
  CHECK(std::abs(cb.parts.total() - cb.loss) < 1e-6);

  const ParamVec ps = init_params(tiny_arch(Task::segmenter), 3);
  LabelPlane labels = LabelPlane::Zero(10, 10);
  MaskPlane mask = MaskPlane::Constant(10, 10, false);
  mask(3, 3) = true;
  const LossBundle sb = segmenter_bundle(ps, img, labels, SegLossMode::negative,
                                         2, &mask, 0.5);
  CHECK(std::abs(sb.parts.total() - sb.loss) < 1e-6);
}

TEST_CASE("sgd_step: definition, fixed point, determinism, divergence") {
  ArchDescriptor arch = tiny_arch(Task::classifier);
  ParamVec p = init_params(arch, 1);
  Eigen::VectorXd vel = Eigen::VectorXd::Zero(p.values.size());

  ParamVec frozen = p;
  Eigen::VectorXd zero_grad = Eigen::VectorXd::Zero(p.values.size());
  sgd_step(frozen, vel, zero_grad, 0.1, 0.0);
  CHECK(frozen.values == p.values);

  ParamVec single = p;
  single.values[0] = 1.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.values.size());
  g[0] = 0.25;
  Eigen::VectorXd v2 = Eigen::VectorXd::Zero(p.values.size());
  sgd_step(single, v2, g, 1.0, 0.0);
  CHECK(single.values[0] == 0.75);

  // identical schedules give bitwise-identical trajectories
  auto run = [&](std::uint64_t seed) {
    ParamVec q = init_params(arch, seed);
    Eigen::VectorXd vel2 = Eigen::VectorXd::Zero(q.values.size());
    Rng rng(seed);
    for (int step = 0; step < 10; ++step) {
      Eigen::VectorXd grad(q.values.size());
      for (Index i = 0; i < grad.size(); ++i) grad[i] = rng.uniform(-1, 1);
      sgd_step(q, vel2, grad, 0.05, 0.9);
    }
    return q.values;
  };
  CHECK(run(15) == run(15));

  Eigen::VectorXd bad = zero_grad;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sgd_step(p, vel, bad, 0.1, 0.0), std::runtime_error);
}
