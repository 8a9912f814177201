#include "contextprobe/augment.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace contextprobe {

ClassLossTracker::ClassLossTracker(int num_classes, double decay, double floor,
                                   double initial)
    : avg_(num_classes, std::max(initial, floor)), decay_(decay), floor_(floor) {
  if (num_classes < 1) throw std::invalid_argument("tracker: num_classes < 1");
  if (decay < 0.0 || decay >= 1.0)
    throw std::invalid_argument("tracker: decay must be in [0,1)");
  if (floor <= 0.0) throw std::invalid_argument("tracker: floor must be > 0");
}

void ClassLossTracker::update(int class_id, double observed_loss) {
  if (!std::isfinite(observed_loss))
    throw std::invalid_argument("tracker: non-finite observed loss");
  if (observed_loss < 0.0)
    throw std::invalid_argument("tracker: negative observed loss");
  double& l = avg_.at(class_id);
  l = decay_ * l + (1.0 - decay_) * observed_loss;
  if (l < floor_) l = floor_;
}

namespace {

struct Candidates {
  std::vector<int> classes;   // removable classes present, ascending
  std::vector<double> areas;  // per-class summed area fraction
};

Candidates removable_candidates(const Scene& scene,
                                std::span<const ClassSpec> classes,
                                double size_gate) {
  std::map<int, double> area;
  for (const ObjectInstance& obj : scene.objects)
    area[obj.class_id] += obj.area_fraction;
  Candidates out;
  for (const auto& [class_id, a] : area) {
    const ClassSpec& cls = classes[class_id - 1];
    if (cls.is_stuff || a >= size_gate) continue;
    out.classes.push_back(class_id);
    out.areas.push_back(a);
  }
  return out;
}

std::optional<int> weighted_pick(const Candidates& cand,
                                 const std::vector<double>& weights, Rng& rng) {
  if (cand.classes.empty()) return std::nullopt;
  double total = 0;
  for (double w : weights) total += w;
  const double r = rng.uniform() * total;
  double cum = 0;
  for (std::size_t i = 0; i < cand.classes.size(); ++i) {
    cum += weights[i];
    if (r < cum) return cand.classes[i];
  }
  return cand.classes.back();
}

}  // namespace

std::optional<int> pick_random(const Scene& scene,
                               std::span<const ClassSpec> classes, Rng& rng,
                               double size_gate) {
  const Candidates cand = removable_candidates(scene, classes, size_gate);
  return weighted_pick(cand, std::vector<double>(cand.classes.size(), 1.0), rng);
}

std::optional<int> pick_sizebased(const Scene& scene,
                                  std::span<const ClassSpec> classes, Rng& rng,
                                  double size_gate) {
  const Candidates cand = removable_candidates(scene, classes, size_gate);
  double total_area = 0;
  for (double a : cand.areas) total_area += a;
  std::vector<double> weights(cand.classes.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] = total_area / cand.areas[i];
  return weighted_pick(cand, weights, rng);
}

std::optional<int> pick_hardneg(const Scene& scene,
                                std::span<const ClassSpec> classes,
                                const ClassLossTracker& tracker, Rng& rng,
                                double size_gate) {
  const Candidates cand = removable_candidates(scene, classes, size_gate);
  std::vector<double> weights(cand.classes.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] = 1.0 / tracker.average(cand.classes[i]);
  return weighted_pick(cand, weights, rng);
}

std::optional<int> pick_class(SamplerKind kind, const Scene& scene,
                              std::span<const ClassSpec> classes,
                              const ClassLossTracker& tracker, Rng& rng,
                              double size_gate) {
  switch (kind) {
    case SamplerKind::random:
      return pick_random(scene, classes, rng, size_gate);
    case SamplerKind::sizebased:
      return pick_sizebased(scene, classes, rng, size_gate);
    case SamplerKind::hardneg:
      return pick_hardneg(scene, classes, tracker, rng, size_gate);
  }
  return std::nullopt;
}

std::optional<AugmentedExample> make_augmented_example(
    const Scene& scene, std::span<const ClassSpec> classes, SamplerKind sampler,
    const ClassLossTracker& tracker, Rng& rng, TaskMode task_mode, int radius,
    const Backfill& policy, double size_gate) {
  const std::optional<int> picked =
      pick_class(sampler, scene, classes, tracker, rng, size_gate);
  if (!picked) return std::nullopt;

  AugmentedExample ex;
  ex.removed_class = *picked;
  ex.sampler = sampler;
  ex.edit = remove_object(scene, classes, *picked, radius, policy, size_gate);
  if (task_mode == TaskMode::classification) {
    for (int c : present_classes(scene))
      if (c != *picked) ex.class_labels.push_back(c);
  }
  return ex;
}

}  // namespace contextprobe
