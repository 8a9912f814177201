#pragma once

#include "contextprobe/removal.hpp"
#include "contextprobe/rng.hpp"
#include "contextprobe/scenegen.hpp"

#include <optional>
#include <span>
#include <vector>

namespace contextprobe {

enum class SamplerKind { random, sizebased, hardneg };

/// Per-class exponential moving average of observed cross-entropy loss,
/// clamped to a positive floor. Drives hard-negative removal sampling.
class ClassLossTracker {
 public:
  ClassLossTracker() = default;
  ClassLossTracker(int num_classes, double decay, double floor, double initial);

  void update(int class_id, double observed_loss);
  double average(int class_id) const { return avg_.at(class_id); }
  int num_classes() const { return static_cast<int>(avg_.size()); }

  static constexpr double kDefaultDecay = 0.9;
  static constexpr double kDefaultFloor = 1e-3;

 private:
  std::vector<double> avg_;
  double decay_ = kDefaultDecay;
  double floor_ = kDefaultFloor;
};

/// Uniform over removable classes present; nullopt when none is removable.
std::optional<int> pick_random(const Scene& scene,
                               std::span<const ClassSpec> classes, Rng& rng,
                               double size_gate = kDefaultSizeGate);

/// Probability proportional to (total removable area) / (class area),
/// favoring small objects.
std::optional<int> pick_sizebased(const Scene& scene,
                                  std::span<const ClassSpec> classes, Rng& rng,
                                  double size_gate = kDefaultSizeGate);

/// Probability proportional to 1 / l_avg(c): easy (low-loss) classes are
/// removed more often.
std::optional<int> pick_hardneg(const Scene& scene,
                                std::span<const ClassSpec> classes,
                                const ClassLossTracker& tracker, Rng& rng,
                                double size_gate = kDefaultSizeGate);

std::optional<int> pick_class(SamplerKind kind, const Scene& scene,
                              std::span<const ClassSpec> classes,
                              const ClassLossTracker& tracker, Rng& rng,
                              double size_gate = kDefaultSizeGate);

enum class TaskMode { classification, seg_ignore, seg_negative };

struct AugmentedExample {
  EditRecord edit;
  std::vector<int> class_labels;  // classification targets, removed class excluded
  int removed_class = 0;
  SamplerKind sampler = SamplerKind::random;
};

/// Picks a removal target with the sampler and applies the removal; nullopt
/// when the scene offers nothing removable.
std::optional<AugmentedExample> make_augmented_example(
    const Scene& scene, std::span<const ClassSpec> classes, SamplerKind sampler,
    const ClassLossTracker& tracker, Rng& rng, TaskMode task_mode, int radius,
    const Backfill& policy, double size_gate = kDefaultSizeGate);

}  // namespace contextprobe
