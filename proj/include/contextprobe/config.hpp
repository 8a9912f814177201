#pragma once

#include "contextprobe/augment.hpp"
#include "contextprobe/model.hpp"
#include "contextprobe/removal.hpp"
#include "contextprobe/scenegen.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace contextprobe {

enum class TrainMode {
  baseline,
  aug_rand,           // classifier: edited companions with removed label dropped
  aug_const,          // classifier: ranking hinge over full edited sets
  seg_ignore,         // segmenter: edited companions, removed pixels ignored
  seg_neg,            // segmenter: ignore plus negative likelihood on removed class
  no_removal_ignore,  // segmenter ablation: labels ignored, pixels untouched
};

enum class TrainSplit { full, cooccur };

struct TrainingConfig {
  int epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 16;
  double lambda_hinge = 1.0;
  double lambda_neg = 0.5;
  double const_fraction = 0.25;  // share of images given a hinge constraint set
  std::uint64_t seed = 1;
};

struct AugmentationConfig {
  TrainMode mode = TrainMode::baseline;
  SamplerKind sampler = SamplerKind::random;
};

struct RemovalConfig {
  int radius = 2;
  BackfillKind backfill = BackfillKind::mask_only;
  Color constant_color = {0.5f, 0.5f, 0.5f};  // only for BackfillKind::constant
  double size_gate = kDefaultSizeGate;
};

struct MetricsConfig {
  double alpha = 0.10;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  int n_scenes = 100;
  std::uint64_t dataset_seed = 0;
  ArchDescriptor arch;  // in_h/in_w follow the dataset canvas
  TrainingConfig training;
  AugmentationConfig augmentation;
  RemovalConfig removal;
  MetricsConfig metrics;
  TrainSplit train_on = TrainSplit::full;
};

/// Parses and exhaustively validates a UTF-8 JSON config. Unknown keys and
/// missing required keys are errors naming the offending key; mode/task
/// compatibility is enforced. Throws std::invalid_argument.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_file(const std::filesystem::path& path);

/// Canonical (key-sorted) JSON rendering; equal for semantically equal
/// configs regardless of input key order.
std::string canonical_config_json(const ExperimentConfig& cfg);

/// Hex digest of the canonical rendering.
std::string config_hash(const ExperimentConfig& cfg);

/// Fills the fill color: dataset mean for mask_only, user color for constant.
Backfill resolve_backfill(const RemovalConfig& removal, const Color& dataset_mean);

}  // namespace contextprobe
