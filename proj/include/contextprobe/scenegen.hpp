#pragma once

#include "contextprobe/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace contextprobe {

enum class ShapeKind { disc, square, triangle };

/// One object category. Class id 0 is reserved for the background and never
/// appears in the class table; object classes occupy 1..K-1 densely.
struct ClassSpec {
  int class_id = 0;
  ShapeKind shape = ShapeKind::disc;
  Color base_color = {0.5f, 0.5f, 0.5f};
  double size_min = 0.1;  // fraction of min(H,W)
  double size_max = 0.2;
  bool is_stuff = false;  // excluded from removal
};

/// Pairwise co-occurrence control. Arrays are indexed by class id; row and
/// column 0 (background) must be zero.
struct CoocSpec {
  int num_classes = 0;               // K, background included
  std::vector<double> p_anchor;      // size K
  std::vector<std::vector<double>> p_cond;  // K x K, p_cond[i][j]: j added given i anchored
  int max_objects = 8;
};

struct DatasetSpec {
  Index height = 64;
  Index width = 64;
  std::vector<ClassSpec> classes;  // ids 1..K-1, ascending
  CoocSpec cooc;
};

/// Throws std::invalid_argument with a field-level message on the first
/// violated constraint.
void validate(const DatasetSpec& spec);

struct ObjectInstance {
  int class_id = 0;
  MaskPlane mask;
  Box bbox;
  double area_fraction = 0.0;  // mask popcount / (H*W)
  Color color = {0, 0, 0};     // flat fill after per-instance jitter
};

struct Scene {
  std::int64_t scene_id = 0;
  Image image;
  LabelPlane labels;  // 0 = background, otherwise class id
  std::vector<ObjectInstance> objects;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  std::vector<Scene> scenes;
  Color mean_color = {0, 0, 0};  // per-channel mean over all scene pixels
  std::string dataset_id;
};

/// Deterministic textured background (mid gray plus low-amplitude noise).
Image render_background(Index height, Index width, std::uint64_t seed);

/// Paints instances over the background; instances must be disjoint.
Image render_scene(std::span<const ObjectInstance> objects, Index height,
                   Index width, std::uint64_t scene_seed);

/// Pure function of (spec, seed). Guarantees at least one placed object,
/// retrying presence/placement with derived seeds; throws std::runtime_error
/// when no object can ever be placed.
Scene sample_scene(const DatasetSpec& spec, std::uint64_t seed,
                   std::int64_t scene_id);

Dataset generate_dataset(const DatasetSpec& spec, int n_scenes,
                         std::uint64_t seed);

/// Distinct object class ids present in the scene, ascending.
std::vector<int> present_classes(const Scene& scene);

struct Splits {
  std::vector<int> full;     // every scene index
  std::vector<int> cooccur;  // >= 2 object instances
  std::vector<int> single;   // exactly 1
};

Splits split_dataset(const Dataset& ds);

}  // namespace contextprobe
