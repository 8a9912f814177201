#pragma once

#include "contextprobe/removal.hpp"
#include "contextprobe/scenegen.hpp"
#include "contextprobe/types.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace contextprobe::testing {

inline ClassSpec make_class(int id, ShapeKind shape, Color color, double smin,
                            double smax, bool stuff = false) {
  ClassSpec c;
  c.class_id = id;
  c.shape = shape;
  c.base_color = color;
  c.size_min = smin;
  c.size_max = smax;
  c.is_stuff = stuff;
  return c;
}

/// K-1 object classes with given anchors; p_cond entries as (given, add, p).
inline CoocSpec make_cooc(const std::vector<double>& anchors,
                          const std::vector<std::tuple<int, int, double>>& cond,
                          int max_objects = 8) {
  const int k = static_cast<int>(anchors.size()) + 1;
  CoocSpec co;
  co.num_classes = k;
  co.max_objects = max_objects;
  co.p_anchor.assign(k, 0.0);
  for (int i = 1; i < k; ++i) co.p_anchor[i] = anchors[i - 1];
  co.p_cond.assign(k, std::vector<double>(k, 0.0));
  for (const auto& [gi, ad, p] : cond) co.p_cond[gi][ad] = p;
  return co;
}

inline MaskPlane rect_mask(Index h, Index w, Index r0, Index c0, Index r1,
                           Index c1) {
  MaskPlane m = MaskPlane::Constant(h, w, false);
  for (Index r = r0; r <= r1; ++r)
    for (Index c = c0; c <= c1; ++c) m(r, c) = true;
  return m;
}

/// Consistent Scene built from explicit instance masks (masks must be
/// disjoint). Image is a real render so edit invariants are meaningful.
inline Scene manual_scene(Index h, Index w,
                          std::vector<std::pair<int, MaskPlane>> instances,
                          std::uint64_t seed = 123, std::int64_t scene_id = 0) {
  Scene sc;
  sc.scene_id = scene_id;
  sc.seed = seed;
  for (auto& [class_id, mask] : instances) {
    ObjectInstance obj;
    obj.class_id = class_id;
    obj.bbox = bounding_box(mask);
    obj.area_fraction = static_cast<double>(mask.count()) / (h * w);
    obj.color = Color{0.1f * class_id, 0.8f, 0.2f};
    obj.mask = std::move(mask);
    sc.objects.push_back(std::move(obj));
  }
  sc.image = render_scene(sc.objects, h, w, seed);
  sc.labels = LabelPlane::Zero(h, w);
  for (const ObjectInstance& obj : sc.objects)
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c)
        if (obj.mask(r, c)) sc.labels(r, c) = static_cast<std::uint16_t>(obj.class_id);
  return sc;
}

/// Fresh empty directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir =
      std::filesystem::temp_directory_path() / "contextprobe_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace contextprobe::testing
