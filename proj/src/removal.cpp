#include "contextprobe/removal.hpp"

#include "contextprobe/rng.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace contextprobe {

namespace {

const ClassSpec& class_for(std::span<const ClassSpec> classes, int class_id) {
  for (const ClassSpec& c : classes)
    if (c.class_id == class_id) return c;
  throw std::invalid_argument("unknown class id " + std::to_string(class_id));
}

/// Union mask over all instances of one class; empty optional when absent.
MaskPlane class_union_mask(const Scene& scene, int class_id, bool& found) {
  MaskPlane uni =
      MaskPlane::Constant(scene.labels.rows(), scene.labels.cols(), false);
  found = false;
  for (const ObjectInstance& obj : scene.objects) {
    if (obj.class_id != class_id) continue;
    uni = uni || obj.mask;
    found = true;
  }
  return uni;
}

void apply_backfill(Image& image, const MaskPlane& mask, const Backfill& policy,
                    const Scene& scene) {
  const Index h = image.rows(), w = image.cols();
  if (policy.kind == BackfillKind::oracle_background) {
    const Image bg = render_background(h, w, mix_seed(scene.seed, "background"));
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c)
        if (mask(r, c))
          for (int k = 0; k < 3; ++k) image.ch[k](r, c) = bg.ch[k](r, c);
    return;
  }
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      if (mask(r, c))
        for (int k = 0; k < 3; ++k) image.ch[k](r, c) = policy.value[k];
}

void mark_ignored(LabelPlane& labels, const MaskPlane& mask) {
  for (Index r = 0; r < labels.rows(); ++r)
    for (Index c = 0; c < labels.cols(); ++c)
      if (mask(r, c)) labels(r, c) = kIgnoreLabel;
}

MaskPlane checked_removal_mask(const Scene& scene,
                               std::span<const ClassSpec> classes, int class_id,
                               double size_gate) {
  bool found = false;
  MaskPlane uni = class_union_mask(scene, class_id, found);
  if (!found)
    throw std::invalid_argument("class " + std::to_string(class_id) +
                                " not present in scene " +
                                std::to_string(scene.scene_id));
  const ClassSpec& cls = class_for(classes, class_id);
  const double area = static_cast<double>(uni.count()) /
                      (scene.labels.rows() * scene.labels.cols());
  if (cls.is_stuff || area >= size_gate)
    throw std::invalid_argument("class " + std::to_string(class_id) +
                                " is not removable");
  return uni;
}

}  // namespace

MaskPlane dilate_mask(const MaskPlane& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilation radius must be >= 0");
  if (radius == 0) return mask;
  const Index h = mask.rows(), w = mask.cols();
  // square structuring element of side 2r+1, separable into two 1-d passes
  MaskPlane horiz = MaskPlane::Constant(h, w, false);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      const Index lo = std::max<Index>(0, c - radius);
      const Index hi = std::min<Index>(w - 1, c + radius);
      for (Index cc = lo; cc <= hi; ++cc) {
        if (mask(r, cc)) {
          horiz(r, c) = true;
          break;
        }
      }
    }
  }
  MaskPlane out = MaskPlane::Constant(h, w, false);
  for (Index r = 0; r < h; ++r) {
    const Index lo = std::max<Index>(0, r - radius);
    const Index hi = std::min<Index>(h - 1, r + radius);
    for (Index c = 0; c < w; ++c) {
      for (Index rr = lo; rr <= hi; ++rr) {
        if (horiz(rr, c)) {
          out(r, c) = true;
          break;
        }
      }
    }
  }
  return out;
}

bool is_removable(const ObjectInstance& obj, const ClassSpec& cls,
                  double size_gate) {
  return !cls.is_stuff && obj.area_fraction < size_gate;
}

std::vector<int> removable_classes(const Scene& scene,
                                   std::span<const ClassSpec> classes,
                                   double size_gate) {
  std::map<int, double> area;
  for (const ObjectInstance& obj : scene.objects)
    area[obj.class_id] += obj.area_fraction;  // instances are disjoint
  std::vector<int> out;
  for (const auto& [class_id, a] : area) {
    const ClassSpec& cls = class_for(classes, class_id);
    if (!cls.is_stuff && a < size_gate) out.push_back(class_id);
  }
  return out;
}

EditRecord remove_object(const Scene& scene, std::span<const ClassSpec> classes,
                         int class_id, int radius, const Backfill& policy,
                         double size_gate) {
  MaskPlane uni = checked_removal_mask(scene, classes, class_id, size_gate);

  EditRecord rec;
  rec.base_scene_id = scene.scene_id;
  rec.removed_class = class_id;
  rec.backfill = policy;
  rec.dilated_mask = dilate_mask(uni, radius);
  rec.edited_image = scene.image;
  rec.edited_labels = scene.labels;
  apply_backfill(rec.edited_image, rec.dilated_mask, policy, scene);
  mark_ignored(rec.edited_labels, rec.dilated_mask);
  return rec;
}

EditRecord false_edit(const Scene& scene, std::span<const ClassSpec> classes,
                      int class_id, int radius, const Backfill& policy,
                      double size_gate) {
  MaskPlane uni = checked_removal_mask(scene, classes, class_id, size_gate);
  const MaskPlane dilated = dilate_mask(uni, radius);

  const Index h = dilated.rows(), w = dilated.cols();
  MaskPlane flipped(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) flipped(r, c) = dilated(r, w - 1 - c);

  EditRecord rec;
  rec.base_scene_id = scene.scene_id;
  rec.removed_class = class_id;
  rec.backfill = policy;
  rec.dilated_mask = flipped;
  rec.edited_image = scene.image;
  rec.edited_labels = scene.labels;
  rec.is_control = true;
  rec.control_overlap = static_cast<double>((flipped && dilated).count()) /
                        static_cast<double>(dilated.count());
  apply_backfill(rec.edited_image, rec.dilated_mask, policy, scene);
  mark_ignored(rec.edited_labels, rec.dilated_mask);
  return rec;
}

std::vector<EditRecord> build_edited_set(const Scene& scene,
                                         std::span<const ClassSpec> classes,
                                         int radius, const Backfill& policy,
                                         double size_gate) {
  std::vector<EditRecord> out;
  for (int class_id : removable_classes(scene, classes, size_gate))
    out.push_back(
        remove_object(scene, classes, class_id, radius, policy, size_gate));
  return out;
}

}  // namespace contextprobe
