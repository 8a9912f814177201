#pragma once

#include "contextprobe/scenegen.hpp"
#include "contextprobe/types.hpp"

#include <span>
#include <vector>

namespace contextprobe {

enum class BackfillKind { mask_only, oracle_background, constant };

/// How removed pixels are filled. `value` is the fill color: for mask_only
/// callers pass the dataset mean color, for constant the user's color, and
/// oracle_background ignores it and re-renders the scene's own background.
struct Backfill {
  BackfillKind kind = BackfillKind::mask_only;
  Color value = {0.5f, 0.5f, 0.5f};
};

inline constexpr double kDefaultSizeGate = 0.30;

struct EditRecord {
  std::int64_t base_scene_id = 0;
  int removed_class = 0;
  MaskPlane dilated_mask;
  Backfill backfill;
  Image edited_image;
  LabelPlane edited_labels;  // dilated-mask pixels carry the ignore sentinel
  bool is_control = false;   // flipped-mask edit, object left in place
  double control_overlap = 0.0;  // |flipped n original| / |original|
};

/// Morphological dilation with a square structuring element of side 2r+1.
MaskPlane dilate_mask(const MaskPlane& mask, int radius);

/// Pre-dilation size gate: area below `size_gate` and not a stuff class.
bool is_removable(const ObjectInstance& obj, const ClassSpec& cls,
                  double size_gate = kDefaultSizeGate);

/// Classes whose combined instance area passes the gate, ascending.
std::vector<int> removable_classes(const Scene& scene,
                                   std::span<const ClassSpec> classes,
                                   double size_gate = kDefaultSizeGate);

/// Removes every instance of `class_id` (union of masks, dilated). Pixels
/// outside the dilated mask are bit-identical to the base scene. Throws if
/// the class is absent or not removable.
EditRecord remove_object(const Scene& scene, std::span<const ClassSpec> classes,
                         int class_id, int radius, const Backfill& policy,
                         double size_gate = kDefaultSizeGate);

/// Control edit: same dilated mask mirrored about the vertical midline, so
/// the object itself stays in the image unless the masks overlap.
EditRecord false_edit(const Scene& scene, std::span<const ClassSpec> classes,
                      int class_id, int radius, const Backfill& policy,
                      double size_gate = kDefaultSizeGate);

/// One record per removable class present, ascending class id. May be empty.
std::vector<EditRecord> build_edited_set(const Scene& scene,
                                         std::span<const ClassSpec> classes,
                                         int radius, const Backfill& policy,
                                         double size_gate = kDefaultSizeGate);

/// Flipped-mask controls that mostly landed back on themselves carry no
/// information and are excluded from control statistics.
inline bool degenerate_control(const EditRecord& rec) {
  return rec.is_control && rec.control_overlap > 0.5;
}

}  // namespace contextprobe
