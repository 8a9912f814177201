#include "contextprobe/scenegen.hpp"

#include "contextprobe/raster_io.hpp"
#include "contextprobe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace contextprobe {

namespace {

constexpr float kBackgroundGray = 0.5f;
constexpr float kBackgroundNoise = 0.04f;
constexpr double kColorJitter = 0.1;
constexpr int kPlacementTries = 64;
constexpr int kSceneAttempts = 16;
constexpr Index kMinCanvas = 32;

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

MaskPlane rasterize_shape(ShapeKind shape, double cy, double cx, double size,
                          Index h, Index w) {
  MaskPlane mask = MaskPlane::Constant(h, w, false);
  const double half = size / 2.0;
  const Index r0 = std::max<Index>(0, static_cast<Index>(std::floor(cy - half)) - 1);
  const Index r1 = std::min<Index>(h - 1, static_cast<Index>(std::ceil(cy + half)) + 1);
  const Index c0 = std::max<Index>(0, static_cast<Index>(std::floor(cx - half)) - 1);
  const Index c1 = std::min<Index>(w - 1, static_cast<Index>(std::ceil(cx + half)) + 1);
  for (Index r = r0; r <= r1; ++r) {
    for (Index c = c0; c <= c1; ++c) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      bool inside = false;
      switch (shape) {
        case ShapeKind::disc:
          inside = dy * dy + dx * dx <= half * half;
          break;
        case ShapeKind::square:
          inside = std::abs(dy) <= half && std::abs(dx) <= half;
          break;
        case ShapeKind::triangle: {
          // apex up: at depth t below the apex the half-width is t/2
          const double t = dy + half;
          inside = t >= 0.0 && t <= size && std::abs(dx) <= t / 2.0;
          break;
        }
      }
      if (inside) mask(r, c) = true;
    }
  }
  return mask;
}

/// Anchor draws first, then one conditional round triggered by the anchors;
/// classes already present are not re-drawn. Ascending id order throughout.
std::vector<int> sample_presence(const CoocSpec& cooc, Rng& rng) {
  const int k = cooc.num_classes;
  std::vector<char> present(k, 0);
  std::vector<int> anchored;
  for (int i = 1; i < k; ++i) {
    if (rng.bernoulli(cooc.p_anchor[i])) {
      present[i] = 1;
      anchored.push_back(i);
    }
  }
  for (int i : anchored) {
    for (int j = 1; j < k; ++j) {
      if (j == i || present[j]) continue;
      if (rng.bernoulli(cooc.p_cond[i][j])) present[j] = 1;
    }
  }
  std::vector<int> out;
  for (int i = 1; i < k; ++i)
    if (present[i]) out.push_back(i);
  if (static_cast<int>(out.size()) > cooc.max_objects)
    out.resize(cooc.max_objects);  // keep lowest ids
  return out;
}

Color jitter_color(const Color& base, Rng& rng) {
  Color c;
  for (int k = 0; k < 3; ++k) {
    const double v = base[k] + kColorJitter * (2.0 * rng.uniform() - 1.0);
    c[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return c;
}

struct SceneDraw {
  std::vector<ObjectInstance> objects;
};

SceneDraw draw_objects(const DatasetSpec& spec, std::uint64_t attempt_seed) {
  const Index h = spec.height, w = spec.width;
  Rng presence_rng(mix_seed(attempt_seed, "presence"));
  const std::vector<int> present = sample_presence(spec.cooc, presence_rng);

  SceneDraw draw;
  MaskPlane occupied = MaskPlane::Constant(h, w, false);
  for (int class_id : present) {
    const ClassSpec& cls = spec.classes[class_id - 1];
    Rng place_rng(mix_seed(mix_seed(attempt_seed, "place"), class_id));
    for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
      const double size =
          place_rng.uniform(cls.size_min, cls.size_max) * std::min(h, w);
      const Index margin = static_cast<Index>(std::ceil(size / 2.0)) + 1;
      if (h - 2 * margin <= 0 || w - 2 * margin <= 0) continue;
      const Index cy = margin + static_cast<Index>(place_rng.uniform_int(h - 2 * margin));
      const Index cx = margin + static_cast<Index>(place_rng.uniform_int(w - 2 * margin));
      MaskPlane mask = rasterize_shape(cls.shape, cy, cx, size, h, w);
      if (!mask.any()) continue;
      if ((mask && occupied).any()) continue;  // rejection: keep masks disjoint

      Rng color_rng(mix_seed(mix_seed(attempt_seed, "appearance"), class_id));
      ObjectInstance obj;
      obj.class_id = class_id;
      obj.bbox = bounding_box(mask);
      obj.area_fraction = static_cast<double>(mask.count()) / (h * w);
      obj.color = jitter_color(cls.base_color, color_rng);
      obj.mask = std::move(mask);
      occupied = occupied || obj.mask;
      draw.objects.push_back(std::move(obj));
      break;  // placed; a failed class is dropped from the scene
    }
  }
  return draw;
}

}  // namespace

void validate(const DatasetSpec& spec) {
  if (spec.height < kMinCanvas || spec.width < kMinCanvas)
    fail("dataset.canvas: height and width must be >= 32");
  if (spec.classes.empty()) fail("dataset.classes: at least one class required");
  const int k = static_cast<int>(spec.classes.size()) + 1;
  for (int i = 0; i < k - 1; ++i) {
    const ClassSpec& c = spec.classes[i];
    const std::string where = "dataset.classes[" + std::to_string(i) + "]";
    if (c.class_id != i + 1)
      fail(where + ".id: class ids must be 1..K-1, dense and ascending (0 is background)");
    for (int ch = 0; ch < 3; ++ch)
      if (c.base_color[ch] < 0.0f || c.base_color[ch] > 1.0f)
        fail(where + ".color: components must be in [0,1]");
    if (!(c.size_min > 0.0 && c.size_max < 1.0 && c.size_min <= c.size_max))
      fail(where + ".size: range must satisfy 0 < min <= max < 1");
    if (c.size_min * std::min(spec.height, spec.width) < 2.0)
      fail(where + ".size: objects would be smaller than 2 pixels");
  }
  const CoocSpec& co = spec.cooc;
  if (co.num_classes != k) fail("dataset.p_anchor: class count mismatch");
  if (static_cast<int>(co.p_anchor.size()) != k)
    fail("dataset.p_anchor: expected one entry per class");
  if (co.p_anchor[0] != 0.0) fail("dataset.p_anchor: background entry must be 0");
  for (double p : co.p_anchor)
    if (p < 0.0 || p > 1.0) fail("dataset.p_anchor: probabilities must be in [0,1]");
  if (static_cast<int>(co.p_cond.size()) != k) fail("dataset.p_cond: expected K rows");
  for (int i = 0; i < k; ++i) {
    if (static_cast<int>(co.p_cond[i].size()) != k)
      fail("dataset.p_cond: expected K columns");
    for (int j = 0; j < k; ++j) {
      const double p = co.p_cond[i][j];
      if (p < 0.0 || p > 1.0) fail("dataset.p_cond: probabilities must be in [0,1]");
      if ((i == 0 || j == 0) && p != 0.0)
        fail("dataset.p_cond: background row/column must be 0");
    }
  }
  if (co.max_objects < 1) fail("dataset.max_objects: must be >= 1");
}

Image render_background(Index height, Index width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(height, width);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const float v = kBackgroundGray +
                      kBackgroundNoise * static_cast<float>(2.0 * rng.uniform() - 1.0);
      img.ch[0](r, c) = v;
      img.ch[1](r, c) = v;
      img.ch[2](r, c) = v;
    }
  }
  return img;
}

Image render_scene(std::span<const ObjectInstance> objects, Index height,
                   Index width, std::uint64_t scene_seed) {
  Image img = render_background(height, width, mix_seed(scene_seed, "background"));
  for (const ObjectInstance& obj : objects) {
    for (Index r = obj.bbox.top; r <= obj.bbox.bottom; ++r)
      for (Index c = obj.bbox.left; c <= obj.bbox.right; ++c)
        if (obj.mask(r, c))
          for (int k = 0; k < 3; ++k) img.ch[k](r, c) = obj.color[k];
  }
  return img;
}

Scene sample_scene(const DatasetSpec& spec, std::uint64_t seed,
                   std::int64_t scene_id) {
  validate(spec);
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    const std::uint64_t aseed =
        attempt == 0 ? seed : mix_seed(mix_seed(seed, "retry"), attempt);
    SceneDraw draw = draw_objects(spec, aseed);
    if (draw.objects.empty()) continue;  // scenes must hold >= 1 object

    Scene scene;
    scene.scene_id = scene_id;
    scene.seed = aseed;
    scene.objects = std::move(draw.objects);
    scene.image = render_scene(scene.objects, spec.height, spec.width, aseed);
    scene.labels = LabelPlane::Zero(spec.height, spec.width);
    for (const ObjectInstance& obj : scene.objects)
      for (Index r = obj.bbox.top; r <= obj.bbox.bottom; ++r)
        for (Index c = obj.bbox.left; c <= obj.bbox.right; ++c)
          if (obj.mask(r, c)) scene.labels(r, c) = static_cast<std::uint16_t>(obj.class_id);
    return scene;
  }
  throw std::runtime_error(
      "scene generation failed: no object could be placed (canvas too small "
      "or presence probabilities all zero)");
}

namespace {

std::uint64_t hash_spec(const DatasetSpec& spec, int n_scenes, std::uint64_t seed) {
  std::uint64_t h = fnv1a(&seed, sizeof seed);
  auto fold = [&h](const void* p, std::size_t n) { h = fnv1a(p, n, h); };
  const std::int64_t dims[2] = {spec.height, spec.width};
  fold(dims, sizeof dims);
  fold(&n_scenes, sizeof n_scenes);
  for (const ClassSpec& c : spec.classes) {
    fold(&c.class_id, sizeof c.class_id);
    const int sh = static_cast<int>(c.shape);
    fold(&sh, sizeof sh);
    const float col[3] = {c.base_color[0], c.base_color[1], c.base_color[2]};
    fold(col, sizeof col);
    const double sz[2] = {c.size_min, c.size_max};
    fold(sz, sizeof sz);
    const char stuff = c.is_stuff ? 1 : 0;
    fold(&stuff, 1);
  }
  fold(spec.cooc.p_anchor.data(), spec.cooc.p_anchor.size() * sizeof(double));
  for (const auto& row : spec.cooc.p_cond) fold(row.data(), row.size() * sizeof(double));
  fold(&spec.cooc.max_objects, sizeof spec.cooc.max_objects);
  return h;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, int n_scenes,
                         std::uint64_t seed) {
  validate(spec);
  if (n_scenes < 1) throw std::invalid_argument("n_scenes must be >= 1");

  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.dataset_id = hex64(hash_spec(spec, n_scenes, seed));
  ds.scenes.reserve(n_scenes);
  double sum[3] = {0, 0, 0};
  for (int i = 0; i < n_scenes; ++i) {
    ds.scenes.push_back(
        sample_scene(spec, mix_seed(mix_seed(seed, "scene"), i), i));
    const Image& img = ds.scenes.back().image;
    for (int k = 0; k < 3; ++k) sum[k] += img.ch[k].cast<double>().sum();
  }
  const double total = static_cast<double>(n_scenes) * spec.height * spec.width;
  for (int k = 0; k < 3; ++k)
    ds.mean_color[k] = static_cast<float>(sum[k] / total);
  return ds;
}

std::vector<int> present_classes(const Scene& scene) {
  std::vector<int> out;
  for (const ObjectInstance& obj : scene.objects) out.push_back(obj.class_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Splits split_dataset(const Dataset& ds) {
  Splits s;
  for (int i = 0; i < static_cast<int>(ds.scenes.size()); ++i) {
    const std::size_t n = ds.scenes[i].objects.size();
    if (n == 0)
      throw std::invalid_argument("split_dataset: scene without objects");
    s.full.push_back(i);
    if (n >= 2)
      s.cooccur.push_back(i);
    else
      s.single.push_back(i);
  }
  return s;
}

}  // namespace contextprobe
