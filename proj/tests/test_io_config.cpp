#include "contextprobe/config.hpp"
#include "contextprobe/raster_io.hpp"

#include "contextprobe/rng.hpp"

#include <doctest.h>

#include <fstream>
#include <string>

#include "helpers.hpp"

using namespace contextprobe;
using namespace contextprobe::testing;

namespace {

const char* kValidConfig = R"({
  "dataset": {
    "canvas": [32, 32],
    "n_scenes": 12,
    "seed": 7,
    "max_objects": 4,
    "classes": [
      {"id": 1, "shape": "square", "color": [0.9, 0.2, 0.2], "size": [0.12, 0.2], "stuff": false, "p_anchor": 1.0},
      {"id": 2, "shape": "disc", "color": [0.2, 0.2, 0.9], "size": [0.12, 0.2], "stuff": false, "p_anchor": 0.5}
    ],
    "p_cond": [{"given": 2, "add": 1, "p": 0.9}]
  },
  "arch": {"task": "classifier", "channels": [8, 8], "strides": [2, 2]},
  "training": {"epochs": 2, "lr": 0.05, "momentum": 0.9, "batch": 8,
               "lambda_hinge": 1.0, "lambda_neg": 0.5, "const_fraction": 0.25, "seed": 1},
  "augmentation": {"mode": "baseline", "sampler": "random"},
  "removal": {"radius": 1, "backfill": "mask_only", "size_gate": 0.3},
  "metrics": {"alpha": 0.1},
  "splits": {"train_on": "full"}
})";

std::string replace_first(std::string text, const std::string& from,
                          const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("image raster round-trips bit-exactly") {
  Rng rng(7);
  Image img(13, 9);
  for (int k = 0; k < 3; ++k)
    for (Index r = 0; r < 13; ++r)
      for (Index c = 0; c < 9; ++c)
        img.ch[k](r, c) = static_cast<float>(rng.uniform());
  const auto dir = temp_dir("io_img");
  write_image(dir / "x.img", img);
  CHECK(bit_equal(read_image(dir / "x.img"), img));
}

TEST_CASE("label raster round-trips including the sentinel") {
  Rng rng(8);
  LabelPlane labels(11, 17);
  for (Index r = 0; r < 11; ++r)
    for (Index c = 0; c < 17; ++c)
      labels(r, c) = rng.uniform() < 0.1
                         ? kIgnoreLabel
                         : static_cast<std::uint16_t>(rng.uniform_int(5));
  const auto dir = temp_dir("io_lab");
  write_labels(dir / "x.lab", labels);
  CHECK((read_labels(dir / "x.lab") == labels).all());
}

TEST_CASE("mask raster round-trips at odd sizes") {
  Rng rng(9);
  MaskPlane mask(9, 13);  // 117 bits: exercises the final partial byte
  for (Index r = 0; r < 9; ++r)
    for (Index c = 0; c < 13; ++c) mask(r, c) = rng.uniform() < 0.4;
  const auto dir = temp_dir("io_msk");
  write_mask(dir / "x.msk", mask);
  CHECK((read_mask(dir / "x.msk") == mask).all());
}

TEST_CASE("wrong magic is rejected") {
  const auto dir = temp_dir("io_magic");
  {
    std::ofstream os(dir / "bad.img", std::ios::binary);
    os << "NOPE00000000";
  }
  CHECK_THROWS_AS(read_image(dir / "bad.img"), std::runtime_error);
}

TEST_CASE("checkpoint round-trips arch and float32 parameters") {
  ArchDescriptor arch;
  arch.task = Task::segmenter;
  arch.num_classes = 4;
  arch.in_h = 16;
  arch.in_w = 16;
  arch.convs = {{6, 1}, {5, 1}};
  const ParamVec p = init_params(arch, 99);
  const auto dir = temp_dir("io_ckpt");
  save_checkpoint(dir / "m.cpw", p);
  const ParamVec q = load_checkpoint(dir / "m.cpw");
  CHECK(q.arch.task == Task::segmenter);
  CHECK(q.arch.num_classes == 4);
  CHECK(q.arch.convs.size() == 2);
  CHECK(q.arch.convs[1].out_channels == 5);
  CHECK(q.init_seed == 99);
  REQUIRE(q.values.size() == p.values.size());
  for (Index i = 0; i < p.values.size(); ++i)
    CHECK(q.values[i] == static_cast<double>(static_cast<float>(p.values[i])));
}

TEST_CASE("dataset save/load round-trips scenes bit-exactly") {
  DatasetSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.classes = {
      make_class(1, ShapeKind::square, {0.9f, 0.2f, 0.2f}, 0.12, 0.2),
      make_class(2, ShapeKind::triangle, {0.2f, 0.9f, 0.2f}, 0.12, 0.2, true),
  };
  spec.cooc = make_cooc({1.0, 0.7}, {{1, 2, 0.4}});
  const Dataset ds = generate_dataset(spec, 8, 21);
  const auto dir = temp_dir("io_ds");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);

  CHECK(back.dataset_id == ds.dataset_id);
  CHECK(back.seed == ds.seed);
  CHECK(back.spec.classes.size() == 2);
  CHECK(back.spec.classes[1].is_stuff);
  CHECK(back.spec.cooc.p_cond[1][2] == 0.4);
  REQUIRE(back.scenes.size() == ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    CHECK(bit_equal(back.scenes[i].image, ds.scenes[i].image));
    CHECK((back.scenes[i].labels == ds.scenes[i].labels).all());
    REQUIRE(back.scenes[i].objects.size() == ds.scenes[i].objects.size());
    for (std::size_t o = 0; o < ds.scenes[i].objects.size(); ++o) {
      CHECK((back.scenes[i].objects[o].mask == ds.scenes[i].objects[o].mask).all());
      CHECK(back.scenes[i].objects[o].class_id == ds.scenes[i].objects[o].class_id);
    }
  }
}

TEST_CASE("config parses and validates a full document") {
  const ExperimentConfig cfg = config_from_json_text(kValidConfig);
  CHECK(cfg.dataset.classes.size() == 2);
  CHECK(cfg.n_scenes == 12);
  CHECK(cfg.arch.task == Task::classifier);
  CHECK(cfg.arch.num_classes == 3);
  CHECK(cfg.training.epochs == 2);
  CHECK(cfg.removal.backfill == BackfillKind::mask_only);
  CHECK(cfg.train_on == TrainSplit::full);
}

TEST_CASE("config rejects unknown keys, naming them") {
  const std::string text =
      replace_first(kValidConfig, "\"alpha\": 0.1", "\"alpha\": 0.1, \"alhpa\": 2");
  try {
    config_from_json_text(text);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("alhpa") != std::string::npos);
  }
}

TEST_CASE("config reports missing keys by name") {
  const std::string text = replace_first(kValidConfig, "\"epochs\": 2,", "");
  try {
    config_from_json_text(text);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }
}

TEST_CASE("config hash is invariant to key order") {
  // same document with every object's keys permuted
  const char* reordered = R"({
  "splits": {"train_on": "full"},
  "metrics": {"alpha": 0.1},
  "removal": {"size_gate": 0.3, "backfill": "mask_only", "radius": 1},
  "augmentation": {"sampler": "random", "mode": "baseline"},
  "training": {"seed": 1, "const_fraction": 0.25, "lambda_neg": 0.5,
               "lambda_hinge": 1.0, "batch": 8, "momentum": 0.9, "lr": 0.05,
               "epochs": 2},
  "arch": {"strides": [2, 2], "channels": [8, 8], "task": "classifier"},
  "dataset": {
    "p_cond": [{"p": 0.9, "add": 1, "given": 2}],
    "classes": [
      {"p_anchor": 1.0, "stuff": false, "size": [0.12, 0.2], "color": [0.9, 0.2, 0.2], "shape": "square", "id": 1},
      {"p_anchor": 0.5, "stuff": false, "size": [0.12, 0.2], "color": [0.2, 0.2, 0.9], "shape": "disc", "id": 2}
    ],
    "max_objects": 4,
    "seed": 7,
    "n_scenes": 12,
    "canvas": [32, 32]
  }
})";
  const ExperimentConfig a = config_from_json_text(kValidConfig);
  const ExperimentConfig b = config_from_json_text(reordered);
  CHECK(config_hash(a) == config_hash(b));
}

TEST_CASE("config enforces mode/task compatibility") {
  const std::string seg_mode =
      replace_first(kValidConfig, "\"mode\": \"baseline\"", "\"mode\": \"seg-neg\"");
  CHECK_THROWS_AS(config_from_json_text(seg_mode), std::invalid_argument);

  std::string cls_on_seg = kValidConfig;
  cls_on_seg = replace_first(cls_on_seg, "\"task\": \"classifier\"",
                             "\"task\": \"segmenter\"");
  cls_on_seg = replace_first(cls_on_seg, "\"strides\": [2, 2]", "\"strides\": [1, 1]");
  cls_on_seg = replace_first(cls_on_seg, "\"mode\": \"baseline\"",
                             "\"mode\": \"aug-const\"");
  CHECK_THROWS_AS(config_from_json_text(cls_on_seg), std::invalid_argument);
}

TEST_CASE("config: constant backfill requires its color, others reject it") {
  const std::string with_const = replace_first(
      kValidConfig, "\"backfill\": \"mask_only\"", "\"backfill\": \"constant\"");
  CHECK_THROWS_AS(config_from_json_text(with_const), std::invalid_argument);

  const std::string ok = replace_first(
      kValidConfig, "\"backfill\": \"mask_only\"",
      "\"backfill\": \"constant\", \"constant_color\": [0.1, 0.2, 0.3]");
  const ExperimentConfig cfg = config_from_json_text(ok);
  CHECK(cfg.removal.backfill == BackfillKind::constant);
  CHECK(cfg.removal.constant_color[2] == doctest::Approx(0.3f));

  const std::string stray = replace_first(
      kValidConfig, "\"backfill\": \"mask_only\"",
      "\"backfill\": \"mask_only\", \"constant_color\": [0.1, 0.2, 0.3]");
  CHECK_THROWS_AS(config_from_json_text(stray), std::invalid_argument);
}
